//! Reconstruction errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::GroupElement;
use crate::stats::riemannian_distance;

/// Errors of group-valued predictions in both metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMse {
    /// Mean of `D²(ŷᵢ, yᵢ)`.
    pub intrinsic: f64,
    /// Mean squared difference per entry of the flattened block matrices.
    pub ambient: f64,
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(Error::InvalidInput("MSE of an empty set".into()));
    }
    Ok(())
}

pub fn mse_groups(pred: &[GroupElement], truth: &[GroupElement]) -> Result<GroupMse> {
    check_len(pred.len(), truth.len())?;
    let mut intrinsic = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        intrinsic += riemannian_distance(p, t)?.powi(2);
    }
    let flat: Vec<Vec<f64>> = pred.iter().map(GroupElement::embedding).collect();
    Ok(GroupMse {
        intrinsic: intrinsic / pred.len() as f64,
        ambient: mse_ambient(&flat, truth)?,
    })
}

/// Per-entry MSE of ambient predictions against the embedding of `truth`.
pub fn mse_ambient(pred: &[Vec<f64>], truth: &[GroupElement]) -> Result<f64> {
    check_len(pred.len(), truth.len())?;
    let flat: Vec<Vec<f64>> = truth.iter().map(GroupElement::embedding).collect();
    mse_flat(pred, &flat)
}

pub fn mse_flat(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, q) in a.iter().zip(b) {
        if p.len() != q.len() {
            return Err(Error::LengthMismatch {
                left: p.len(),
                right: q.len(),
            });
        }
        total += p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        count += p.len();
    }
    Ok(total / count as f64)
}
