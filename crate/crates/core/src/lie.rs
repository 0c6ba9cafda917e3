//! Block-product rotation groups: SO(2)^a x SO(3)^b.
//!
//! A configuration of an articulated system is stored as an ordered list of
//! rotation matrices, one per joint. The matching Lie algebra vector is the
//! concatenation of per-block coordinates: one angle for an SO(2) block and a
//! rotation vector (axis times angle) for an SO(3) block.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `BᵀB = I` and `det B = 1` for a valid block.
pub const MANIFOLD_TOL: f64 = 1e-9;
/// Drift threshold above which `compose` re-orthonormalizes a block.
pub const DRIFT_TOL: f64 = 1e-12;
/// SO(3) angles closer than this to π are rejected by the logarithm.
pub const CUT_TOL: f64 = 1e-6;
const SMALL_ANGLE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    #[serde(rename = "SO2")]
    So2,
    #[serde(rename = "SO3")]
    So3,
}

impl BlockKind {
    pub const fn algebra_dim(self) -> usize {
        match self {
            BlockKind::So2 => 1,
            BlockKind::So3 => 3,
        }
    }

    pub const fn ambient_dim(self) -> usize {
        match self {
            BlockKind::So2 => 4,
            BlockKind::So3 => 9,
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockKind::So2 => f.write_str("SO2"),
            BlockKind::So3 => f.write_str("SO3"),
        }
    }
}

/// Ordered list of block kinds. Cheap to clone.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<BlockKind>", into = "Vec<BlockKind>")]
pub struct GroupStructure {
    blocks: Arc<[BlockKind]>,
    offsets: Arc<[usize]>,
    algebra_dim: usize,
    ambient_dim: usize,
}

impl GroupStructure {
    pub fn new(blocks: Vec<BlockKind>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidInput("group structure needs at least one block".into()));
        }
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut algebra_dim = 0;
        for b in &blocks {
            offsets.push(algebra_dim);
            algebra_dim += b.algebra_dim();
        }
        let ambient_dim = blocks.iter().map(|b| b.ambient_dim()).sum();
        Ok(Self {
            blocks: blocks.into(),
            offsets: offsets.into(),
            algebra_dim,
            ambient_dim,
        })
    }

    /// `n` planar joints.
    pub fn so2(n: usize) -> Result<Self> {
        Self::new(vec![BlockKind::So2; n])
    }

    /// One spherical joint followed by thirteen hinge joints.
    pub fn hand() -> Self {
        let mut blocks = vec![BlockKind::So3];
        blocks.extend(std::iter::repeat_n(BlockKind::So2, 13));
        Self::new(blocks).expect("non-empty")
    }

    pub fn blocks(&self) -> &[BlockKind] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn algebra_dim(&self) -> usize {
        self.algebra_dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Offset of block `k` inside a flat algebra coordinate vector.
    pub fn algebra_offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    pub fn is_abelian(&self) -> bool {
        self.blocks.iter().all(|b| *b == BlockKind::So2)
    }

    pub(crate) fn check_same(&self, other: &GroupStructure) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::StructureMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

impl fmt::Debug for GroupStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{b}")?;
        }
        f.write_str("]")
    }
}

impl TryFrom<Vec<BlockKind>> for GroupStructure {
    type Error = Error;
    fn try_from(blocks: Vec<BlockKind>) -> Result<Self> {
        Self::new(blocks)
    }
}

impl From<GroupStructure> for Vec<BlockKind> {
    fn from(s: GroupStructure) -> Self {
        s.blocks.to_vec()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Block {
    So2(Matrix2<f64>),
    So3(Matrix3<f64>),
}

impl Block {
    pub fn kind(&self) -> BlockKind {
        match self {
            Block::So2(_) => BlockKind::So2,
            Block::So3(_) => BlockKind::So3,
        }
    }

    fn identity(kind: BlockKind) -> Self {
        match kind {
            BlockKind::So2 => Block::So2(Matrix2::identity()),
            BlockKind::So3 => Block::So3(Matrix3::identity()),
        }
    }

    /// Largest entry of `|BᵀB − I|` combined with `|det B − 1|`.
    pub fn manifold_error(&self) -> f64 {
        match self {
            Block::So2(m) => {
                let e = (m.transpose() * m - Matrix2::identity()).amax();
                e.max((m.determinant() - 1.0).abs())
            }
            Block::So3(m) => {
                let e = (m.transpose() * m - Matrix3::identity()).amax();
                e.max((m.determinant() - 1.0).abs())
            }
        }
    }

    fn orthogonality_drift(&self) -> f64 {
        match self {
            Block::So2(m) => (m.transpose() * m - Matrix2::identity()).amax(),
            Block::So3(m) => (m.transpose() * m - Matrix3::identity()).amax(),
        }
    }

    fn reorthonormalized(&self) -> Self {
        match self {
            Block::So2(m) => {
                let a = (m[(1, 0)] - m[(0, 1)]).atan2(m[(0, 0)] + m[(1, 1)]);
                Block::So2(so2_matrix(a))
            }
            Block::So3(m) => Block::So3(nearest_rotation(m)),
        }
    }

    fn transpose(&self) -> Self {
        match self {
            Block::So2(m) => Block::So2(m.transpose()),
            Block::So3(m) => Block::So3(m.transpose()),
        }
    }

    fn entries(&self, out: &mut Vec<f64>) {
        // row-major
        match self {
            Block::So2(m) => {
                for r in 0..2 {
                    for c in 0..2 {
                        out.push(m[(r, c)]);
                    }
                }
            }
            Block::So3(m) => {
                for r in 0..3 {
                    for c in 0..3 {
                        out.push(m[(r, c)]);
                    }
                }
            }
        }
    }
}

/// A point of the product group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGroupElement", into = "RawGroupElement")]
pub struct GroupElement {
    structure: GroupStructure,
    blocks: Vec<Block>,
}

impl GroupElement {
    /// Builds an element from explicit blocks, checking kinds and the
    /// orthogonality/determinant invariants.
    pub fn from_blocks(structure: GroupStructure, blocks: Vec<Block>) -> Result<Self> {
        if blocks.len() != structure.num_blocks() {
            return Err(Error::LengthMismatch {
                left: blocks.len(),
                right: structure.num_blocks(),
            });
        }
        for (k, (b, kind)) in blocks.iter().zip(structure.blocks()).enumerate() {
            if b.kind() != *kind {
                return Err(Error::StructureMismatch(format!(
                    "block {k} is {} but structure says {kind}",
                    b.kind()
                )));
            }
            let err = b.manifold_error();
            if !(err <= MANIFOLD_TOL) {
                return Err(Error::InvalidInput(format!(
                    "block {k} is not a rotation (error {err:e})"
                )));
            }
        }
        Ok(Self { structure, blocks })
    }

    pub fn identity(structure: &GroupStructure) -> Self {
        Self {
            structure: structure.clone(),
            blocks: structure.blocks().iter().map(|k| Block::identity(*k)).collect(),
        }
    }

    /// Pure SO(2)^n element from a list of angles.
    pub fn from_angles(angles: &[f64]) -> Result<Self> {
        let structure = GroupStructure::so2(angles.len())?;
        Ok(Self {
            structure,
            blocks: angles.iter().map(|a| Block::So2(so2_matrix(*a))).collect(),
        })
    }

    pub fn structure(&self) -> &GroupStructure {
        &self.structure
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        self.structure.check_same(&other.structure)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| {
                let p = match (a, b) {
                    (Block::So2(a), Block::So2(b)) => Block::So2(a * b),
                    (Block::So3(a), Block::So3(b)) => Block::So3(a * b),
                    _ => unreachable!("structures already checked"),
                };
                if p.orthogonality_drift() > DRIFT_TOL {
                    p.reorthonormalized()
                } else {
                    p
                }
            })
            .collect();
        Ok(GroupElement {
            structure: self.structure.clone(),
            blocks,
        })
    }

    pub fn inverse(&self) -> GroupElement {
        GroupElement {
            structure: self.structure.clone(),
            blocks: self.blocks.iter().map(Block::transpose).collect(),
        }
    }

    /// `self⁻¹ · other`, the relative displacement used by the distance.
    pub fn between(&self, other: &GroupElement) -> Result<GroupElement> {
        self.inverse().compose(other)
    }

    pub fn log(&self) -> Result<AlgebraVector> {
        log_map(self)
    }

    /// Row-major concatenation of all block matrices (length `ambient_dim`).
    pub fn embedding(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.structure.ambient_dim());
        for b in &self.blocks {
            b.entries(&mut out);
        }
        out
    }

    /// Worst block violation of orthogonality or unit determinant.
    pub fn manifold_error(&self) -> f64 {
        self.blocks.iter().map(Block::manifold_error).fold(0.0, f64::max)
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.manifold_error() <= tol
    }
}

/// Tangent vector at the identity, in flat block coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraVector {
    structure: GroupStructure,
    coords: Vec<f64>,
}

impl AlgebraVector {
    pub fn new(structure: GroupStructure, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != structure.algebra_dim() {
            return Err(Error::LengthMismatch {
                left: coords.len(),
                right: structure.algebra_dim(),
            });
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("coordinate {i} is not finite")));
        }
        Ok(Self { structure, coords })
    }

    pub fn zeros(structure: &GroupStructure) -> Self {
        Self {
            structure: structure.clone(),
            coords: vec![0.0; structure.algebra_dim()],
        }
    }

    /// Unit vector along flat coordinate `i`.
    pub fn basis(structure: &GroupStructure, i: usize) -> Self {
        let mut v = Self::zeros(structure);
        v.coords[i] = 1.0;
        v
    }

    pub fn structure(&self) -> &GroupStructure {
        &self.structure
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &AlgebraVector) -> f64 {
        self.coords.iter().zip(&other.coords).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, s: f64) -> AlgebraVector {
        AlgebraVector {
            structure: self.structure.clone(),
            coords: self.coords.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add(&self, other: &AlgebraVector) -> Result<AlgebraVector> {
        self.structure.check_same(&other.structure)?;
        Ok(AlgebraVector {
            structure: self.structure.clone(),
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &AlgebraVector) -> Result<AlgebraVector> {
        self.add(&other.scaled(-1.0))
    }

    pub fn normalized(&self) -> Result<AlgebraVector> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::UnitNormViolation { norm: n });
        }
        Ok(self.scaled(1.0 / n))
    }

    /// Flips the sign so that the first coordinate with magnitude above
    /// `1e-12` is positive. Returns whether a flip happened.
    pub fn canonicalize_sign(&mut self) -> bool {
        if let Some(c) = self.coords.iter().find(|c| c.abs() > 1e-12) {
            if *c < 0.0 {
                self.coords.iter_mut().for_each(|c| *c = -*c);
                return true;
            }
        }
        false
    }

    pub fn exp(&self) -> GroupElement {
        exp_map(self)
    }
}

/// Exponential map, block by block (Rodrigues for SO(3)).
pub fn exp_map(v: &AlgebraVector) -> GroupElement {
    let s = &v.structure;
    let blocks = s
        .blocks()
        .iter()
        .enumerate()
        .map(|(k, kind)| {
            let o = s.algebra_offset(k);
            match kind {
                BlockKind::So2 => Block::So2(so2_matrix(v.coords[o])),
                BlockKind::So3 => Block::So3(so3_exp(&Vector3::new(
                    v.coords[o],
                    v.coords[o + 1],
                    v.coords[o + 2],
                ))),
            }
        })
        .collect();
    GroupElement {
        structure: s.clone(),
        blocks,
    }
}

/// Logarithm on the principal branch. SO(2) angles land in (−π, π].
pub fn log_map(g: &GroupElement) -> Result<AlgebraVector> {
    let mut coords = Vec::with_capacity(g.structure.algebra_dim());
    for (k, b) in g.blocks.iter().enumerate() {
        match b {
            Block::So2(m) => coords.push(so2_angle(m)),
            Block::So3(m) => {
                let w = so3_log(m).ok_or(Error::AngleAtCut {
                    block: k,
                    angle: so3_angle(m),
                })?;
                coords.extend_from_slice(w.as_slice());
            }
        }
    }
    Ok(AlgebraVector {
        structure: g.structure.clone(),
        coords,
    })
}

pub fn compose(a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
    a.compose(b)
}

pub fn inverse(g: &GroupElement) -> GroupElement {
    g.inverse()
}

pub fn identity(s: &GroupStructure) -> GroupElement {
    GroupElement::identity(s)
}

/// Wraps an angle into (−π, π].
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a - 2.0 * PI * (a / (2.0 * PI)).round();
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[inline]
pub fn so2_matrix(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

#[inline]
pub fn so2_angle(m: &Matrix2<f64>) -> f64 {
    let a = m[(1, 0)].atan2(m[(0, 0)]);
    if a == -PI {
        PI
    } else {
        a
    }
}

#[inline]
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rodrigues: `I + sinθ/θ W + (1 − cosθ)/θ² W²` with `W = hat(w)`, `θ = |w|`.
#[inline]
pub fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let (s, c) = theta.sin_cos();
        (s / theta, (1.0 - c) / theta2)
    };
    let k = hat(w);
    Matrix3::identity() + k * a + k * k * b
}

/// Rotation angle in [0, π], accurate near zero.
#[inline]
pub fn so3_angle(m: &Matrix3<f64>) -> f64 {
    let c = 0.5 * (m.trace() - 1.0);
    let s = 0.5 * skew_axis(m).norm();
    s.atan2(c)
}

#[inline]
fn skew_axis(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    )
}

/// Rotation vector of `m`, or `None` when the angle is within `CUT_TOL` of π.
pub fn so3_log(m: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let axis2 = skew_axis(m); // 2 sinθ · axis
    let s = 0.5 * axis2.norm();
    let c = 0.5 * (m.trace() - 1.0);
    let theta = s.atan2(c);
    if (PI - theta) < CUT_TOL {
        return None;
    }
    let factor = if theta < SMALL_ANGLE {
        // θ / (2 sinθ) ≈ (1 + θ²/6) / 2
        0.5 * (1.0 + theta * theta / 6.0)
    } else {
        0.5 * theta / theta.sin()
    };
    Some(axis2 * factor)
}

fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut d = Matrix3::identity();
        d[(2, 2)] = -1.0;
        r = u * d * vt;
    }
    r
}

#[derive(Serialize, Deserialize)]
struct RawGroupElement {
    structure: GroupStructure,
    blocks: Vec<Vec<f64>>,
}

impl TryFrom<RawGroupElement> for GroupElement {
    type Error = Error;
    fn try_from(raw: RawGroupElement) -> Result<Self> {
        if raw.blocks.len() != raw.structure.num_blocks() {
            return Err(Error::LengthMismatch {
                left: raw.blocks.len(),
                right: raw.structure.num_blocks(),
            });
        }
        let blocks = raw
            .structure
            .blocks()
            .iter()
            .zip(&raw.blocks)
            .map(|(kind, e)| {
                if e.len() != kind.ambient_dim() {
                    return Err(Error::LengthMismatch {
                        left: e.len(),
                        right: kind.ambient_dim(),
                    });
                }
                Ok(match kind {
                    BlockKind::So2 => Block::So2(Matrix2::from_row_slice(e)),
                    BlockKind::So3 => Block::So3(Matrix3::from_row_slice(e)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        GroupElement::from_blocks(raw.structure, blocks)
    }
}

impl From<GroupElement> for RawGroupElement {
    fn from(g: GroupElement) -> Self {
        let blocks = g
            .blocks
            .iter()
            .map(|b| {
                let mut v = Vec::new();
                b.entries(&mut v);
                v
            })
            .collect();
        RawGroupElement {
            structure: g.structure,
            blocks,
        }
    }
}
