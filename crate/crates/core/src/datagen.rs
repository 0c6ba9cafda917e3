//! Synthetic articulated-hand data: noisy initial configurations and the
//! final configurations reached by a fixed, noisily executed action
//! sequence.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{AlgebraVector, GroupElement, GroupStructure};

pub const HORIZON: usize = 20;
pub const ACTION_STD: f64 = 0.05;
/// Train fraction of the default 2:1 split.
pub const SPLIT_RATIO: f64 = 2.0 / 3.0;

/// Kinematic chain and its frozen action sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    pub structure: GroupStructure,
    pub base_config: GroupElement,
    pub actions: Vec<AlgebraVector>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Per-coordinate variance of the configuration noise.
    pub config_sigma2: f64,
    /// Per-coordinate standard deviation of the action noise.
    pub action_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            config_sigma2: 0.02,
            action_sigma: 0.01,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    fn validate(&self) -> Result<()> {
        if !(self.config_sigma2 >= 0.0 && self.action_sigma >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise levels must be non-negative, got {} and {}",
                self.config_sigma2, self.action_sigma
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedDataset {
    pub x: Vec<GroupElement>,
    pub y: Vec<GroupElement>,
    /// Sorted indices of the training pairs.
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub spec: ChainSpec,
    pub noise: NoiseSpec,
    pub split_ratio: f64,
}

impl PairedDataset {
    pub fn structure(&self) -> &GroupStructure {
        &self.spec.structure
    }

    fn pick(v: &[GroupElement], idx: &[usize]) -> Vec<GroupElement> {
        idx.iter().map(|&i| v[i].clone()).collect()
    }

    pub fn train(&self) -> (Vec<GroupElement>, Vec<GroupElement>) {
        (Self::pick(&self.x, &self.train_idx), Self::pick(&self.y, &self.train_idx))
    }

    pub fn test(&self) -> (Vec<GroupElement>, Vec<GroupElement>) {
        (Self::pick(&self.x, &self.test_idx), Self::pick(&self.y, &self.test_idx))
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, s: &GroupStructure, std: f64) -> AlgebraVector {
    let c = (0..s.algebra_dim())
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    AlgebraVector::new(s.clone(), c).expect("finite draws")
}

/// Chain with identity base and `horizon` actions drawn once from
/// `Normal(0, action_std²)` per coordinate.
pub fn make_spec(structure: GroupStructure, horizon: usize, action_std: f64, seed: u64) -> ChainSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actions = (0..horizon)
        .map(|_| gaussian(&mut rng, &structure, action_std))
        .collect();
    ChainSpec {
        base_config: GroupElement::identity(&structure),
        structure,
        actions,
    }
}

/// One SO(3) wrist-side joint followed by 13 hinge joints.
pub fn make_hand_spec(seed: u64) -> ChainSpec {
    make_spec(GroupStructure::hand(), HORIZON, ACTION_STD, seed)
}

/// `xᵢ = base · exp(εᵢ)` with `εᵢ ~ Normal(0, config_sigma2 · I)`.
pub fn sample_initial_with<R: Rng + ?Sized>(
    spec: &ChainSpec,
    noise: &NoiseSpec,
    n: usize,
    rng: &mut R,
) -> Result<Vec<GroupElement>> {
    noise.validate()?;
    let std = noise.config_sigma2.sqrt();
    (0..n)
        .map(|_| spec.base_config.compose(&gaussian(rng, &spec.structure, std).exp()))
        .collect()
}

/// [`sample_initial_with`] on a generator seeded from `noise.seed`.
pub fn sample_initial(spec: &ChainSpec, noise: &NoiseSpec, n: usize) -> Result<Vec<GroupElement>> {
    sample_initial_with(spec, noise, n, &mut ChaCha8Rng::seed_from_u64(noise.seed))
}

/// `y = x · exp(a₁ + η₁) · … · exp(a_H + η_H)`.
pub fn roll_out<R: Rng + ?Sized>(
    spec: &ChainSpec,
    noise: &NoiseSpec,
    x: &GroupElement,
    rng: &mut R,
) -> Result<GroupElement> {
    noise.validate()?;
    let mut y = x.clone();
    for a in &spec.actions {
        let eta = gaussian(rng, &spec.structure, noise.action_sigma);
        y = y.compose(&a.add(&eta)?.exp())?;
    }
    Ok(y)
}

/// `n` pairs from one generator stream (initial configurations, then the
/// rollouts, then the shuffle), split with `round(n · split_ratio)` pairs
/// for training.
pub fn generate(spec: &ChainSpec, noise: &NoiseSpec, n: usize, split_ratio: f64) -> Result<PairedDataset> {
    if n < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 pairs, got {n}")));
    }
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(Error::InvalidInput(format!("split ratio {split_ratio} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let x = sample_initial_with(spec, noise, n, &mut rng)?;
    let y = x
        .iter()
        .map(|xi| roll_out(spec, noise, xi, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = ((n as f64 * split_ratio).round() as usize).clamp(1, n - 1);
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok(PairedDataset {
        x,
        y,
        train_idx,
        test_idx,
        spec: spec.clone(),
        noise: *noise,
        split_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{log_map, BlockKind};
    use crate::stats::riemannian_distance;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

    #[test]
    fn hand_spec_shape_and_determinism() {
        let a = make_hand_spec(7);
        assert_eq!(a.structure.algebra_dim(), 16);
        assert_eq!(a.actions.len(), HORIZON);
        assert_eq!(a, make_hand_spec(7));
        assert_ne!(a.actions, make_hand_spec(8).actions);
    }

    #[test]
    fn noiseless_rollout_matches_stepwise_product() {
        let spec = make_hand_spec(0);
        let quiet = NoiseSpec {
            config_sigma2: 0.0,
            action_sigma: 0.0,
            seed: 0,
        };
        let e = GroupElement::identity(&spec.structure);
        let y = roll_out(&spec, &quiet, &e, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        // oracle: multiply the raw block matrices in order
        let mut so3 = nalgebra::Matrix3::<f64>::identity();
        let mut angles = [0.0; 13];
        for a in &spec.actions {
            let c = a.coords();
            so3 *= crate::lie::so3_exp(&nalgebra::Vector3::new(c[0], c[1], c[2]));
            for k in 0..13 {
                angles[k] += c[3 + k];
            }
        }
        let emb = y.embedding();
        for (i, v) in so3.transpose().iter().enumerate() {
            assert!((emb[i] - v).abs() < 1e-12);
        }
        for k in 0..13 {
            assert!((emb[9 + 4 * k] - angles[k].cos()).abs() < 1e-12);
            assert!((emb[9 + 4 * k + 2] - angles[k].sin()).abs() < 1e-12);
        }
        // SO(3) angles stay well away from the cut
        let total = log_map(&y).unwrap();
        assert!(total.coords()[..3].iter().map(|c| c * c).sum::<f64>().sqrt() < std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn zero_noise_and_zero_actions() {
        let s = GroupStructure::new(vec![BlockKind::So3, BlockKind::So2]).unwrap();
        let spec = make_spec(s.clone(), 5, 0.0, 0);
        let quiet = NoiseSpec {
            config_sigma2: 0.0,
            action_sigma: 0.0,
            seed: 3,
        };
        let xs = sample_initial(&spec, &quiet, 4).unwrap();
        assert!(xs.iter().all(|x| *x == spec.base_config));
        let g = AlgebraVector::new(s, vec![0.1, 0.2, 0.3, 0.4]).unwrap().exp();
        let y = roll_out(&spec, &quiet, &g, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(riemannian_distance(&y, &g).unwrap() < 1e-15);
    }

    #[test]
    fn abelian_rollout_adds_angles() {
        let s = GroupStructure::so2(3).unwrap();
        let spec = make_spec(s, 20, 0.05, 2);
        let noise = NoiseSpec::default();
        let x = GroupElement::from_angles(&[0.1, -0.2, 0.3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = roll_out(&spec, &noise, &x, &mut rng).unwrap();
        // replay the same noise draws
        let mut replay = ChaCha8Rng::seed_from_u64(9);
        let mut expected = [0.1, -0.2, 0.3];
        for a in &spec.actions {
            for (k, e) in expected.iter_mut().enumerate() {
                let eta: f64 = replay.sample(StandardNormal);
                *e += a.coords()[k] + noise.action_sigma * eta;
            }
        }
        let got = log_map(&y).unwrap();
        for (g, e) in got.coords().iter().zip(expected) {
            assert!((g - crate::lie::wrap_angle(e)).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_noise_statistics() {
        let spec = make_hand_spec(0);
        let noise = NoiseSpec::default();
        let n = 10_000;
        let xs = sample_initial(&spec, &noise, n).unwrap();
        let logs: Vec<Vec<f64>> = xs.iter().map(|x| log_map(x).unwrap().into_coords()).collect();
        let sigma = noise.config_sigma2.sqrt();
        for j in 0..16 {
            let mean = logs.iter().map(|l| l[j]).sum::<f64>() / n as f64;
            let var = logs.iter().map(|l| (l[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt(), "coord {j}: {mean}");
            assert!((var / noise.config_sigma2 - 1.0).abs() < 0.1, "coord {j}: {var}");
        }
    }

    #[test]
    fn generate_split_and_determinism() {
        let spec = make_hand_spec(0);
        let noise = NoiseSpec::default();
        let d = generate(&spec, &noise, 1500, SPLIT_RATIO).unwrap();
        assert_eq!((d.train_idx.len(), d.test_idx.len()), (1000, 500));
        let mut all: Vec<usize> = d.train_idx.iter().chain(&d.test_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1500).collect::<Vec<_>>());
        assert!(d.x.iter().chain(&d.y).all(|g| g.is_valid(1e-9)));
        let min_gap = d
            .x
            .iter()
            .zip(&d.y)
            .map(|(x, y)| riemannian_distance(x, y).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(min_gap > 0.0);
        assert_eq!(d, generate(&spec, &noise, 1500, SPLIT_RATIO).unwrap());
        assert!(generate(&spec, &noise, 2, SPLIT_RATIO).is_err());
        assert!(generate(&spec, &noise, 10, 1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn generated_sets_are_valid_and_split_cleanly(
            seed in any::<u64>(),
            n in 3usize..40,
            ratio in 0.1f64..0.9,
            sigma2 in 0.0f64..0.5,
        ) {
            let s = GroupStructure::new(vec![BlockKind::So3, BlockKind::So2]).unwrap();
            let spec = make_spec(s, 5, ACTION_STD, seed);
            let noise = NoiseSpec { config_sigma2: sigma2, action_sigma: 0.01, seed };
            let d = generate(&spec, &noise, n, ratio).unwrap();
            prop_assert_eq!(d.x.len(), n);
            prop_assert_eq!(d.y.len(), n);
            prop_assert!(d.x.iter().chain(&d.y).all(|g| g.is_valid(1e-9)));
            let mut all: Vec<usize> = d.train_idx.iter().chain(&d.test_idx).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(d.train_idx.len(), ((n as f64 * ratio).round() as usize).clamp(1, n - 1));
            prop_assert_eq!(&d, &generate(&spec, &noise, n, ratio).unwrap());
        }
    }
}
