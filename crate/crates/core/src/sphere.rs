//! Descent on products of unit spheres with finite-difference gradients.

/// Step controls shared by the generator optimizers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereStep {
    /// Central-difference step for the gradient.
    pub fd_step: f64,
    /// First trial rotation angle of the line search.
    pub initial_step: f64,
    pub max_halvings: usize,
}

impl Default for SphereStep {
    fn default() -> Self {
        Self {
            fd_step: 1e-5,
            initial_step: 0.1,
            max_halvings: 50,
        }
    }
}

/// Result of a successful descent step.
#[derive(Clone, Debug)]
pub struct Accepted {
    pub point: Vec<Vec<f64>>,
    pub value: f64,
}

/// Central-difference gradient of `f` at `x`, projected onto the tangent
/// space of each sphere factor.
pub fn tangent_gradient<F>(f: &mut F, x: &[Vec<f64>], h: f64) -> Vec<Vec<f64>>
where
    F: FnMut(&[Vec<f64>]) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad: Vec<Vec<f64>> = x.iter().map(|b| vec![0.0; b.len()]).collect();
    for b in 0..x.len() {
        for i in 0..x[b].len() {
            let orig = probe[b][i];
            probe[b][i] = orig + h;
            let fp = f(&probe);
            probe[b][i] = orig - h;
            let fm = f(&probe);
            probe[b][i] = orig;
            grad[b][i] = (fp - fm) / (2.0 * h);
        }
    }
    for (g, p) in grad.iter_mut().zip(x) {
        let radial: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
        g.iter_mut().zip(p).for_each(|(a, b)| *a -= radial * b);
    }
    grad
}

fn retract(x: &[Vec<f64>], dir: &[Vec<f64>], alpha: f64) -> Vec<Vec<f64>> {
    x.iter()
        .zip(dir)
        .map(|(p, d)| {
            let mut q: Vec<f64> = p.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
            let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            q.iter_mut().for_each(|c| *c /= n);
            q
        })
        .collect()
}

/// One steepest-descent step along the normalized tangent gradient.
///
/// Trial angles start at `initial_step` and halve until `f` decreases; the
/// halving then continues while it keeps improving, and the best trial is
/// kept. Returns `None` when no trial decreases `f` (stationary point).
pub fn descent_step<F>(f: &mut F, x: &[Vec<f64>], fx: f64, opts: &SphereStep) -> Option<Accepted>
where
    F: FnMut(&[Vec<f64>]) -> f64,
{
    let grad = tangent_gradient(f, x, opts.fd_step);
    let gnorm = grad.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if !(gnorm > 1e-300) || !gnorm.is_finite() {
        return None;
    }
    let dir: Vec<Vec<f64>> = grad.iter().map(|g| g.iter().map(|c| -c / gnorm).collect()).collect();

    let mut alpha = opts.initial_step;
    let mut found: Option<Accepted> = None;
    for _ in 0..opts.max_halvings {
        let cand = retract(x, &dir, alpha);
        let v = f(&cand);
        match &found {
            None if v < fx => {
                found = Some(Accepted {
                    point: cand,
                    value: v,
                })
            }
            None => {}
            Some(best) if v < best.value => {
                found = Some(Accepted {
                    point: cand,
                    value: v,
                })
            }
            Some(_) => break,
        }
        alpha *= 0.5;
    }
    found
}
