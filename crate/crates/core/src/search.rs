//! One-dimensional global minimization on a bounded interval: a uniform
//! coarse grid locates candidate basins, golden-section search refines each.

/// Golden ratio conjugate, (√5 − 1) / 2.
const INV_PHI: f64 = 0.618_033_988_749_894_8;
const MAX_CANDIDATES: usize = 16;

/// Values closer than this are treated as equal and the smaller `|t|` wins.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearch {
    /// Number of grid nodes, endpoints included.
    pub grid: usize,
    /// Golden-section stops once the bracket is narrower than this.
    pub tol: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self { grid: 257, tol: 1e-8 }
    }
}

impl LineSearch {
    pub fn nodes(&self, lo: f64, hi: f64) -> Vec<f64> {
        let n = self.grid.max(2);
        let step = (hi - lo) / (n - 1) as f64;
        (0..n).map(|j| if j + 1 == n { hi } else { lo + j as f64 * step }).collect()
    }
}

/// Picks `(t, f)` pairs in order of value, ties to the smaller `|t|`.
#[inline]
pub fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    if (a.1 - b.1).abs() <= TIE_TOL {
        a.0.abs() < b.0.abs()
    } else {
        a.1 < b.1
    }
}

/// Golden-section search of `f` on `[a, b]`. Returns the best point seen.
/// `None` values from `f` count as +∞.
pub fn golden_section<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> Option<f64>,
{
    let mut eval = |t: f64| f(t).unwrap_or(f64::INFINITY);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c);
            if fc < best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d);
            if fd < best.1 {
                best = (d, fd);
            }
        }
    }
    best
}

/// Global minimum of `f` over the grid `nodes` (sorted ascending) with
/// golden-section refinement of every local grid minimum whose value is
/// within `margin` of the best node.
///
/// `node_values[j]` must equal `f(nodes[j])` (callers may compute them
/// through a faster path); `None` marks nodes where `f` is undefined.
/// Returns `None` when every node is undefined.
pub fn refine_grid<F>(
    nodes: &[f64],
    node_values: &[Option<f64>],
    mut f: F,
    tol: f64,
    margin: impl Fn(f64) -> f64,
) -> Option<(f64, f64)>
where
    F: FnMut(f64) -> Option<f64>,
{
    debug_assert_eq!(nodes.len(), node_values.len());
    let n = nodes.len();
    let val = |j: usize| node_values[j].unwrap_or(f64::INFINITY);

    let mut best_node: Option<(f64, f64)> = None;
    for j in 0..n {
        if let Some(v) = node_values[j] {
            let cand = (nodes[j], v);
            if best_node.is_none_or(|b| better(cand, b)) {
                best_node = Some(cand);
            }
        }
    }
    let best_node = best_node?;
    let limit = best_node.1 + margin(best_node.1);

    let mut candidates: Vec<usize> = (0..n)
        .filter(|&j| {
            let v = val(j);
            v.is_finite()
                && v <= limit
                && (j == 0 || v <= val(j - 1))
                && (j + 1 == n || v <= val(j + 1))
        })
        .collect();
    candidates.sort_by(|&a, &b| val(a).total_cmp(&val(b)));
    candidates.truncate(MAX_CANDIDATES);

    // the best node is itself a local minimum, so `candidates` is non-empty
    let mut best: Option<(f64, f64)> = None;
    for j in candidates {
        let lo = nodes[j.saturating_sub(1)];
        let hi = nodes[(j + 1).min(n - 1)];
        let mut r = golden_section(&mut f, lo, hi, tol);
        if val(j) < r.1 {
            r = (nodes[j], val(j));
        }
        if best.is_none_or(|b| better(r, b)) {
            best = Some(r);
        }
    }
    best
}

/// Convenience wrapper evaluating `f` on the grid itself.
pub fn minimize_on_interval<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    search: &LineSearch,
    margin: impl Fn(f64) -> f64,
) -> Option<(f64, f64)>
where
    F: FnMut(f64) -> Option<f64>,
{
    let nodes = search.nodes(lo, hi);
    let values: Vec<Option<f64>> = nodes.iter().map(|t| f(*t)).collect();
    refine_grid(&nodes, &values, f, search.tol, margin)
}
