//! Quadrature rules: composite Gauss-Legendre in one dimension and over
//! the cubic box, adaptive radial integration, and the label integrator
//! shared by the oracle and the series evaluators.
//!
//! Label integrals `∫_{Λ^k} F(X) dX` are evaluated either on a product
//! grid (the same 3D rule for every label, so algebraic identities
//! between graph integrals survive discretisation exactly) or by plain
//! Monte Carlo with sharded seeded streams. Both reductions run in a fixed
//! order, so results do not depend on the thread count.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::Stream;
use crate::Vec3;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let order = NonZeroUsize::new(order.max(1)).unwrap();
    GaussLegendre::new(order)
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (x, w))
        .collect()
}

/// Composite rule with `panels` equal panels of `order` nodes on [a, b].
pub fn composite_rule(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let base = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for &(x, w) in &base {
            out.push((lo + 0.5 * h * (x + 1.0), 0.5 * h * w));
        }
    }
    out
}

/// Per-axis resolution of a product grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub panels: usize,
    pub order: usize,
}

impl GridSpec {
    pub fn nodes_per_axis(&self) -> usize {
        self.panels * self.order
    }
}

/// Monte-Carlo budget. `base_samples` is scaled by 4^k for k integrated labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McSpec {
    pub base_samples: u64,
    pub seed: u64,
    pub shards: u64,
}

impl McSpec {
    pub const MAX_SAMPLES: u64 = 200_000_000;

    pub fn samples_for(&self, labels: usize) -> u64 {
        let scale = 4u64.saturating_pow(labels as u32);
        self.base_samples.saturating_mul(scale).min(Self::MAX_SAMPLES)
    }
}

/// Integration backend selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuadratureSpec {
    /// Product grid for every label count.
    Grid(GridSpec),
    MonteCarlo(McSpec),
    /// Product grid up to `max_grid_labels` integrated labels, Monte Carlo beyond.
    Auto {
        grid: GridSpec,
        mc: McSpec,
        max_grid_labels: usize,
    },
}

/// Backend resolved for one label count.
#[derive(Clone, Copy, Debug)]
pub enum Backend {
    Grid(GridSpec),
    MonteCarlo(McSpec),
}

impl QuadratureSpec {
    pub fn backend_for(&self, labels: usize) -> Backend {
        match *self {
            QuadratureSpec::Grid(g) => Backend::Grid(g),
            QuadratureSpec::MonteCarlo(m) => Backend::MonteCarlo(m),
            QuadratureSpec::Auto {
                grid,
                mc,
                max_grid_labels,
            } => {
                if labels <= max_grid_labels {
                    Backend::Grid(grid)
                } else {
                    Backend::MonteCarlo(mc)
                }
            }
        }
    }

    pub fn grid(&self) -> Option<GridSpec> {
        match *self {
            QuadratureSpec::Grid(g) => Some(g),
            QuadratureSpec::Auto { grid, .. } => Some(grid),
            QuadratureSpec::MonteCarlo(_) => None,
        }
    }

    /// True when every label count is integrated on the grid.
    pub fn is_deterministic(&self) -> bool {
        matches!(self, QuadratureSpec::Grid(_))
    }
}

/// Tensor-product rule on the box [-side/2, side/2]^3.
#[derive(Clone, Debug)]
pub struct BoxRule {
    pub side: f64,
    pub nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl BoxRule {
    pub fn new(side: f64, spec: GridSpec) -> Self {
        Self::on_cube(side, 0.0, spec)
    }

    /// Rule on the cube of edge `side` centred at (c, c, c).
    pub fn on_cube(side: f64, center: f64, spec: GridSpec) -> Self {
        let axis = composite_rule(
            center - 0.5 * side,
            center + 0.5 * side,
            spec.panels,
            spec.order,
        );
        let n = axis.len();
        let mut nodes = Vec::with_capacity(n * n * n);
        let mut weights = Vec::with_capacity(n * n * n);
        for &(x, wx) in &axis {
            for &(y, wy) in &axis {
                for &(z, wz) in &axis {
                    nodes.push([x, y, z]);
                    weights.push(wx * wy * wz);
                }
            }
        }
        Self {
            side,
            nodes,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Smallest node spacing along an axis (used for under-resolution warnings).
    pub fn spacing(&self) -> f64 {
        let n = (self.len() as f64).cbrt().round() as usize;
        if n < 2 {
            return self.side;
        }
        self.side / n as f64
    }
}

/// Value with a standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    pub stderr: f64,
}

impl Integral {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }
}

/// Integrates `f` over `labels` points in the box.
///
/// `key` identifies the integral for seeding; the same key always yields
/// the same Monte-Carlo sample set.
pub fn integrate_labels<F>(
    labels: usize,
    side: f64,
    backend: Backend,
    rule: Option<&BoxRule>,
    key: &[u64],
    f: F,
) -> Integral
where
    F: Fn(&[Vec3]) -> f64 + Sync,
{
    if labels == 0 {
        return Integral::exact(f(&[]));
    }
    match backend {
        Backend::Grid(spec) => {
            let owned;
            let rule = match rule {
                Some(r) => r,
                None => {
                    owned = BoxRule::new(side, spec);
                    &owned
                }
            };
            Integral::exact(grid_sum(labels, rule, &f))
        }
        Backend::MonteCarlo(mc) => monte_carlo(labels, side, mc, key, &f),
    }
}

/// Σ over all node tuples of Π w · f, parallel over the first label with an
/// ordered reduction.
fn grid_sum<F>(labels: usize, rule: &BoxRule, f: &F) -> f64
where
    F: Fn(&[Vec3]) -> f64 + Sync,
{
    let g = rule.len();
    let partial: Vec<f64> = (0..g)
        .into_par_iter()
        .map(|a| {
            let mut idx = vec![0usize; labels];
            idx[0] = a;
            let mut pts = vec![rule.nodes[a]; labels];
            let mut acc = 0.0;
            loop {
                let mut w = 1.0;
                for (slot, &i) in idx.iter().enumerate() {
                    w *= rule.weights[i];
                    pts[slot] = rule.nodes[i];
                }
                if w != 0.0 {
                    acc += w * f(&pts);
                }
                // odometer over labels 1..k
                let mut d = labels;
                loop {
                    if d == 1 {
                        return acc;
                    }
                    d -= 1;
                    idx[d] += 1;
                    if idx[d] < g {
                        break;
                    }
                    idx[d] = 0;
                }
            }
        })
        .collect();
    partial.iter().sum()
}

fn monte_carlo<F>(labels: usize, side: f64, mc: McSpec, key: &[u64], f: &F) -> Integral
where
    F: Fn(&[Vec3]) -> f64 + Sync,
{
    let total = mc.samples_for(labels).max(2);
    let shards = mc.shards.max(1).min(total);
    let per = total / shards;
    let extra = total % shards;
    let moments: Vec<(f64, f64, u64)> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let n = per + u64::from(s < extra);
            let mut stream = Stream::new(mc.seed, key, s);
            let mut pts = vec![[0.0; 3]; labels];
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            for _ in 0..n {
                for p in pts.iter_mut() {
                    *p = stream.point_in_box(side);
                }
                let y = f(&pts);
                sum += y;
                sum2 += y * y;
            }
            (sum, sum2, n)
        })
        .collect();
    let (mut sum, mut sum2, mut n) = (0.0, 0.0, 0u64);
    for (s, s2, k) in moments {
        sum += s;
        sum2 += s2;
        n += k;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    let vol = side.powi(3 * labels as i32);
    Integral {
        value: vol * mean,
        stderr: vol * (var / nf).sqrt(),
    }
}

const ADAPT_ORDER: usize = 15;

/// Adaptive Gauss-Legendre on [a, b] with bisection until the absolute
/// difference between one panel and its two halves is below `tol`.
pub fn integrate_1d<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let rule = gauss_legendre(ADAPT_ORDER);
    let whole = panel(&rule, f, a, b);
    adapt(&rule, f, a, b, whole, tol, 0)
}

fn panel<F: Fn(f64) -> f64>(rule: &[(f64, f64)], f: &F, a: f64, b: f64) -> f64 {
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    h * rule.iter().map(|&(x, w)| w * f(c + h * x)).sum::<f64>()
}

fn adapt<F: Fn(f64) -> f64>(
    rule: &[(f64, f64)],
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let left = panel(rule, f, a, m);
    let right = panel(rule, f, m, b);
    let both = left + right;
    if (both - whole).abs() <= tol || depth >= 48 || (b - a) < 1e-14 * a.abs().max(1.0) {
        return both;
    }
    adapt(rule, f, a, m, left, 0.5 * tol, depth + 1)
        + adapt(rule, f, m, b, right, 0.5 * tol, depth + 1)
}

/// Integrates over [a, b] split at the given interior breakpoints.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let pieces = (pts.len() - 1).max(1) as f64;
    pts.windows(2)
        .map(|w| integrate_1d(f, w[0], w[1], tol / pieces))
        .sum()
}

/// Least-squares slope of log(y) against log(x).
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_rule_volume_is_exact() {
        let rule = BoxRule::new(3.0, GridSpec { panels: 2, order: 3 });
        assert_eq!(rule.len(), 216);
        assert!((rule.volume() - 27.0).abs() < 1e-12);
    }

    #[test]
    fn grid_integrates_polynomials_exactly() {
        let backend = Backend::Grid(GridSpec { panels: 1, order: 3 });
        // ∫_{[-1,1]^3} x² dx = 8/3 · ... (2/3)·2·2
        let r = integrate_labels(1, 2.0, backend, None, &[], |p| p[0][0] * p[0][0]);
        assert!((r.value - 8.0 / 3.0).abs() < 1e-13);
        // two labels: ∫∫ (x1·x2)² = (8/3)²
        let r = integrate_labels(2, 2.0, backend, None, &[], |p| {
            (p[0][0] * p[1][0]).powi(2)
        });
        assert!((r.value - 64.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_is_unbiased_and_reproducible() {
        let mc = McSpec {
            base_samples: 20_000,
            seed: 3,
            shards: 8,
        };
        let f = |p: &[Vec3]| p[0][0] * p[0][0];
        let a = integrate_labels(1, 2.0, Backend::MonteCarlo(mc), None, &[9], f);
        let b = integrate_labels(1, 2.0, Backend::MonteCarlo(mc), None, &[9], f);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert!((a.value - 8.0 / 3.0).abs() < 4.0 * a.stderr);
    }

    #[test]
    fn adaptive_handles_breakpoints() {
        let f = |r: f64| if r < 1.0 { r * r } else { 0.0 };
        let v = integrate_pieces(&f, 0.0, 2.0, &[1.0], 1e-13);
        assert!((v - 1.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1e-1, 1e-2, 1e-3];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x * x).collect();
        let (s, _) = loglog_slope(&xs, &ys);
        assert!((s - 2.0).abs() < 1e-12);
    }
}
