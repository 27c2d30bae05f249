//! The tree weight w, the radial majorant G and the bound checks built on
//! them.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lambert::lambert_w0_from_gap;
use crate::oracle::{rho_m_direct, Oracle, OracleSettings};
use crate::potential::{activity_bound, log_grid, regularity_constant, Interaction};
use crate::quadrature::{composite_rule, integrate_pieces};
use crate::series::SeriesContext;
use crate::{dist, EnsembleParams, Error, PairPotential, Result, Vec3};

/// Spacing of the Gauss-Legendre panels in q, in units of 1/length scale.
const Q_PANEL: f64 = 0.05;
/// Cut-off of the inverse transform, in units of 1/length scale.
const Q_MAX: f64 = 50.0;
const Q_ORDER: usize = 8;
/// Relative tolerance for small negative values of G.
pub const NEGATIVE_LOBE_TOL: f64 = 1e-8;

/// w = −W(−zc_βe^{2βB})/c_β. Admissible up to and including z_max.
pub fn tree_weight_w(z: f64, c_beta: f64, b: f64, beta: f64) -> Result<f64> {
    if !(z >= 0.0) || !(c_beta >= 0.0) {
        return Err(Error::Domain(format!("need z ≥ 0 and c_β ≥ 0, got {z}, {c_beta}")));
    }
    if c_beta == 0.0 {
        return Ok(z * (2.0 * beta * b).exp());
    }
    let z_max = activity_bound(c_beta, b, beta);
    let ratio = z / z_max;
    if ratio > 1.0 + 1e-15 {
        return Err(Error::Admissibility { z, z_max });
    }
    // 1 + e·x with x = −zc_βe^{2βB} equals 1 − z/z_max
    let w0 = lambert_w0_from_gap((1.0 - ratio).max(0.0))?;
    Ok(-w0 / c_beta)
}

/// Model-derived constants shared by every majorant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MajorantConstants {
    pub w: f64,
    pub c_beta: f64,
    pub b: f64,
    pub z: f64,
    pub beta: f64,
}

impl MajorantConstants {
    pub fn new(pot: &PairPotential, params: &EnsembleParams) -> Result<Self> {
        let c_beta = regularity_constant(pot, params.beta)?;
        let b = pot.b()?;
        let w = tree_weight_w(params.activity_z, c_beta, b, params.beta)?;
        Ok(Self {
            w,
            c_beta,
            b,
            z: params.activity_z,
            beta: params.beta,
        })
    }

    /// Ĝ(0) = w²c_β/(1 − wc_β).
    pub fn g_hat0(&self) -> Result<f64> {
        let den = 1.0 - self.w * self.c_beta;
        if !(den > 0.0) {
            return Err(Error::Admissibility {
                z: self.z,
                z_max: activity_bound(self.c_beta, self.b, self.beta),
            });
        }
        Ok(self.w * self.w * self.c_beta / den)
    }

    fn e4(&self) -> f64 {
        (-4.0 * self.beta * self.b).exp()
    }
}

/// How a radial function continues past the last grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailModel {
    /// Identically zero beyond the grid.
    Zero,
    /// A·e^{−k r}.
    Exponential { amplitude: f64, rate: f64 },
    /// A·r^{−p}.
    PowerLaw { amplitude: f64, exponent: f64 },
}

impl TailModel {
    fn at(&self, r: f64) -> f64 {
        match *self {
            TailModel::Zero => 0.0,
            TailModel::Exponential { amplitude, rate } => amplitude * (-rate * r).exp(),
            TailModel::PowerLaw { amplitude, exponent } => amplitude * r.powf(-exponent),
        }
    }

    /// 4π∫_R^∞ r² tail(r) dr (∞ when it diverges).
    fn radial_mass(&self, r0: f64) -> f64 {
        match *self {
            TailModel::Zero => 0.0,
            TailModel::Exponential { amplitude, rate } => {
                4.0 * PI
                    * amplitude
                    * (-rate * r0).exp()
                    * (r0 * r0 / rate + 2.0 * r0 / (rate * rate) + 2.0 / rate.powi(3))
            }
            TailModel::PowerLaw { amplitude, exponent } => {
                if exponent > 3.0 {
                    4.0 * PI * amplitude * r0.powf(3.0 - exponent) / (exponent - 3.0)
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Values of a radial function on an increasing grid of radii (or of |ξ|).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialFunction {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub tail_model: TailModel,
    /// Quadrature weights when the grid is a quadrature rule.
    #[serde(skip)]
    pub weights: Option<Vec<f64>>,
}

impl RadialFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, tail_model: TailModel) -> Result<Self> {
        if grid.len() != values.len() || grid.is_empty() {
            return Err(Error::Precondition("grid and values must have equal nonzero length".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("grid must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("radial function has non-finite values".into()));
        }
        Ok(Self {
            grid,
            values,
            tail_model,
            weights: None,
        })
    }

    /// Linear interpolation inside the grid, tail model beyond it.
    pub fn at(&self, r: f64) -> f64 {
        let n = self.grid.len();
        if r <= self.grid[0] {
            return self.values[0];
        }
        if r >= self.grid[n - 1] {
            return if r == self.grid[n - 1] {
                self.values[n - 1]
            } else {
                self.tail_model.at(r)
            };
        }
        let i = self.grid.partition_point(|&x| x <= r);
        let (x0, x1) = (self.grid[i - 1], self.grid[i]);
        let t = (r - x0) / (x1 - x0);
        self.values[i - 1] * (1.0 - t) + self.values[i] * t
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// 4π∫r² g dr by the trapezoid rule on the grid plus the tail model.
    pub fn radial_integral(&self) -> f64 {
        let body: f64 = self
            .grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(r, v)| 0.5 * (r[1] - r[0]) * (r[0] * r[0] * v[0] + r[1] * r[1] * v[1]))
            .sum();
        4.0 * PI * body + self.tail_model.radial_mass(*self.grid.last().unwrap())
    }

    /// 4π∫_{r0}^∞ r² g dr: trapezoid on the grid beyond r0 plus the tail model.
    pub fn radial_integral_beyond(&self, r0: f64) -> f64 {
        let last = *self.grid.last().unwrap();
        if r0 >= last {
            return self.tail_model.radial_mass(r0);
        }
        let mut xs = vec![r0];
        xs.extend(self.grid.iter().copied().filter(|&r| r > r0));
        let body: f64 = xs
            .windows(2)
            .map(|r| {
                let (a, b) = (self.at(r[0]), self.at(r[1]));
                0.5 * (r[1] - r[0]) * (r[0] * r[0] * a + r[1] * r[1] * b)
            })
            .sum();
        4.0 * PI * body + self.tail_model.radial_mass(last)
    }

    /// Two-column CSV preceded by a JSON comment line with the tail model.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# {}\n", serde_json::to_string(&self.tail_model).unwrap());
        s.push_str("r,value\n");
        for (r, v) in self.grid.iter().zip(&self.values) {
            s.push_str(&format!("{r:.17e},{v:.17e}\n"));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, head) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty input".into(),
        })?;
        let tail: TailModel = serde_json::from_str(head.trim_start_matches('#').trim()).map_err(|e| {
            Error::Parse {
                line: 1,
                msg: e.to_string(),
            }
        })?;
        let (mut grid, mut values) = (Vec::new(), Vec::new());
        for (i, line) in lines {
            if line.trim().is_empty() || line.starts_with("r,") {
                continue;
            }
            let bad = |msg: String| Error::Parse { line: i + 1, msg };
            let (a, b) = line.split_once(',').ok_or_else(|| bad("expected two columns".into()))?;
            grid.push(a.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?);
            values.push(b.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?);
        }
        Self::new(grid, values, tail)
    }

    fn fit_tail(grid: &[f64], values: &[f64]) -> TailModel {
        let n = grid.len();
        if n < 2 {
            return TailModel::Zero;
        }
        let (r0, r1, v0, v1) = (grid[n - 2], grid[n - 1], values[n - 2], values[n - 1]);
        if v1 == 0.0 && v0 == 0.0 {
            return TailModel::Zero;
        }
        if v0 > v1 && v1 > 0.0 {
            let rate = (v0 / v1).ln() / (r1 - r0);
            TailModel::Exponential {
                amplitude: v1 * (rate * r1).exp(),
                rate,
            }
        } else {
            TailModel::Zero
        }
    }
}

/// Breakpoints of |f| for quadrature.
fn f_breaks(pot: &PairPotential) -> Vec<f64> {
    let mut b = pot.breakpoints();
    b.push(pot.length_scale());
    b.retain(|x| x.is_finite() && *x > 0.0);
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.dedup();
    b
}

/// Outer radius for radial integrals of |f|.
fn f_support(pot: &PairPotential) -> f64 {
    let r = pot.range();
    if r.is_finite() {
        r
    } else {
        60.0 * pot.length_scale()
    }
}

fn hat_at(pot: &PairPotential, beta: f64, c_beta: f64, q: f64) -> f64 {
    if q == 0.0 {
        return c_beta;
    }
    let rmax = f_support(pot);
    if rmax == 0.0 {
        return 0.0;
    }
    let half = 0.5 / q;
    let mut breaks = f_breaks(pot);
    let mut x = half;
    while x < rmax {
        breaks.push(x);
        x += half;
    }
    let g = |r: f64| r * pot.mayer(r, beta).abs() * (2.0 * PI * q * r).sin();
    2.0 / q * integrate_pieces(&g, 0.0, rmax, &breaks, 1e-13 * c_beta.max(1e-300))
}

/// ĥat|f|(q) at the given |ξ| values.
pub fn hat_abs_f(pot: &PairPotential, beta: f64, xi_grid: &[f64]) -> Result<RadialFunction> {
    let c_beta = regularity_constant(pot, beta)?;
    let values: Vec<f64> = xi_grid.par_iter().map(|&q| hat_at(pot, beta, c_beta, q)).collect();
    let tail = if c_beta == 0.0 {
        TailModel::Zero
    } else {
        TailModel::PowerLaw {
            amplitude: c_beta,
            exponent: 2.0,
        }
    };
    RadialFunction::new(xi_grid.to_vec(), values, tail)
}

/// ĥat|f| on the Gauss-Legendre q rule used by the inverse transform.
pub fn hat_abs_f_quadrature(pot: &PairPotential, beta: f64) -> Result<RadialFunction> {
    let l = pot.length_scale();
    let qmax = Q_MAX / l;
    let panels = (Q_MAX / Q_PANEL).round() as usize;
    let rule = composite_rule(0.0, qmax, panels, Q_ORDER);
    let (q, wts): (Vec<f64>, Vec<f64>) = rule.into_iter().unzip();
    let mut h = hat_abs_f(pot, beta, &q)?;
    h.weights = Some(wts);
    Ok(h)
}

/// Default radii for G: 0, a log grid and both sides of every breakpoint.
pub fn default_r_grid(pot: &PairPotential, points: usize) -> Vec<f64> {
    let l = pot.length_scale();
    let rmax = 12.0 * l.max(if pot.range().is_finite() { pot.range() } else { l });
    let mut g = vec![0.0];
    g.extend(log_grid(1e-3 * l, rmax, points));
    for b in f_breaks(pot) {
        if b < rmax {
            g.push(b * (1.0 - 1e-9));
            g.push(b * (1.0 + 1e-9));
        }
    }
    g.sort_by(|x, y| x.partial_cmp(y).unwrap());
    g.dedup();
    g
}

/// G = w²|f| + G₂ where G₂ is the inverse transform of w³ĥ²/(1 − wĥ).
#[derive(Clone, Debug)]
pub struct GMajorant {
    pub constants: MajorantConstants,
    pub g: RadialFunction,
    pub g_hat0: f64,
    pot: PairPotential,
    /// (q, weight·4πq²·Ĝ₂(q))
    kernel: Vec<(f64, f64)>,
}

impl GMajorant {
    /// Exact evaluation at r (the |f| part is not interpolated).
    pub fn at(&self, r: f64) -> f64 {
        let w = self.constants.w;
        w * w * self.pot.mayer(r, self.constants.beta).abs() + self.g2(r)
    }

    pub fn at_points(&self, a: Vec3, b: Vec3) -> f64 {
        self.at(dist(a, b))
    }

    fn g2(&self, r: f64) -> f64 {
        self.kernel
            .iter()
            .map(|&(q, k)| {
                let x = 2.0 * PI * q * r;
                k * if x.abs() < 1e-8 { 1.0 } else { x.sin() / x }
            })
            .sum()
    }

    pub fn max(&self) -> f64 {
        self.g.max()
    }
}

/// Builds G on `r_grid` from ĥat|f| on a quadrature grid in q.
pub fn g_majorant(
    constants: &MajorantConstants,
    pot: &PairPotential,
    hatf: &RadialFunction,
    r_grid: &[f64],
) -> Result<GMajorant> {
    let w = constants.w;
    let g_hat0 = constants.g_hat0()?;
    let sup = hatf.max().max(constants.c_beta);
    if !(w * sup < 1.0) {
        return Err(Error::Admissibility {
            z: constants.z,
            z_max: activity_bound(constants.c_beta, constants.b, constants.beta),
        });
    }
    let weights = match &hatf.weights {
        Some(wt) => wt.clone(),
        None => trapezoid_weights(&hatf.grid),
    };
    let kernel: Vec<(f64, f64)> = hatf
        .grid
        .iter()
        .zip(&hatf.values)
        .zip(&weights)
        .map(|((&q, &h), &wt)| (q, wt * 4.0 * PI * q * q * w.powi(3) * h * h / (1.0 - w * h)))
        .collect();
    let mut out = GMajorant {
        constants: *constants,
        g: RadialFunction::new(vec![0.0], vec![0.0], TailModel::Zero)?,
        g_hat0,
        pot: *pot,
        kernel,
    };
    let values: Vec<f64> = r_grid.par_iter().map(|&r| out.at(r)).collect();
    let tail = if w == 0.0 {
        TailModel::Zero
    } else {
        RadialFunction::fit_tail(r_grid, &values)
    };
    out.g = RadialFunction::new(r_grid.to_vec(), values, tail)?;
    Ok(out)
}

/// G with the default q rule and r grid.
pub fn g_majorant_default(pot: &PairPotential, params: &EnsembleParams) -> Result<GMajorant> {
    let constants = MajorantConstants::new(pot, params)?;
    let hat = hat_abs_f_quadrature(pot, params.beta)?;
    g_majorant(&constants, pot, &hat, &default_r_grid(pot, 512))
}

fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { x[i] - x[i - 1] } else { 0.0 };
            let right = if i + 1 < n { x[i + 1] - x[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// The G(ξ) ≥ 0, bounded, integrable and decaying checks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PropositionGReport {
    pub min_value: f64,
    pub min_at: f64,
    pub max_value: f64,
    pub integral: f64,
    pub nonnegative: bool,
    pub bounded: bool,
    pub integrable: bool,
    pub decays: bool,
    pub passed: bool,
}

pub fn check_proposition_g(g: &RadialFunction) -> PropositionGReport {
    let (mut min_value, mut min_at) = (f64::INFINITY, 0.0);
    for (&r, &v) in g.grid.iter().zip(&g.values) {
        if v < min_value {
            min_value = v;
            min_at = r;
        }
    }
    let max_value = g.max();
    let integral = g.radial_integral();
    let nonnegative = min_value >= -NEGATIVE_LOBE_TOL * max_value.abs();
    let bounded = max_value.is_finite();
    let integrable = integral.is_finite();
    let last = *g.values.last().unwrap();
    let decays = last.abs() <= 1e-2 * max_value.abs() || max_value == 0.0;
    PropositionGReport {
        min_value,
        min_at,
        max_value,
        integral,
        nonnegative,
        bounded,
        integrable,
        decays,
        passed: nonnegative && bounded && integrable && decays,
    }
}

/// One comparison of a computed value against a bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundRow {
    pub label: String,
    pub value: f64,
    pub bound: f64,
    /// Allowed slack: 3σ plus truncation budget.
    pub budget: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub rows: Vec<BoundRow>,
    pub violations: usize,
}

impl BoundReport {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, label: String, value: f64, bound: f64, budget: f64) {
        let passed = value <= bound + budget;
        if !passed {
            self.violations += 1;
        }
        self.rows.push(BoundRow {
            label,
            value,
            bound,
            budget,
            passed,
        });
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn extend(&mut self, other: BoundReport) {
        self.violations += other.violations;
        self.rows.extend(other.rows);
    }

    /// Fails with the first offending row.
    pub fn into_result(self) -> Result<Self> {
        match self.rows.iter().find(|r| !r.passed) {
            None => Ok(self),
            Some(r) => Err(Error::BoundViolation(format!(
                "{}: {} has value {} above bound {} (budget {})",
                self.name, r.label, r.value, r.bound, r.budget
            ))),
        }
    }
}

/// Two points at separation r along x, centred in the box.
pub fn pair_at(r: f64) -> [Vec3; 2] {
    [[-0.5 * r, 0.0, 0.0], [0.5 * r, 0.0, 0.0]]
}

/// τ^(1) partial sums ≤ w at the box centre.
pub fn check_tau1_bound(ctx: &SeriesContext<'_>, g: &GMajorant, order: usize) -> Result<BoundReport> {
    let tau = ctx.tau_series(&[[0.0; 3]], order)?;
    let mut rep = BoundReport::new("tau1");
    let mut partial = 0.0;
    let mut var = 0.0;
    for n in 1..=order {
        partial += tau.term(n);
        var += tau.term_stderr(n).powi(2);
        rep.push(format!("K={n}"), partial, g.constants.w, 3.0 * var.sqrt());
    }
    Ok(rep)
}

/// τ^(2)(R,0) partial sums ≤ G(|R|).
pub fn check_tau2_bound(
    ctx: &SeriesContext<'_>,
    g: &GMajorant,
    radii: &[f64],
    order: usize,
) -> Result<BoundReport> {
    let mut rep = BoundReport::new("tau2");
    for &r in radii {
        let tau = ctx.tau_series(&pair_at(r), order)?;
        let mut partial = 0.0;
        let mut var = 0.0;
        for n in 2..=order {
            partial += tau.term(n);
            var += tau.term_stderr(n).powi(2);
            rep.push(format!("r={r},K={n}"), partial, g.at(r), 3.0 * var.sqrt());
        }
    }
    Ok(rep)
}

/// |ω^(2)(R,0)| ≤ e^{−4βB}G(|R|), and per order |ω²_N| ≤ e^{−4βB}τ²_N.
pub fn check_penrose_bound(
    ctx: &SeriesContext<'_>,
    g: &GMajorant,
    radii: &[f64],
    order: usize,
) -> Result<BoundReport> {
    let e4 = g.constants.e4();
    let mut rep = BoundReport::new("penrose");
    for &r in radii {
        let pts = pair_at(r);
        let om = ctx.ursell_series(&pts, order)?;
        let tau = ctx.tau_series(&pts, order)?;
        for n in 2..=order {
            let sigma = (om.term_stderr(n).powi(2) + (e4 * tau.term_stderr(n)).powi(2)).sqrt();
            rep.push(format!("r={r},N={n},per-order"), om.term(n).abs(), e4 * tau.term(n), 3.0 * sigma);
        }
        let budget = 3.0 * om.stderr + om.truncation_budget();
        rep.push(format!("r={r},sum"), om.value.abs(), e4 * g.at(r), budget);
    }
    Ok(rep)
}

/// ρ^(m) ≤ ez²/(1 − zc_βe^{2βB+1})·(ze^{2βB+1})^{m−2}·Π_{i<m} e^{−βu(|R_i−R_m|)}.
pub fn rho_bound_value(pot: &dyn Interaction, c: &MajorantConstants, points: &[Vec3]) -> f64 {
    let m = points.len();
    let a = c.z * (2.0 * c.beta * c.b + 1.0).exp();
    let pre = std::f64::consts::E * c.z * c.z / (1.0 - c.c_beta * a) * a.powi(m as i32 - 2);
    let last = points[m - 1];
    points[..m - 1]
        .iter()
        .fold(pre, |acc, &p| acc * pot.boltzmann(dist(p, last), c.beta))
}

pub fn check_rho_bound(
    pot: &PairPotential,
    params: &EnsembleParams,
    points: &[Vec3],
    settings: OracleSettings,
) -> Result<BoundReport> {
    if points.len() < 2 {
        return Err(Error::Precondition("the ρ bound needs m ≥ 2".into()));
    }
    params.check_admissible(pot)?;
    let c = MajorantConstants::new(pot, params)?;
    let rho = rho_m_direct(pot, params, points, settings)?;
    let mut rep = BoundReport::new("rho");
    rep.push(
        format!("m={}", points.len()),
        rho.value,
        rho_bound_value(pot, &c, points),
        3.0 * rho.stderr + rho.tail_bound,
    );
    Ok(rep)
}

/// |ζ^(3)(R₁,R₂,R₃)| ≤ we^{−4βB}(G(R₁−R₃) + G(R₂−R₃)).
pub fn zeta3_bound_value(g: &GMajorant, p: &[Vec3; 3]) -> f64 {
    let c = &g.constants;
    c.w * c.e4() * (g.at_points(p[0], p[2]) + g.at_points(p[1], p[2]))
}

pub fn check_zeta3_bound(ctx: &SeriesContext<'_>, g: &GMajorant, p: &[Vec3; 3], order: usize) -> Result<BoundReport> {
    let zeta = ctx.zeta_series(p, order)?;
    let mut rep = BoundReport::new("zeta3");
    rep.push(
        "zeta3".into(),
        zeta.value.abs(),
        zeta3_bound_value(g, p),
        3.0 * zeta.stderr + zeta.truncation_budget(),
    );
    Ok(rep)
}

/// |χ^(3)(R₁,R₂,R₃)| ≤ we^{−4βB}e^{−βu(|R₂−R₃|)}(G(R₂−R₁) + G(R₃−R₁)).
pub fn chi3_bound_value(g: &GMajorant, p: &[Vec3; 3]) -> f64 {
    let c = &g.constants;
    c.w * c.e4()
        * g.pot.boltzmann(dist(p[1], p[2]), c.beta)
        * (g.at_points(p[1], p[0]) + g.at_points(p[2], p[0]))
}

/// The constant of the χ^(4) bound assembled from the ζ^(4) forest
/// estimates and the χ^(3) bound:
/// e^{−4βB}[G_max(1 + w/(ze^{2βB})) + w²e^{−4βB}].
pub fn chi4_constant(g: &GMajorant) -> f64 {
    let c = &g.constants;
    if c.w == 0.0 {
        return 0.0;
    }
    let ratio = c.w / (c.z * (2.0 * c.beta * c.b).exp());
    c.e4() * (g.max() * (1.0 + ratio) + c.w * c.w * c.e4())
}

/// Ce^{−βu(|R₃−R₄|)} Σ_{i∈{1,2}, j∈{3,4}} G(R_i−R_j).
pub fn chi4_bound_value(g: &GMajorant, p: &[Vec3; 4]) -> f64 {
    let sum: f64 = [(0, 2), (0, 3), (1, 2), (1, 3)]
        .iter()
        .map(|&(i, j)| g.at_points(p[i], p[j]))
        .sum();
    chi4_constant(g) * g.pot.boltzmann(dist(p[2], p[3]), g.constants.beta) * sum
}

/// χ^(3) and χ^(4) from the oracle against their bounds.
pub fn check_chi_bounds(oracle: &Oracle<'_>, g: &GMajorant, points: &[Vec3]) -> Result<BoundReport> {
    let chi = crate::oracle::chi_with(oracle, points);
    let tail = oracle.tail_bound();
    let mut rep = BoundReport::new("chi");
    match points.len() {
        3 => {
            let p = [points[0], points[1], points[2]];
            rep.push("chi3".into(), chi.v.abs(), chi3_bound_value(g, &p), 3.0 * chi.e + 4.0 * tail);
        }
        4 => {
            let p = [points[0], points[1], points[2], points[3]];
            rep.push("chi4".into(), chi.v.abs(), chi4_bound_value(g, &p), 3.0 * chi.e + 4.0 * tail);
        }
        m => return Err(Error::Precondition(format!("chi bound needs 3 or 4 points, got {m}"))),
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lambert::lambert_w0;

    #[test]
    fn w_examples() {
        let c = 4.0 * PI / 3.0;
        assert_eq!(tree_weight_w(0.0, c, 0.0, 1.0).unwrap(), 0.0);
        let zmax = activity_bound(c, 0.0, 1.0);
        assert!((tree_weight_w(zmax, c, 0.0, 1.0).unwrap() - 1.0 / c).abs() < 1e-10);
        let w = tree_weight_w(0.5 * zmax, c, 0.0, 1.0).unwrap();
        // w = z e^{c w}
        assert!((w - 0.5 * zmax * (c * w).exp()).abs() < 1e-14);
        let x = -0.5 * zmax * c;
        let w0 = lambert_w0(x).unwrap();
        assert!((w0 * w0.exp() - x).abs() < 1e-15);
        assert!(matches!(
            tree_weight_w(1.01 * zmax, c, 0.0, 1.0),
            Err(Error::Admissibility { .. })
        ));
    }

    #[test]
    fn hard_sphere_transform_matches_closed_form() {
        let hs = PairPotential::hard_sphere(1.0).unwrap();
        let qs: Vec<f64> = (0..20).map(|i| 0.05 + 0.37 * i as f64).collect();
        let h = hat_abs_f(&hs, 1.0, &qs).unwrap();
        for (&q, &v) in qs.iter().zip(&h.values) {
            let x = 2.0 * PI * q;
            let exact = (x.sin() - x * x.cos()) / (2.0 * PI * PI * q.powi(3));
            assert!((v - exact).abs() <= 1e-8 * exact.abs().max(1e-3), "q={q}: {v} vs {exact}");
        }
        let h0 = hat_abs_f(&hs, 1.0, &[0.0, 1e-6]).unwrap();
        assert!((h0.values[0] - 4.0 * PI / 3.0).abs() < 1e-12);
        assert!((h0.values[1] - 4.0 * PI / 3.0).abs() < 1e-8);
        let ideal = hat_abs_f(&PairPotential::ideal(), 1.0, &qs).unwrap();
        assert!(ideal.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn g_hat0_increases_with_w() {
        let mut c = MajorantConstants {
            w: 0.05,
            c_beta: 4.0,
            b: 0.0,
            z: 0.01,
            beta: 1.0,
        };
        let a = c.g_hat0().unwrap();
        c.w = 0.1;
        assert!(c.g_hat0().unwrap() > a);
    }

    #[test]
    fn radial_csv_round_trip() {
        let f = RadialFunction::new(
            vec![0.0, 0.5, 1.0],
            vec![1.0, 0.25, 0.1],
            TailModel::Exponential {
                amplitude: 2.0,
                rate: 1.5,
            },
        )
        .unwrap();
        let back = RadialFunction::from_csv(&f.to_csv()).unwrap();
        assert_eq!(back, f);
        assert!(matches!(
            RadialFunction::from_csv("# {\"kind\":\"zero\"}\nr,value\n0.1;3\n"),
            Err(Error::Parse { line: 3, .. })
        ));
    }
}
