//! Pair potentials, perturbations and their norms.
//!
//! A pair potential is a radial function u(r) with an explicit hard-core
//! radius, so the Boltzmann factor e^{−βu} is exactly 0 inside the core
//! without going through infinite arithmetic.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::quadrature::{integrate_1d, integrate_pieces};
use crate::rng::Stream;
use crate::{dist, norm, Error, Result, Vec3};

const QUAD_TOL: f64 = 1e-13;

/// Anything that supplies a radial pair energy.
pub trait Interaction: Sync {
    /// u(r); `f64::INFINITY` inside a hard core.
    fn u(&self, r: f64) -> f64;

    /// Radius below which u is +∞ (0 if none).
    fn hard_core(&self) -> f64;

    /// e^{−βu(r)}, exactly 0 inside the core.
    #[inline]
    fn boltzmann(&self, r: f64, beta: f64) -> f64 {
        if r < self.hard_core() {
            return 0.0;
        }
        let u = self.u(r);
        if u == f64::INFINITY {
            0.0
        } else {
            (-beta * u).exp()
        }
    }

    /// Mayer function e^{−βu(r)} − 1.
    #[inline]
    fn mayer(&self, r: f64, beta: f64) -> f64 {
        self.boltzmann(r, beta) - 1.0
    }
}

/// Built-in potential families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    /// u ≡ 0.
    Ideal,
    HardSphere { sigma: f64 },
    /// Hard core σ, depth ε on [σ, λσ).
    SquareWell { sigma: f64, lambda: f64, epsilon: f64 },
    /// 4ε[(σ/r)^12 − (σ/r)^6] on [r_core, r_cut), hard core below r_core.
    LennardJones {
        epsilon: f64,
        sigma: f64,
        r_core: f64,
        r_cut: f64,
        s: f64,
    },
}

/// A radial pair potential with its stability constant B.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairPotential {
    pub model: Model,
    pub stability_b: f64,
}

impl PairPotential {
    pub fn ideal() -> Self {
        Self {
            model: Model::Ideal,
            stability_b: 0.0,
        }
    }

    pub fn hard_sphere(sigma: f64) -> Result<Self> {
        positive("sigma", sigma)?;
        Ok(Self {
            model: Model::HardSphere { sigma },
            stability_b: 0.0,
        })
    }

    /// Square well; B defaults to ε·n_max/2 with the packing bound
    /// n_max = (2λ+1)³ − 1 on the number of neighbours inside the well.
    pub fn square_well(sigma: f64, lambda: f64, epsilon: f64) -> Result<Self> {
        positive("sigma", sigma)?;
        positive("epsilon", epsilon)?;
        if !(lambda > 1.0) {
            return Err(Error::Configuration(format!(
                "square well needs lambda > 1, got {lambda}"
            )));
        }
        let n_max = ((2.0 * lambda + 1.0).powi(3) - 1.0).floor();
        Ok(Self {
            model: Model::SquareWell {
                sigma,
                lambda,
                epsilon,
            },
            stability_b: 0.5 * epsilon * n_max,
        })
    }

    /// Truncated Lennard-Jones with a hard inner cutoff. `r_cut` may be
    /// infinite, in which case B must be supplied with [`Self::with_b`].
    pub fn lennard_jones(epsilon: f64, sigma: f64, r_core: f64, r_cut: f64) -> Result<Self> {
        Self::lennard_jones_with_s(epsilon, sigma, r_core, r_cut, 0.95 * sigma)
    }

    pub fn lennard_jones_with_s(
        epsilon: f64,
        sigma: f64,
        r_core: f64,
        r_cut: f64,
        s: f64,
    ) -> Result<Self> {
        positive("epsilon", epsilon)?;
        positive("sigma", sigma)?;
        positive("r_core", r_core)?;
        if !(r_cut > r_core) {
            return Err(Error::Configuration(format!(
                "r_cut {r_cut} must exceed r_core {r_core}"
            )));
        }
        if !(s > 0.0 && s < sigma) {
            return Err(Error::Configuration(format!(
                "envelope radius s = {s} must lie in (0, sigma)"
            )));
        }
        let stability_b = if r_cut.is_finite() {
            let n_max = ((2.0 * r_cut / r_core + 1.0).powi(3) - 1.0).floor();
            0.5 * epsilon * n_max
        } else {
            f64::NAN
        };
        Ok(Self {
            model: Model::LennardJones {
                epsilon,
                sigma,
                r_core,
                r_cut,
                s,
            },
            stability_b,
        })
    }

    /// Overrides the stability constant.
    pub fn with_b(mut self, b: f64) -> Result<Self> {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::Configuration(format!("B must be finite and >= 0, got {b}")));
        }
        self.stability_b = b;
        Ok(self)
    }

    /// B, or an error when the model could not supply one.
    pub fn b(&self) -> Result<f64> {
        if self.stability_b.is_finite() {
            Ok(self.stability_b)
        } else {
            Err(Error::Configuration(
                "no stability constant B for an untruncated potential; set potential.B".into(),
            ))
        }
    }

    pub fn evaluate(&self, r: f64) -> f64 {
        self.u(r)
    }

    pub fn hard_core_radius(&self) -> f64 {
        self.hard_core()
    }

    /// The radius s of the envelope assumption (None for the ideal gas).
    pub fn core_radius_s(&self) -> Option<f64> {
        match self.model {
            Model::Ideal => None,
            Model::HardSphere { sigma } | Model::SquareWell { sigma, .. } => Some(sigma),
            Model::LennardJones { s, .. } => Some(s),
        }
    }

    /// Lower envelope u_* on (0, s].
    pub fn lower_envelope(&self, r: f64) -> Option<f64> {
        match self.model {
            Model::Ideal => None,
            Model::HardSphere { sigma } | Model::SquareWell { sigma, .. } => {
                Some((sigma / r).powi(3))
            }
            Model::LennardJones { s, r_core, .. } => {
                let us = if s <= r_core { 1.0 } else { self.u(s) };
                Some(us * (s / r).powi(3))
            }
        }
    }

    /// Upper envelope u^* on [s, ∞).
    pub fn upper_envelope(&self, r: f64) -> Option<f64> {
        match self.model {
            Model::Ideal => None,
            Model::HardSphere { sigma } => Some((sigma / r).powi(6)),
            Model::SquareWell {
                sigma,
                lambda,
                epsilon,
            } => {
                let edge = lambda * sigma;
                Some(if r <= edge {
                    epsilon
                } else {
                    epsilon * (edge / r).powi(6)
                })
            }
            Model::LennardJones { epsilon, sigma, .. } => {
                let x6 = (sigma / r).powi(6);
                Some(4.0 * epsilon * (x6 * x6 + x6))
            }
        }
    }

    /// ∫_R^∞ u^*(r) r² dr, in closed form for the built-in envelopes.
    pub fn upper_envelope_tail(&self, r: f64) -> f64 {
        match self.model {
            Model::Ideal => 0.0,
            Model::HardSphere { sigma } => sigma.powi(6) / (3.0 * r.powi(3)),
            Model::SquareWell {
                sigma,
                lambda,
                epsilon,
            } => {
                let edge = lambda * sigma;
                let outer = epsilon * edge.powi(6) / (3.0 * r.max(edge).powi(3));
                if r < edge {
                    outer + epsilon * (edge.powi(3) - r.powi(3)) / 3.0
                } else {
                    outer
                }
            }
            Model::LennardJones { epsilon, sigma, .. } => {
                4.0 * epsilon
                    * (sigma.powi(12) / (9.0 * r.powi(9)) + sigma.powi(6) / (3.0 * r.powi(3)))
            }
        }
    }

    /// Radii where u or its derivative jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.model {
            Model::Ideal => vec![],
            Model::HardSphere { sigma } => vec![sigma],
            Model::SquareWell { sigma, lambda, .. } => vec![sigma, lambda * sigma],
            Model::LennardJones { r_core, r_cut, .. } => {
                if r_cut.is_finite() {
                    vec![r_core, r_cut]
                } else {
                    vec![r_core]
                }
            }
        }
    }

    /// Radius beyond which u vanishes identically (∞ if it never does).
    pub fn range(&self) -> f64 {
        match self.model {
            Model::Ideal => 0.0,
            Model::HardSphere { sigma } => sigma,
            Model::SquareWell { sigma, lambda, .. } => lambda * sigma,
            Model::LennardJones { r_cut, .. } => r_cut,
        }
    }

    /// A length scale for grids (σ, or 1 for the ideal gas).
    pub fn length_scale(&self) -> f64 {
        match self.model {
            Model::Ideal => 1.0,
            Model::HardSphere { sigma }
            | Model::SquareWell { sigma, .. }
            | Model::LennardJones { sigma, .. } => sigma,
        }
    }

    pub fn is_ideal(&self) -> bool {
        matches!(self.model, Model::Ideal)
    }

    /// Radial integral 4π∫ g(r) r² dr of a function of the Mayer factor,
    /// split at the potential's breakpoints. Beyond `range` the integrand
    /// must vanish; for infinite range the integral stops at 60σ.
    fn radial_integral<F: Fn(f64) -> f64>(&self, g: F, tol: f64) -> f64 {
        let hc = self.hard_core();
        let end = if self.range().is_finite() {
            self.range()
        } else {
            60.0 * self.length_scale()
        };
        if end <= hc {
            return 0.0;
        }
        let h = |r: f64| g(r) * r * r;
        4.0 * PI * integrate_pieces(&h, hc, end, &self.breakpoints(), tol)
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Configuration(format!("{name} must be positive, got {x}")))
    }
}

impl Interaction for PairPotential {
    #[inline]
    fn u(&self, r: f64) -> f64 {
        match self.model {
            Model::Ideal => 0.0,
            Model::HardSphere { sigma } => {
                if r < sigma {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Model::SquareWell {
                sigma,
                lambda,
                epsilon,
            } => {
                if r < sigma {
                    f64::INFINITY
                } else if r < lambda * sigma {
                    -epsilon
                } else {
                    0.0
                }
            }
            Model::LennardJones {
                epsilon,
                sigma,
                r_core,
                r_cut,
                ..
            } => {
                if r < r_core {
                    f64::INFINITY
                } else if r < r_cut {
                    let x6 = (sigma / r).powi(6);
                    4.0 * epsilon * (x6 * x6 - x6)
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    fn hard_core(&self) -> f64 {
        match self.model {
            Model::Ideal => 0.0,
            Model::HardSphere { sigma } | Model::SquareWell { sigma, .. } => sigma,
            Model::LennardJones { r_core, .. } => r_core,
        }
    }
}

/// e^{−βu(r)} for r > 0.
pub fn boltzmann_factor(pot: &dyn Interaction, r: f64, beta: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {r}")));
    }
    Ok(pot.boltzmann(r, beta))
}

/// Mayer f at a separation vector. At zero separation a hard core gives
/// the limit value −1; without a core the convention is e^{−βu(0)} − 1.
pub fn mayer_f(pot: &dyn Interaction, separation: Vec3, beta: f64) -> f64 {
    pot.mayer(norm(separation), beta)
}

/// c_β = 4π∫|e^{−βu}−1| r² dr. For untruncated potentials the integral
/// runs to 60σ and the tail is bounded with u^* via e^x − 1 ≤ x e^x.
pub fn regularity_constant(pot: &PairPotential, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    let hc = pot.hard_core();
    let core = 4.0 * PI * hc.powi(3) / 3.0;
    let body = pot.radial_integral(|r| pot.mayer(r, beta).abs(), QUAD_TOL);
    let mut tail = 0.0;
    if !pot.range().is_finite() {
        let r_t = 60.0 * pot.length_scale();
        let ustar = pot.upper_envelope(r_t).unwrap_or(0.0);
        tail = 4.0 * PI * beta * (beta * ustar).exp() * pot.upper_envelope_tail(r_t);
    }
    let c = core + body + tail;
    if !c.is_finite() {
        return Err(Error::Regularity(format!("c_beta is not finite ({c})")));
    }
    Ok(c)
}

/// z_max = 1/(c_β e^{2βB+1}).
pub fn activity_bound(c_beta: f64, b: f64, beta: f64) -> f64 {
    if c_beta == 0.0 {
        return f64::INFINITY;
    }
    1.0 / (c_beta * (2.0 * beta * b + 1.0).exp())
}

/// Checks u ≥ u_* below s and |u| ≤ u^* above s on a log grid, and that the
/// envelope tail integral is finite.
pub fn check_envelopes(pot: &PairPotential) -> Result<()> {
    let Some(s) = pot.core_radius_s() else {
        return Ok(());
    };
    for r in log_grid(1e-3 * s, 1e3 * s, 4000) {
        if r < s {
            let lo = pot.lower_envelope(r).unwrap();
            if !(lo > 0.0) || pot.u(r) < lo {
                return Err(Error::Configuration(format!(
                    "lower envelope violated at r = {r}: u = {}, u_* = {lo}",
                    pot.u(r)
                )));
            }
        } else {
            let hi = pot.upper_envelope(r).unwrap();
            if pot.u(r).abs() > hi * (1.0 + 1e-12) {
                return Err(Error::Configuration(format!(
                    "upper envelope violated at r = {r}: |u| = {}, u^* = {hi}",
                    pot.u(r).abs()
                )));
            }
        }
    }
    let tail = pot.upper_envelope_tail(s);
    if !tail.is_finite() {
        return Err(Error::Regularity("envelope tail integral diverges".into()));
    }
    Ok(())
}

/// Spot check of Σ_{i<j} u ≥ −B·N on random configurations built by
/// random sequential addition (hard cores respected) in a box sized for
/// close packing. Returns the smallest observed (Σu)/N.
pub fn check_stability(
    pot: &PairPotential,
    configs: usize,
    n_max: usize,
    seed: u64,
) -> Result<f64> {
    let b = pot.b()?;
    let sigma = pot.length_scale();
    let mut worst = f64::INFINITY;
    for c in 0..configs {
        let mut rng = Stream::new(seed, &[0x57AB, c as u64], 0);
        let n = 2 + (rng.uniform() * (n_max - 1) as f64) as usize;
        let n = n.min(n_max);
        let side = sigma * (n as f64).cbrt() * (0.9 + 0.6 * rng.uniform());
        let pts = random_sequential_addition(pot, n, side, &mut rng);
        let n = pts.len();
        if n == 0 {
            continue;
        }
        let mut e = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                e += pot.u(dist(pts[i], pts[j]));
            }
        }
        let per = e / n as f64;
        worst = worst.min(per);
        if e < -b * n as f64 {
            return Err(Error::BoundViolation(format!(
                "stability: energy {e} < -B·N = {} for {pts:?}",
                -b * n as f64
            )));
        }
    }
    Ok(worst)
}

pub(crate) fn random_sequential_addition(
    pot: &dyn Interaction,
    n: usize,
    side: f64,
    rng: &mut Stream,
) -> Vec<Vec3> {
    let hc = pot.hard_core();
    let mut pts: Vec<Vec3> = Vec::with_capacity(n);
    let mut attempts = 0;
    while pts.len() < n && attempts < 2000 * n {
        attempts += 1;
        let p = rng.point_in_box(side);
        if pts.iter().all(|q| dist(p, *q) >= hc) {
            pts.push(p);
        }
    }
    pts
}

/// Logarithmically spaced points on [a, b].
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Picks j maximising Σ_{i≠j} u(|R_i − R_j|) among `labels` (smallest
/// index wins ties) and asserts that the sum is ≥ −2B. Returns the
/// position within `labels`.
pub fn select_jstar_among(pot: &PairPotential, points: &[Vec3], labels: &[usize]) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::Domain("select_jstar needs a nonempty configuration".into()));
    }
    let mut best = 0;
    let mut best_sum = f64::NEG_INFINITY;
    for (a, &j) in labels.iter().enumerate() {
        let s: f64 = labels
            .iter()
            .filter(|&&i| i != j)
            .map(|&i| pot.u(dist(points[i], points[j])))
            .sum();
        if s > best_sum {
            best_sum = s;
            best = a;
        }
    }
    let b = pot.b()?;
    if best_sum < -2.0 * b {
        let cfg: Vec<Vec3> = labels.iter().map(|&i| points[i]).collect();
        return Err(Error::StabilitySelection {
            config: format!("{cfg:?}"),
            sum: best_sum,
            bound: -2.0 * b,
        });
    }
    Ok(best)
}

/// j* over the whole configuration (0-based).
pub fn select_jstar(pot: &PairPotential, config: &[Vec3]) -> Result<usize> {
    let labels: Vec<usize> = (0..config.len()).collect();
    select_jstar_among(pot, config, &labels)
}

/// Radial shape of a perturbation.
#[derive(Clone)]
pub enum Shape {
    Zero,
    /// a·exp(1 − 1/(1 − x²)) with x = (r − center)/half_width; C^∞, peak a.
    Bump {
        center: f64,
        half_width: f64,
        amplitude: f64,
    },
    /// a on [from, to).
    Step { from: f64, to: f64, amplitude: f64 },
    /// a·exp(−(r − c)²/(2w²)), cut to zero beyond 12w from the centre.
    Gaussian {
        center: f64,
        width: f64,
        amplitude: f64,
    },
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        support: (f64, f64),
        breaks: Vec<f64>,
    },
    Sum(Vec<(f64, Shape)>),
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Zero => write!(f, "Zero"),
            Shape::Bump {
                center,
                half_width,
                amplitude,
            } => write!(f, "Bump({center}, {half_width}, {amplitude})"),
            Shape::Step { from, to, amplitude } => write!(f, "Step({from}, {to}, {amplitude})"),
            Shape::Gaussian {
                center,
                width,
                amplitude,
            } => write!(f, "Gaussian({center}, {width}, {amplitude})"),
            Shape::Custom { support, .. } => write!(f, "Custom{support:?}"),
            Shape::Sum(parts) => f.debug_list().entries(parts.iter()).finish(),
        }
    }
}

impl Shape {
    fn eval(&self, r: f64) -> f64 {
        match self {
            Shape::Zero => 0.0,
            Shape::Bump {
                center,
                half_width,
                amplitude,
            } => {
                let x = (r - center) / half_width;
                if x.abs() >= 1.0 {
                    0.0
                } else {
                    amplitude * (1.0 - 1.0 / (1.0 - x * x)).exp()
                }
            }
            Shape::Step { from, to, amplitude } => {
                if r >= *from && r < *to {
                    *amplitude
                } else {
                    0.0
                }
            }
            Shape::Gaussian {
                center,
                width,
                amplitude,
            } => {
                let x = (r - center) / width;
                if x.abs() > 12.0 {
                    0.0
                } else {
                    amplitude * (-0.5 * x * x).exp()
                }
            }
            Shape::Custom { f, support, .. } => {
                if r >= support.0 && r <= support.1 {
                    f(r)
                } else {
                    0.0
                }
            }
            Shape::Sum(parts) => parts.iter().map(|(c, s)| c * s.eval(r)).sum(),
        }
    }

    fn support(&self) -> Option<(f64, f64)> {
        match self {
            Shape::Zero => None,
            Shape::Bump {
                center, half_width, ..
            } => Some(((center - half_width).max(0.0), center + half_width)),
            Shape::Step { from, to, .. } => Some((from.max(0.0), *to)),
            Shape::Gaussian { center, width, .. } => {
                Some(((center - 12.0 * width).max(0.0), center + 12.0 * width))
            }
            Shape::Custom { support, .. } => Some(*support),
            Shape::Sum(parts) => parts
                .iter()
                .filter_map(|(c, s)| if *c == 0.0 { None } else { s.support() })
                .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1))),
        }
    }

    fn breaks(&self, out: &mut Vec<f64>) {
        match self {
            Shape::Zero => {}
            Shape::Bump {
                center, half_width, ..
            } => out.extend([center - half_width, *center, center + half_width]),
            Shape::Step { from, to, .. } => out.extend([*from, *to]),
            Shape::Gaussian { center, width, .. } => {
                out.extend([center - 12.0 * width, *center, center + 12.0 * width])
            }
            Shape::Custom { support, breaks, .. } => {
                out.extend([support.0, support.1]);
                out.extend(breaks.iter().copied());
            }
            Shape::Sum(parts) => parts.iter().for_each(|(_, s)| s.breaks(out)),
        }
    }
}

/// A radial perturbation v(r) of the pair potential.
#[derive(Clone, Debug)]
pub struct Perturbation {
    pub shape: Shape,
    /// Cached 𝒱_u norm, if computed.
    pub declared_norm: Option<f64>,
}

impl Perturbation {
    pub fn new(shape: Shape) -> Self {
        Self {
            shape,
            declared_norm: None,
        }
    }

    pub fn zero() -> Self {
        Self::new(Shape::Zero)
    }

    pub fn bump(center: f64, half_width: f64, amplitude: f64) -> Self {
        Self::new(Shape::Bump {
            center,
            half_width,
            amplitude,
        })
    }

    pub fn step(from: f64, to: f64, amplitude: f64) -> Self {
        Self::new(Shape::Step {
            from,
            to,
            amplitude,
        })
    }

    pub fn gaussian(center: f64, width: f64, amplitude: f64) -> Self {
        Self::new(Shape::Gaussian {
            center,
            width,
            amplitude,
        })
    }

    pub fn custom<F>(f: F, support: (f64, f64), breaks: Vec<f64>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(Shape::Custom {
            f: Arc::new(f),
            support,
            breaks,
        })
    }

    /// a·v₁ + b·v₂.
    pub fn combine(a: f64, v1: &Perturbation, b: f64, v2: &Perturbation) -> Self {
        Self::new(Shape::Sum(vec![(a, v1.shape.clone()), (b, v2.shape.clone())]))
    }

    /// t·v.
    pub fn scaled(&self, t: f64) -> Self {
        Self {
            shape: Shape::Sum(vec![(t, self.shape.clone())]),
            declared_norm: self.declared_norm.map(|n| n * t.abs()),
        }
    }

    #[inline]
    pub fn evaluate(&self, r: f64) -> f64 {
        self.shape.eval(r)
    }

    /// Radial interval outside which v vanishes (None for v ≡ 0).
    pub fn support(&self) -> Option<(f64, f64)> {
        self.shape.support()
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = Vec::new();
        self.shape.breaks(&mut b);
        b.retain(|x| *x > 0.0 && x.is_finite());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.dedup();
        b
    }

    pub fn is_zero(&self) -> bool {
        self.support().is_none()
    }
}

/// The potential u + t·v.
#[derive(Clone, Copy)]
pub struct Perturbed<'a> {
    pub base: &'a PairPotential,
    pub v: &'a Perturbation,
    pub t: f64,
}

impl Interaction for Perturbed<'_> {
    #[inline]
    fn u(&self, r: f64) -> f64 {
        let u = self.base.u(r);
        if u == f64::INFINITY {
            u
        } else {
            u + self.t * self.v.evaluate(r)
        }
    }

    fn hard_core(&self) -> f64 {
        self.base.hard_core()
    }
}

/// Approximate 𝒱_u norm max{sup_{(0,s)} |v/u|, sup_{[s,∞)} |v/u^*|} on a
/// log grid over [10⁻³s, 10³s] plus v's breakpoints, refined once around
/// the grid argmax.
pub fn vu_norm(v: &Perturbation, pot: &PairPotential) -> Result<f64> {
    let Some(s) = pot.core_radius_s() else {
        return Err(Error::Configuration(
            "the ideal gas has no envelope, so the V_u norm is undefined".into(),
        ));
    };
    if v.is_zero() {
        return Ok(0.0);
    }
    let ratio = |r: f64| -> Result<f64> {
        let x = v.evaluate(r);
        if r < s {
            let u = pot.u(r);
            if u == f64::INFINITY {
                if x != 0.0 {
                    return Err(Error::Configuration(format!(
                        "perturbation is {x} inside the hard core at r = {r}"
                    )));
                }
                Ok(0.0)
            } else if u == 0.0 {
                Err(Error::Configuration(format!(
                    "u vanishes at r = {r} < s, the envelope is violated"
                )))
            } else {
                Ok((x / u).abs())
            }
        } else {
            Ok((x / pot.upper_envelope(r).unwrap()).abs())
        }
    };
    let mut grid = log_grid(1e-3 * s, 1e3 * s, 6000);
    for b in v.breakpoints() {
        grid.extend([b * (1.0 - 1e-9), b, b * (1.0 + 1e-9)]);
    }
    grid.retain(|r| *r > 0.0);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = 0.0;
    let mut arg = 0;
    for (i, &r) in grid.iter().enumerate() {
        let q = ratio(r)?;
        if q > best {
            best = q;
            arg = i;
        }
    }
    let lo = grid[arg.saturating_sub(1)];
    let hi = grid[(arg + 1).min(grid.len() - 1)];
    for k in 0..=200 {
        let r = lo + (hi - lo) * k as f64 / 200.0;
        if r > 0.0 {
            best = f64::max(best, ratio(r)?);
        }
    }
    Ok(best)
}

/// 𝒴_u norm ∫|v(|R|)| e^{−βu(|R|)} dR.
pub fn yu_norm(v: &Perturbation, pot: &dyn Interaction, beta: f64) -> Result<f64> {
    let Some((a, b)) = v.support() else {
        return Ok(0.0);
    };
    let g = |r: f64| v.evaluate(r).abs() * pot.boltzmann(r, beta) * r * r;
    let mut breaks = v.breakpoints();
    breaks.push(pot.hard_core());
    let val = 4.0 * PI * integrate_pieces(&g, a, b, &breaks, QUAD_TOL);
    if !val.is_finite() {
        return Err(Error::Domain("the Y_u integral diverges".into()));
    }
    Ok(val)
}

/// Single radial integral 4π∫ g(r) r² dr over [a, b] (helper for tests and
/// closed forms).
pub fn radial_integral<F: Fn(f64) -> f64>(g: F, a: f64, b: f64, breaks: &[f64]) -> f64 {
    let h = |r: f64| g(r) * r * r;
    if breaks.is_empty() {
        4.0 * PI * integrate_1d(&h, a, b, QUAD_TOL)
    } else {
        4.0 * PI * integrate_pieces(&h, a, b, breaks, QUAD_TOL)
    }
}

/// Inverse temperature, activity, box edge and admissibility radius t₀.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub beta: f64,
    pub activity_z: f64,
    pub box_side: f64,
    pub t0: f64,
}

impl EnsembleParams {
    pub fn new(beta: f64, activity_z: f64, box_side: f64, t0: f64) -> Result<Self> {
        let p = Self {
            beta,
            activity_z,
            box_side,
            t0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Configuration(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.activity_z > 0.0 && self.activity_z.is_finite()) {
            return Err(Error::Configuration(format!(
                "activity must be positive, got {}",
                self.activity_z
            )));
        }
        if !(self.box_side > 0.0 && self.box_side.is_finite()) {
            return Err(Error::Configuration(format!(
                "box side must be positive, got {}",
                self.box_side
            )));
        }
        if !(self.t0 > 0.0 && self.t0 < 1.0) {
            return Err(Error::Configuration(format!("t0 must lie in (0,1), got {}", self.t0)));
        }
        Ok(())
    }

    pub fn with_z(mut self, z: f64) -> Self {
        self.activity_z = z;
        self
    }

    pub fn volume(&self) -> f64 {
        self.box_side.powi(3)
    }

    /// z_max for the given potential.
    pub fn z_max(&self, pot: &PairPotential) -> Result<f64> {
        let c = regularity_constant(pot, self.beta)?;
        Ok(activity_bound(c, pot.b()?, self.beta))
    }

    /// Fails unless z < z_max.
    pub fn check_admissible(&self, pot: &PairPotential) -> Result<()> {
        let z_max = self.z_max(pot)?;
        if self.activity_z < z_max {
            Ok(())
        } else {
            Err(Error::Admissibility {
                z: self.activity_z,
                z_max,
            })
        }
    }
}

/// Admissibility gate for derivative work: ‖v‖ ≤ t₀/2 (the ideal gas has no
/// 𝒱_u norm and is exempt). Returns the norm (0 for the ideal gas).
pub fn check_perturbation(v: &Perturbation, pot: &PairPotential, t0: f64) -> Result<f64> {
    if pot.is_ideal() {
        return Ok(0.0);
    }
    let n = match v.declared_norm {
        Some(n) => n,
        None => vu_norm(v, pot)?,
    };
    if n > 0.5 * t0 * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "perturbation norm {n} exceeds t0/2 = {}",
            0.5 * t0
        )));
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn boltzmann_examples() {
        let hs = PairPotential::hard_sphere(1.0).unwrap();
        assert_eq!(boltzmann_factor(&hs, 0.5, 1.0).unwrap(), 0.0);
        assert_eq!(boltzmann_factor(&PairPotential::ideal(), 3.0, 1.0).unwrap(), 1.0);
        let lj = PairPotential::lennard_jones(1.0, 1.0, 0.5, f64::INFINITY).unwrap();
        let r = 2f64.powf(1.0 / 6.0);
        assert!((boltzmann_factor(&lj, r, 1.0).unwrap() - E).abs() < 1e-12);
        assert!(boltzmann_factor(&hs, 0.0, 1.0).is_err());
    }

    #[test]
    fn mayer_examples() {
        let hs = PairPotential::hard_sphere(1.0).unwrap();
        assert_eq!(mayer_f(&hs, [0.5, 0.0, 0.0], 1.0), -1.0);
        assert_eq!(mayer_f(&hs, [0.0, 0.0, 0.0], 1.0), -1.0);
        assert_eq!(mayer_f(&PairPotential::ideal(), [0.3, 0.0, 0.0], 1.0), 0.0);
        let sw = PairPotential::square_well(1.0, 1.5, 1.0).unwrap();
        assert!((mayer_f(&sw, [1.2, 0.0, 0.0], 1.0) - (E - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn regularity_examples() {
        let hs = PairPotential::hard_sphere(1.0).unwrap();
        assert!((regularity_constant(&hs, 1.0).unwrap() - 4.0 * PI / 3.0).abs() < 1e-12);
        assert_eq!(regularity_constant(&PairPotential::ideal(), 1.0).unwrap(), 0.0);
        let sw = PairPotential::square_well(1.0, 1.5, 1.0).unwrap();
        let want = 4.0 * PI / 3.0 + (E - 1.0) * 4.0 * PI * (1.5f64.powi(3) - 1.0) / 3.0;
        assert!((regularity_constant(&sw, 1.0).unwrap() - want).abs() < 1e-11);
    }

    #[test]
    fn activity_bound_examples() {
        let z = activity_bound(4.0 * PI / 3.0, 0.0, 1.0);
        assert!((z - 3.0 / (4.0 * PI * E)).abs() < 1e-15);
        assert!((z - 0.087825).abs() < 1e-6);
        assert_eq!(activity_bound(f64::INFINITY, 0.0, 1.0), 0.0);
    }

    #[test]
    fn vu_norm_examples() {
        let lj = PairPotential::lennard_jones(1.0, 1.0, 0.5, 2.5).unwrap();
        assert_eq!(vu_norm(&Perturbation::zero(), &lj).unwrap(), 0.0);
        let s = lj.core_radius_s().unwrap();
        let pot = lj;
        let v = Perturbation::custom(
            move |r| if r < s && r >= 0.5 { 0.3 * pot.u(r) } else { 0.0 },
            (0.5, s),
            vec![],
        );
        assert!((vu_norm(&v, &lj).unwrap() - 0.3).abs() < 1e-12);
        let sw = PairPotential::square_well(1.0, 1.5, 2.0).unwrap();
        let bump = Perturbation::bump(1.25, 0.2, 0.5);
        assert!((vu_norm(&bump, &sw).unwrap() - 0.25).abs() < 1e-9);
        let inside = Perturbation::step(0.2, 0.8, 1.0);
        assert!(vu_norm(&inside, &sw).is_err());
    }

    #[test]
    fn yu_norm_examples() {
        let hs = PairPotential::hard_sphere(1.0).unwrap();
        let v = Perturbation::step(1.0, 2.0, 1.0);
        let want = 4.0 * PI * 7.0 / 3.0;
        assert!((yu_norm(&v, &hs, 1.0).unwrap() - want).abs() < 1e-11);
        assert_eq!(yu_norm(&Perturbation::zero(), &hs, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn jstar_ties_and_argmax() {
        let sw = PairPotential::square_well(1.0, 1.5, 1.0).unwrap();
        let two = [[0.0, 0.0, 0.0], [1.2, 0.0, 0.0]];
        assert_eq!(select_jstar(&sw, &two).unwrap(), 0);
        // the isolated particle has the largest (zero) sum
        let three = [[0.0, 0.0, 0.0], [1.2, 0.0, 0.0], [5.0, 0.0, 0.0]];
        assert_eq!(select_jstar(&sw, &three).unwrap(), 2);
    }

    #[test]
    fn envelopes_hold_for_models() {
        check_envelopes(&PairPotential::hard_sphere(1.0).unwrap()).unwrap();
        check_envelopes(&PairPotential::square_well(1.0, 1.5, 1.0).unwrap()).unwrap();
        check_envelopes(&PairPotential::lennard_jones(1.0, 1.0, 0.8, 2.5).unwrap()).unwrap();
    }
}
