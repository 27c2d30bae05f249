//! Fréchet derivatives of ρ^(1), ρ^(2) and ω^(2) with respect to the pair
//! potential, realised as multiplication plus integral operators acting on
//! a perturbation v, and their finite-difference validation.
//!
//! The distribution functions come from a [`Densities`] backend. When the
//! outer integrals use the oracle's own box rule the formulas are the exact
//! derivatives of the discretised, capped oracle, so finite differences
//! converge with slope 2 down to rounding.
//!
//! Double integrals are split as
//! ∬vχ = ∬vρ^(m+2) − ρ^(m)·∬vρ^(2), with the last factor computed once per
//! evaluator. Only node pairs where v is nonzero are visited.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimate::{Ev, Ring, SeriesEstimate};
use crate::majorant::{chi4_constant, g_majorant_default, RadialFunction, TailModel};
use crate::oracle::{Oracle, OracleSettings};
use crate::potential::{
    check_perturbation, yu_norm, EnsembleParams, Interaction, PairPotential, Perturbation,
    Perturbed,
};
use crate::quadrature::{composite_rule, gauss_legendre, loglog_slope, BoxRule, GridSpec, QuadratureSpec};
use crate::rng::Stream;
use crate::series::SeriesContext;
use crate::{add, dist, norm, Error, Result, Vec3};

const KEY_SAMPLES: u64 = 0xDE_21_5A;

/// Source of ρ^(m) values for the derivative formulas.
pub trait Densities: Sync {
    fn rho(&self, points: &[Vec3]) -> Result<Ev>;

    /// Largest m for which ρ^(m) is not identically zero.
    fn max_order(&self) -> usize {
        usize::MAX
    }

    fn provenance(&self) -> String;

    /// True when χ^(m) is identically zero for this backend.
    fn chi_vanishes(&self, _m: usize) -> bool {
        false
    }

    /// True when χ may be assembled from untruncated products of ρ values,
    /// which allows the split of double integrals.
    fn split_products(&self) -> bool {
        true
    }

    /// ρ^(m) with the identically-zero orders skipped.
    fn rho_or_zero(&self, points: &[Vec3]) -> Result<Ev> {
        if points.len() > self.max_order() {
            Ok(Ev::default())
        } else {
            self.rho(points)
        }
    }

    /// χ^(3)(a,b,c) = ρ(abc) − ρ(a)ρ(bc).
    fn chi3(&self, p: [Vec3; 3]) -> Result<Ev> {
        let r3 = self.rho_or_zero(&p)?;
        let r1 = self.rho(&p[..1])?;
        let r2 = self.rho_or_zero(&p[1..])?;
        Ok(r3.minus(&r1.times(&r2)))
    }

    /// χ^(4)(a,b,c,d) = ρ(abcd) − ρ(ab)ρ(cd).
    fn chi4(&self, p: [Vec3; 4]) -> Result<Ev> {
        let r4 = self.rho_or_zero(&p)?;
        let a = self.rho_or_zero(&p[..2])?;
        let b = self.rho_or_zero(&p[2..])?;
        Ok(r4.minus(&a.times(&b)))
    }
}

/// The capped grand-canonical oracle.
pub struct OracleDensities<'a> {
    pub oracle: Oracle<'a>,
}

impl Densities for OracleDensities<'_> {
    fn rho(&self, points: &[Vec3]) -> Result<Ev> {
        Ok(self.oracle.ev(points))
    }

    fn max_order(&self) -> usize {
        self.oracle.n_cap()
    }

    fn provenance(&self) -> String {
        format!("oracle(n_cap={})", self.oracle.n_cap())
    }
}

/// Uncapped ideal gas: ρ^(m) = z^m, χ ≡ 0.
#[derive(Clone, Copy, Debug)]
pub struct IdealGasDensities {
    pub z: f64,
}

impl Densities for IdealGasDensities {
    fn rho(&self, points: &[Vec3]) -> Result<Ev> {
        Ok(Ev::new(self.z.powi(points.len() as i32), 0.0))
    }

    fn provenance(&self) -> String {
        format!("ideal_gas(z={})", self.z)
    }

    fn chi_vanishes(&self, _m: usize) -> bool {
        true
    }

    fn chi3(&self, _: [Vec3; 3]) -> Result<Ev> {
        Ok(Ev::default())
    }

    fn chi4(&self, _: [Vec3; 4]) -> Result<Ev> {
        Ok(Ev::default())
    }
}

/// Truncated activity series of order K. Products inside χ are truncated
/// at the same order.
pub struct SeriesDensities<'a> {
    pub ctx: SeriesContext<'a>,
    pub order: usize,
}

impl SeriesDensities<'_> {
    fn series(&self, points: &[Vec3]) -> Result<SeriesEstimate> {
        if points.len() > self.order {
            return Ok(SeriesEstimate::exact(0.0));
        }
        self.ctx.rho_series(points, self.order)
    }
}

fn ev_of(s: &SeriesEstimate) -> Ev {
    Ev::new(s.value, s.stderr)
}

impl Densities for SeriesDensities<'_> {
    fn rho(&self, points: &[Vec3]) -> Result<Ev> {
        Ok(ev_of(&self.series(points)?))
    }

    fn max_order(&self) -> usize {
        self.order
    }

    fn provenance(&self) -> String {
        format!("series(K={})", self.order)
    }

    /// The truncated χ^(3), χ^(4) start at z^3, z^4.
    fn chi_vanishes(&self, m: usize) -> bool {
        self.order < m
    }

    fn split_products(&self) -> bool {
        false
    }

    fn chi3(&self, p: [Vec3; 3]) -> Result<Ev> {
        let prod = self.series(&p[..1])?.mul(&self.series(&p[1..])?, self.order);
        Ok(ev_of(&self.series(&p)?.sub(&prod)))
    }

    fn chi4(&self, p: [Vec3; 4]) -> Result<Ev> {
        let prod = self.series(&p[..2])?.mul(&self.series(&p[2..])?, self.order);
        Ok(ev_of(&self.series(&p)?.sub(&prod)))
    }
}

/// Product rule in spherical coordinates: composite Gauss-Legendre in r
/// with `panels` panels between consecutive breakpoints, Gauss-Legendre in cos θ and a
/// uniform rule in φ. Offsets are relative to the ball centre.
#[derive(Clone, Debug)]
pub struct SphereRule {
    pub offsets: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(
        r_min: f64,
        r_max: f64,
        breaks: &[f64],
        panels: usize,
        radial_order: usize,
        angular: usize,
    ) -> Result<Self> {
        if !(r_max > r_min && r_min >= 0.0) || panels == 0 || radial_order == 0 || angular == 0 {
            return Err(Error::Precondition(format!(
                "sphere rule needs 0 <= r_min < r_max and positive orders, got [{r_min}, {r_max}]"
            )));
        }
        let mut cuts = vec![r_min, r_max];
        cuts.extend(breaks.iter().copied().filter(|b| *b > r_min && *b < r_max));
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let mut radial = Vec::new();
        for w in cuts.windows(2) {
            radial.extend(composite_rule(w[0], w[1], panels, radial_order));
        }
        let mu = gauss_legendre(angular);
        let n_phi = 2 * angular;
        let dphi = 2.0 * PI / n_phi as f64;
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        for &(r, wr) in &radial {
            for &(c, wc) in &mu {
                let s = (1.0 - c * c).max(0.0).sqrt();
                for k in 0..n_phi {
                    let phi = (k as f64 + 0.5) * dphi;
                    offsets.push([r * s * phi.cos(), r * s * phi.sin(), r * c]);
                    weights.push(wr * r * r * wc * dphi);
                }
            }
        }
        Ok(Self { offsets, weights })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Integration measure for the outer integrals.
#[derive(Clone, Debug)]
pub enum Measure {
    /// The box rule; use the oracle's own rule for exact finite differences.
    Box(BoxRule),
    /// Free-space integration: single integrals over `inner` around the
    /// evaluation point, double integrals with the first variable on
    /// `outer` (centred at the origin) and the second at first + `inner`.
    /// With `clip` set to a box side, nodes outside that box are dropped.
    Ball {
        inner: SphereRule,
        outer: SphereRule,
        clip: Option<f64>,
    },
}

impl Measure {
    /// Ball measures sized for v: the inner ball spans v's support.
    pub fn ball_for(
        v: &Perturbation,
        pot: &dyn Interaction,
        r_cut: f64,
        radial: (usize, usize),
        angular: usize,
    ) -> Result<Self> {
        let (panels, radial_order) = radial;
        let Some((a, b)) = v.support() else {
            return Err(Error::Precondition("v has empty support".into()));
        };
        let mut breaks = v.breakpoints();
        breaks.push(pot.hard_core());
        let inner = SphereRule::new(a, b, &breaks, panels, radial_order, angular)?;
        let mut outer_breaks = breaks.clone();
        outer_breaks.extend((1..8).map(|k| r_cut * k as f64 / 8.0));
        let outer = SphereRule::new(0.0, r_cut, &outer_breaks, 1, radial_order, angular)?;
        Ok(Measure::Ball {
            inner,
            outer,
            clip: None,
        })
    }

    pub fn clipped(mut self, side: f64) -> Self {
        if let Measure::Ball { clip, .. } = &mut self {
            *clip = Some(side);
        }
        self
    }

    fn keeps(&self, x: Vec3) -> bool {
        match self {
            Measure::Ball { clip: Some(l), .. } => x.iter().all(|c| c.abs() <= 0.5 * l),
            _ => true,
        }
    }
}

/// Value of a derivative with its named breakdown.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivativeResult {
    pub value: f64,
    pub stderr: f64,
    pub components: Vec<(String, f64)>,
    pub provenance: String,
}

impl DerivativeResult {
    fn from_parts(parts: Vec<(&str, Ev)>, provenance: String) -> Self {
        let value = parts.iter().map(|(_, e)| e.v).sum();
        let stderr = parts.iter().map(|(_, e)| e.e).sum();
        Self {
            value,
            stderr,
            components: parts.into_iter().map(|(n, e)| (n.to_string(), e.v)).collect(),
            provenance,
        }
    }

    pub fn component(&self, name: &str) -> Option<f64> {
        self.components.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Evaluator for one (densities, measure, v) triple. Caches the pair list
/// and S = ∬vρ^(2).
pub struct DerivativeEvaluator<'a> {
    dens: &'a dyn Densities,
    measure: &'a Measure,
    v: &'a Perturbation,
    beta: f64,
    pairs: OnceLock<Vec<(Vec3, Vec3, f64)>>,
    s2: OnceLock<Ev>,
}

fn weighted_sum(terms: Vec<(f64, Ev)>) -> Ev {
    let mut v = 0.0;
    let mut e = 0.0;
    for (w, x) in terms {
        v += w * x.v;
        e += w.abs() * x.e;
    }
    Ev::new(v, e)
}

impl<'a> DerivativeEvaluator<'a> {
    pub fn new(dens: &'a dyn Densities, measure: &'a Measure, v: &'a Perturbation, beta: f64) -> Self {
        Self {
            dens,
            measure,
            v,
            beta,
            pairs: OnceLock::new(),
            s2: OnceLock::new(),
        }
    }

    /// (x, w·v(|c − x|)) over the single-integral nodes, zeros dropped.
    fn single_nodes(&self, c: Vec3) -> Vec<(Vec3, f64)> {
        match self.measure {
            Measure::Box(rule) => rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .filter_map(|(&x, &w)| {
                    let vv = self.v.evaluate(dist(c, x));
                    (vv != 0.0).then_some((x, w * vv))
                })
                .collect(),
            Measure::Ball { inner, .. } => inner
                .offsets
                .iter()
                .zip(&inner.weights)
                .filter_map(|(&o, &w)| {
                    let vv = self.v.evaluate(norm(o));
                    let x = add(c, o);
                    (vv != 0.0 && self.measure.keeps(x)).then_some((x, w * vv))
                })
                .collect(),
        }
    }

    fn pairs(&self) -> &[(Vec3, Vec3, f64)] {
        self.pairs.get_or_init(|| match self.measure {
            Measure::Box(rule) => {
                let g = rule.len();
                let mut out = Vec::new();
                for a in 0..g {
                    for b in 0..g {
                        let vv = self.v.evaluate(dist(rule.nodes[a], rule.nodes[b]));
                        if vv != 0.0 {
                            out.push((rule.nodes[a], rule.nodes[b], rule.weights[a] * rule.weights[b] * vv));
                        }
                    }
                }
                out
            }
            Measure::Ball { inner, outer, .. } => {
                let mut out = Vec::new();
                for (&x, &wx) in outer.offsets.iter().zip(&outer.weights) {
                    if !self.measure.keeps(x) {
                        continue;
                    }
                    for (&o, &wo) in inner.offsets.iter().zip(&inner.weights) {
                        let vv = self.v.evaluate(norm(o));
                        let y = add(x, o);
                        if vv != 0.0 && self.measure.keeps(y) {
                            out.push((x, y, wx * wo * vv));
                        }
                    }
                }
                out
            }
        })
    }

    /// Σ W·ρ^(m+2)(fixed, x_a, x_b) over the pair list.
    fn pair_sum(&self, fixed: &[Vec3]) -> Result<Ev> {
        if fixed.len() + 2 > self.dens.max_order() {
            return Ok(Ev::default());
        }
        let terms = self
            .pairs()
            .par_iter()
            .map(|&(a, b, w)| {
                let mut pts = fixed.to_vec();
                pts.extend([a, b]);
                Ok((w, self.dens.rho(&pts)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(weighted_sum(terms))
    }

    /// S = ∬ v ρ^(2).
    pub fn s2(&self) -> Result<Ev> {
        if let Some(s) = self.s2.get() {
            return Ok(*s);
        }
        let s = self.pair_sum(&[])?;
        Ok(*self.s2.get_or_init(|| s))
    }

    /// ∬ v χ^(m+2)(fixed, x_a, x_b) for m = 1 or 2.
    fn double(&self, fixed: &[Vec3]) -> Result<Ev> {
        let m = fixed.len();
        if self.dens.chi_vanishes(m + 2) {
            return Ok(Ev::default());
        }
        if self.dens.split_products() {
            let lead = self.dens.rho_or_zero(fixed)?;
            return Ok(self.pair_sum(fixed)?.minus(&lead.times(&self.s2()?)));
        }
        let terms = self
            .pairs()
            .par_iter()
            .map(|&(a, b, w)| {
                let chi = if m == 1 {
                    self.dens.chi3([fixed[0], a, b])?
                } else {
                    self.dens.chi4([fixed[0], fixed[1], a, b])?
                };
                Ok((w, chi))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(weighted_sum(terms))
    }

    fn single(&self, center: Vec3, fixed: &[Vec3]) -> Result<Ev> {
        if fixed.len() + 1 > self.dens.max_order() {
            return Ok(Ev::default());
        }
        let terms = self
            .single_nodes(center)
            .par_iter()
            .map(|&(x, w)| {
                let mut pts = fixed.to_vec();
                pts.push(x);
                Ok((w, self.dens.rho(&pts)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(weighted_sum(terms))
    }

    /// (∂ρ^(1))v(R₁).
    pub fn d_rho1(&self, r1: Vec3) -> Result<DerivativeResult> {
        let b = self.beta;
        let single = self.single(r1, &[r1])?.scaled(-b);
        let double = self.double(&[r1])?.scaled(-0.5 * b);
        Ok(DerivativeResult::from_parts(
            vec![("single", single), ("double", double)],
            self.dens.provenance(),
        ))
    }

    /// (∂ρ^(2))v(R₁,R₂).
    pub fn d_rho2(&self, r1: Vec3, r2: Vec3) -> Result<DerivativeResult> {
        let b = self.beta;
        let rho2 = self.dens.rho_or_zero(&[r1, r2])?;
        let mult = rho2.scaled(-b * self.v.evaluate(dist(r1, r2)));
        let s1 = self.single(r1, &[r1, r2])?.scaled(-b);
        let s2 = self.single(r2, &[r1, r2])?.scaled(-b);
        let double = self.double(&[r1, r2])?.scaled(-0.5 * b);
        Ok(DerivativeResult::from_parts(
            vec![
                ("multiplication", mult),
                ("single_1", s1),
                ("single_2", s2),
                ("double", double),
            ],
            self.dens.provenance(),
        ))
    }

    /// Finite-box (∂ω^(2))v = ∂ρ^(2) − ρ^(1)(R₁)∂ρ^(1)(R₂) − ρ^(1)(R₂)∂ρ^(1)(R₁).
    pub fn d_omega2(&self, r1: Vec3, r2: Vec3) -> Result<DerivativeResult> {
        let d2 = self.d_rho2(r1, r2)?;
        let p1 = self.dens.rho(&[r1])?;
        let p2 = self.dens.rho(&[r2])?;
        let d1a = self.d_rho1(r1)?;
        let d1b = self.d_rho1(r2)?;
        let mut components = d2.components.clone();
        components.push(("product_1".into(), -p1.v * d1b.value));
        components.push(("product_2".into(), -p2.v * d1a.value));
        let value = components.iter().map(|(_, x)| x).sum();
        let stderr = d2.stderr
            + p1.v.abs() * d1b.stderr
            + p1.e * d1b.value.abs()
            + p2.v.abs() * d1a.stderr
            + p2.e * d1a.value.abs();
        Ok(DerivativeResult {
            value,
            stderr,
            components,
            provenance: d2.provenance,
        })
    }
}

fn check_ball_inside(measure: &Measure, points: &[Vec3], params: &EnsembleParams) -> Result<()> {
    if let Measure::Ball {
        inner,
        outer,
        clip: None,
    } = measure
    {
        let reach = |r: &SphereRule| r.offsets.iter().map(|o| norm(*o)).fold(0.0, f64::max);
        let half = 0.5 * params.box_side;
        let ri = reach(inner);
        let ro = reach(outer);
        for p in points {
            if p.iter().any(|c| c.abs() + ri > half) || ro + ri > half {
                return Err(Error::Domain(format!(
                    "ball measure around {p:?} leaves the box of side {}",
                    params.box_side
                )));
            }
        }
    }
    Ok(())
}

/// −β∫v(|R₁−R′|)ρ^(2)(R₁,R′) − (β/2)∬v(|R₁′−R₂′|)χ^(3)(R₁,R₁′,R₂′).
pub fn d_rho1(
    v: &Perturbation,
    r1: Vec3,
    pot: &PairPotential,
    params: &EnsembleParams,
    dens: &dyn Densities,
    measure: &Measure,
) -> Result<DerivativeResult> {
    check_perturbation(v, pot, params.t0)?;
    if v.is_zero() {
        return Ok(zero_result(dens));
    }
    check_ball_inside(measure, &[r1], params)?;
    DerivativeEvaluator::new(dens, measure, v, params.beta).d_rho1(r1)
}

/// The four-term (∂ρ^(2))v(R₁,R₂).
pub fn d_rho2(
    v: &Perturbation,
    r1: Vec3,
    r2: Vec3,
    pot: &PairPotential,
    params: &EnsembleParams,
    dens: &dyn Densities,
    measure: &Measure,
) -> Result<DerivativeResult> {
    check_perturbation(v, pot, params.t0)?;
    if v.is_zero() {
        return Ok(zero_result(dens));
    }
    check_ball_inside(measure, &[r1, r2], params)?;
    DerivativeEvaluator::new(dens, measure, v, params.beta).d_rho2(r1, r2)
}

/// Finite-box (∂ω^(2))v(R₁,R₂).
pub fn d_omega2(
    v: &Perturbation,
    r1: Vec3,
    r2: Vec3,
    pot: &PairPotential,
    params: &EnsembleParams,
    dens: &dyn Densities,
    measure: &Measure,
) -> Result<DerivativeResult> {
    check_perturbation(v, pot, params.t0)?;
    if v.is_zero() {
        return Ok(zero_result(dens));
    }
    check_ball_inside(measure, &[r1, r2], params)?;
    DerivativeEvaluator::new(dens, measure, v, params.beta).d_omega2(r1, r2)
}

fn zero_result(dens: &dyn Densities) -> DerivativeResult {
    DerivativeResult {
        value: 0.0,
        stderr: 0.0,
        components: Vec::new(),
        provenance: dens.provenance(),
    }
}

/// Settings of the translation-invariant form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSettings {
    pub order: usize,
    pub r_cut: f64,
    /// Panels per piece of the inner radial rule.
    pub radial_panels: usize,
    pub radial_order: usize,
    pub angular: usize,
    /// Largest accepted bound on the truncated χ^(4) tail.
    pub tail_tol: f64,
    pub quadrature: QuadratureSpec,
}

/// Result of the translation-invariant form with its cutoff tail bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LimitResult {
    pub derivative: DerivativeResult,
    pub tail_bound: f64,
    pub series_box_side: f64,
}

/// −βv(|R|)ρ^(2)(R,0) − 2β∫v(|R′|)ρ^(3)(R,0,R′) − (β/2)∬v(|R′|)χ^(4)(R,0,R″,R″+R′)
/// from the order-K series, with R″ restricted to the ball of radius
/// R_cut. The neglected part is bounded by the χ^(4) majorant:
/// (β/2)‖v‖_𝒴·C·4·∫_{|x|>R_cut−|R|−r_v} G.
pub fn d_rho2_limit(
    v: &Perturbation,
    r: Vec3,
    pot: &PairPotential,
    params: &EnsembleParams,
    settings: &LimitSettings,
) -> Result<LimitResult> {
    check_perturbation(v, pot, params.t0)?;
    let Some((_, v_max)) = v.support() else {
        return Ok(LimitResult {
            derivative: DerivativeResult {
                value: 0.0,
                stderr: 0.0,
                components: Vec::new(),
                provenance: format!("series(K={})", settings.order),
            },
            tail_bound: 0.0,
            series_box_side: params.box_side,
        });
    };
    params.check_admissible(pot)?;
    let reach = settings.r_cut - norm(r) - v_max;
    if reach <= 0.0 {
        return Err(Error::Cutoff(format!(
            "R_cut = {} does not cover |R| + v's support ({})",
            settings.r_cut,
            norm(r) + v_max
        )));
    }
    let tail_bound = if pot.is_ideal() {
        0.0
    } else {
        let g = g_majorant_default(pot, params)?;
        0.5 * params.beta * yu_norm(v, pot, params.beta)? * chi4_constant(&g) * 4.0 * g.g.radial_integral_beyond(reach)
    };
    if tail_bound > settings.tail_tol {
        return Err(Error::Cutoff(format!(
            "tail bound {tail_bound:e} exceeds {:e}; increase R_cut beyond {}",
            settings.tail_tol, settings.r_cut
        )));
    }
    // The series box holds every evaluation point plus the interaction range.
    let side = 2.0 * (settings.r_cut + v_max + norm(r) + pot.range().min(1e3 * pot.length_scale()) + pot.length_scale());
    let box_params = EnsembleParams { box_side: side, ..*params };
    let measure = Measure::ball_for(
        v,
        pot,
        settings.r_cut,
        (settings.radial_panels, settings.radial_order),
        settings.angular,
    )?;
    let origin = [0.0; 3];
    let ideal;
    let series;
    let dens: &dyn Densities = if pot.is_ideal() {
        ideal = IdealGasDensities { z: params.activity_z };
        &ideal
    } else {
        series = SeriesDensities {
            ctx: SeriesContext::new(pot, box_params, settings.quadrature)?,
            order: settings.order,
        };
        &series
    };
    let ev = DerivativeEvaluator::new(dens, &measure, v, params.beta);
    let b = params.beta;
    let rho2 = dens.rho_or_zero(&[r, origin])?;
    let mult = rho2.scaled(-b * v.evaluate(norm(r)));
    let single = ev.single(origin, &[r, origin])?.scaled(-2.0 * b);
    let double = ev.double(&[r, origin])?.scaled(-0.5 * b);
    Ok(LimitResult {
        derivative: DerivativeResult::from_parts(
            vec![("multiplication", mult), ("single", single), ("double", double)],
            dens.provenance(),
        ),
        tail_bound,
        series_box_side: side,
    })
}

/// Quantity whose linearisation remainder is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdTarget {
    Rho1,
    Rho2,
    Omega2,
}

impl std::str::FromStr for FdTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rho1" => Ok(FdTarget::Rho1),
            "rho2" => Ok(FdTarget::Rho2),
            "omega2" => Ok(FdTarget::Omega2),
            other => Err(Error::Configuration(format!("unknown derivative target {other}"))),
        }
    }
}

/// Settings for the finite-difference checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeSettings {
    pub oracle: OracleSettings,
    /// Points (rho1) or point pairs (rho2) for the sup norm.
    pub sample_points: usize,
    pub seed: u64,
    /// Radial grid size of the discrete L¹ norm for omega2.
    pub radial_points: usize,
    /// Rule on the central sub-box Λ′ of half the side.
    pub subbox: GridSpec,
}

impl Default for DerivativeSettings {
    fn default() -> Self {
        Self {
            oracle: OracleSettings {
                n_cap: 3,
                quadrature: QuadratureSpec::Grid(GridSpec { panels: 2, order: 4 }),
            },
            sample_points: 8,
            seed: 0,
            radial_points: 16,
            subbox: GridSpec { panels: 2, order: 3 },
        }
    }
}

/// log r(t) against log t.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlopeReport {
    pub target: String,
    pub slope: f64,
    pub intercept: f64,
    /// (t, r(t), noise floor)
    pub per_t: Vec<(f64, f64, f64)>,
    pub seeds: Vec<u64>,
    pub conclusive: bool,
    pub at_rounding_level: bool,
    pub note: String,
}

impl SlopeReport {
    /// Fits the slope and classifies the curve. A point is at rounding
    /// level when r(t) is below ten times its noise floor; the curve is
    /// inconclusive when r does not decrease with t beyond the noise.
    pub fn from_curve(target: &str, per_t: Vec<(f64, f64, f64)>, seeds: Vec<u64>) -> Self {
        let mut sorted = per_t.clone();
        sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let at_rounding_level = sorted.iter().any(|&(_, r, n)| r <= 10.0 * n);
        let monotone = sorted
            .windows(2)
            .all(|w| w[1].1 < w[0].1 - 2.0 * (w[0].2 + w[1].2));
        let usable = sorted.iter().all(|&(_, r, _)| r > 0.0 && r.is_finite());
        let (slope, intercept) = if usable && sorted.len() >= 2 {
            let ts: Vec<f64> = sorted.iter().map(|p| p.0).collect();
            let rs: Vec<f64> = sorted.iter().map(|p| p.1).collect();
            loglog_slope(&ts, &rs)
        } else {
            (f64::NAN, f64::NAN)
        };
        let conclusive = usable && monotone && !at_rounding_level;
        let note = if at_rounding_level {
            "remainder at rounding level".to_string()
        } else if !monotone {
            "r(t) is not monotone beyond the noise".to_string()
        } else if !usable {
            "r(t) has zero or non-finite entries".to_string()
        } else {
            String::new()
        };
        Self {
            target: target.to_string(),
            slope,
            intercept,
            per_t,
            seeds,
            conclusive,
            at_rounding_level,
            note,
        }
    }

    pub fn slope_within(&self, lo: f64, hi: f64) -> bool {
        self.conclusive && self.slope >= lo && self.slope <= hi
    }
}

/// Sample points uniform in the central sub-box of half the side.
pub fn sample_points(params: &EnsembleParams, n: usize, seed: u64, key: u64) -> Vec<Vec3> {
    let mut s = Stream::new(seed, &[KEY_SAMPLES, key], 0);
    (0..n).map(|_| s.point_in_box(0.5 * params.box_side)).collect()
}

fn noise(scale: f64, err: f64) -> f64 {
    64.0 * f64::EPSILON * scale + err
}

/// The capped oracle is analytic in t at every activity, so only v is gated.
fn grid_check(settings: &DerivativeSettings, pot: &PairPotential, v: &Perturbation, params: &EnsembleParams, ts: &[f64]) -> Result<()> {
    params.validate()?;
    check_perturbation(v, pot, params.t0)?;
    if ts.len() < 2 || ts.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(Error::Precondition("need at least two t values in (0, 1]".into()));
    }
    if settings.oracle.quadrature.grid().is_none() {
        return Err(Error::Precondition(
            "finite-difference checks need a grid rule for the outer integrals".into(),
        ));
    }
    Ok(())
}

/// r(t) = ‖F(u+tv) − F(u) − t(∂F)v‖ with F from the capped oracle: sup over
/// sampled points for rho targets, discrete radial L¹ for omega2.
pub fn fd_validate(
    target: FdTarget,
    v: &Perturbation,
    ts: &[f64],
    pot: &PairPotential,
    params: &EnsembleParams,
    settings: &DerivativeSettings,
) -> Result<SlopeReport> {
    grid_check(settings, pot, v, params, ts)?;
    let b = pot.b()?;
    let base = Oracle::new(pot, b, params, settings.oracle)?;
    let measure = Measure::Box(base.rule().cloned().expect("grid rule"));
    let dens = OracleDensities { oracle: base };
    let ev = DerivativeEvaluator::new(&dens, &measure, v, params.beta);
    let name = match target {
        FdTarget::Rho1 => "rho1",
        FdTarget::Rho2 => "rho2",
        FdTarget::Omega2 => "omega2",
    };
    // Evaluation sets: (points, weight for the norm, F, ∂F).
    let (sets, l1): (Vec<Vec<Vec3>>, Option<Vec<f64>>) = match target {
        FdTarget::Rho1 => (
            sample_points(params, settings.sample_points, settings.seed, 1)
                .into_iter()
                .map(|p| vec![p])
                .collect(),
            None,
        ),
        FdTarget::Rho2 => {
            let a = sample_points(params, settings.sample_points, settings.seed, 2);
            let c = sample_points(params, settings.sample_points, settings.seed, 3);
            (a.into_iter().zip(c).map(|(p, q)| vec![p, q]).collect(), None)
        }
        FdTarget::Omega2 => {
            let n = settings.radial_points.max(2);
            let r_max = 0.25 * params.box_side;
            let dr = r_max / n as f64;
            let mut pts = Vec::new();
            let mut w = Vec::new();
            for i in 0..n {
                let r = (i as f64 + 0.5) * dr;
                pts.push(vec![[r, 0.0, 0.0], [0.0; 3]]);
                w.push(4.0 * PI * r * r * dr);
            }
            (pts, Some(w))
        }
    };
    let value = |d: &dyn Densities, p: &[Vec3]| -> Result<Ev> {
        match target {
            FdTarget::Rho1 | FdTarget::Rho2 => d.rho(p),
            FdTarget::Omega2 => {
                let r2 = d.rho(p)?;
                Ok(r2.minus(&d.rho(&p[..1])?.times(&d.rho(&p[1..])?)))
            }
        }
    };
    let f0 = sets.iter().map(|p| value(&dens, p)).collect::<Result<Vec<_>>>()?;
    let df = sets
        .iter()
        .map(|p| match target {
            FdTarget::Rho1 => ev.d_rho1(p[0]),
            FdTarget::Rho2 => ev.d_rho2(p[0], p[1]),
            FdTarget::Omega2 => ev.d_omega2(p[0], p[1]),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_t = Vec::new();
    for &t in ts {
        let pert = Perturbed { base: pot, v, t };
        let dens_t = OracleDensities {
            oracle: Oracle::new(&pert, b, params, settings.oracle)?,
        };
        let mut acc = 0.0;
        let mut floor = 0.0;
        for (i, p) in sets.iter().enumerate() {
            let ft = value(&dens_t, p)?;
            let rem = (ft.v - f0[i].v - t * df[i].value).abs();
            let nz = noise(ft.v.abs().max(f0[i].v.abs()), ft.e + f0[i].e + t * df[i].stderr);
            match &l1 {
                Some(w) => {
                    acc += w[i] * rem;
                    floor += w[i] * nz;
                }
                None => {
                    if rem > acc {
                        acc = rem;
                        floor = nz;
                    }
                }
            }
        }
        per_t.push((t, acc, floor));
    }
    Ok(SlopeReport::from_curve(name, per_t, vec![settings.seed]))
}

/// ∫_{Λ′}|ω̃^(2)(R,0) − ω^(2)(R,0) − t(∂ω^(2))v(R,0)|dR on the central
/// sub-box of half the side, with the finite-box product rule for ∂ω^(2).
pub fn l1_remainder_check(
    v: &Perturbation,
    ts: &[f64],
    pot: &PairPotential,
    params: &EnsembleParams,
    settings: &DerivativeSettings,
) -> Result<SlopeReport> {
    grid_check(settings, pot, v, params, ts)?;
    let b = pot.b()?;
    let base = Oracle::new(pot, b, params, settings.oracle)?;
    let measure = Measure::Box(base.rule().cloned().expect("grid rule"));
    let dens = OracleDensities { oracle: base };
    let ev = DerivativeEvaluator::new(&dens, &measure, v, params.beta);
    let sub = BoxRule::on_cube(0.5 * params.box_side, 0.0, settings.subbox);
    let origin = [0.0; 3];
    let omega = |d: &dyn Densities, r: Vec3| -> Result<Ev> {
        let r2 = d.rho(&[r, origin])?;
        Ok(r2.minus(&d.rho(&[r])?.times(&d.rho(&[origin])?)))
    };
    // ∂ρ^(1) at the origin is shared by every node.
    let d1_origin = ev.d_rho1(origin)?;
    let rho_origin = dens.rho(&[origin])?;
    let mut w0 = Vec::with_capacity(sub.len());
    let mut dw = Vec::with_capacity(sub.len());
    for &r in &sub.nodes {
        w0.push(omega(&dens, r)?);
        let d2 = ev.d_rho2(r, origin)?;
        let d1 = ev.d_rho1(r)?;
        let rho_r = dens.rho(&[r])?;
        let value = d2.value - rho_r.v * d1_origin.value - rho_origin.v * d1.value;
        let err = d2.stderr + rho_r.v.abs() * d1_origin.stderr + rho_origin.v.abs() * d1.stderr;
        dw.push(Ev::new(value, err));
    }
    let mut per_t = Vec::new();
    for &t in ts {
        let pert = Perturbed { base: pot, v, t };
        let dens_t = OracleDensities {
            oracle: Oracle::new(&pert, b, params, settings.oracle)?,
        };
        let mut acc = 0.0;
        let mut floor = 0.0;
        for (i, &r) in sub.nodes.iter().enumerate() {
            let wt = omega(&dens_t, r)?;
            let rem = (wt.v - w0[i].v - t * dw[i].v).abs();
            let scale = dens_t.rho(&[r, origin])?.v.max(dens.rho(&[r, origin])?.v);
            acc += sub.weights[i] * rem;
            floor += sub.weights[i] * noise(scale, wt.e + w0[i].e + t * dw[i].e);
        }
        per_t.push((t, acc, floor));
    }
    Ok(SlopeReport::from_curve("omega2_l1", per_t, vec![settings.seed]))
}

/// g(r) = 1 + ω^(2)((r,0,0),0)/ρ₀² with ρ₀ = ρ^(1) at the box centre.
/// The result carries no tail model; it is meant for reading on the grid.
pub fn radial_distribution(
    pot: &PairPotential,
    params: &EnsembleParams,
    r_grid: &[f64],
    dens: &dyn Densities,
) -> Result<RadialFunction> {
    params.check_admissible(pot)?;
    let origin = [0.0; 3];
    let rho0 = dens.rho(&[origin])?.v;
    if !(rho0 > 0.0) {
        return Err(Error::Domain(format!("rho1 at the centre is {rho0}")));
    }
    let values = r_grid
        .iter()
        .map(|&r| {
            if r > 0.5 * params.box_side {
                return Err(Error::Domain(format!(
                    "radius {r} leaves the box of side {}",
                    params.box_side
                )));
            }
            let p = [r, 0.0, 0.0];
            let w = dens.rho(&[p, origin])?.v - dens.rho(&[p])?.v * rho0;
            Ok(1.0 + w / (rho0 * rho0))
        })
        .collect::<Result<Vec<_>>>()?;
    RadialFunction::new(r_grid.to_vec(), values, TailModel::Zero)
}
