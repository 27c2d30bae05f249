//! Truncated graph expansions of ρ^(m), ω^(m), τ^(1,2) and ζ^(m), and
//! the order-by-order identity checks that connect them.
//!
//! A series coefficient is an integral over the black labels of the sum of
//! bond products over a graph family. The family sum is evaluated per
//! sample point (all member graphs share the same sample), which by
//! linearity equals the sum of the individual graph integrals.

use serde::{Deserialize, Serialize};

use crate::estimate::{chi3, omega2, omega3, omega4, Ring};
use crate::graphs::{member_masks_cached, pairs, FamilyKind, LabeledGraph};
use crate::potential::{EnsembleParams, Interaction, PairPotential};
use crate::quadrature::{integrate_labels, BoxRule, Integral, QuadratureSpec};
use crate::rng::point_key;
use crate::{dist, Error, Result, SeriesEstimate, Vec3};

/// Largest series order.
pub const MAX_ORDER: usize = 6;
const KEY_SERIES: u64 = 0x5E_41E5;

/// Signed f bonds or |f| bonds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    Signed,
    Absolute,
}

/// Π f_ij (or Π |f_ij|) over the edges of `g`; `coords[p]` is the position
/// of the p-th smallest label.
pub fn graph_weight(
    g: &LabeledGraph,
    coords: &[Vec3],
    pot: &dyn Interaction,
    beta: f64,
    mode: WeightMode,
) -> Result<f64> {
    let labels = g.vertices.labels();
    if coords.len() != labels.len() {
        return Err(Error::Precondition(format!(
            "graph has {} vertices but {} coordinates were given",
            labels.len(),
            coords.len()
        )));
    }
    let pos = |l: usize| labels.binary_search(&l).unwrap();
    let mut w = 1.0;
    for &(i, j) in &g.edges {
        let f = pot.mayer(dist(coords[pos(i)], coords[pos(j)]), beta);
        w *= match mode {
            WeightMode::Signed => f,
            WeightMode::Absolute => f.abs(),
        };
    }
    Ok(w)
}

/// One graph integral ∫ Π f over the labels not covered by `fixed`.
#[derive(Clone, Debug)]
pub struct GraphIntegralJob {
    pub graph: LabeledGraph,
    /// Coordinates of the first `fixed.len()` labels in increasing order.
    pub fixed: Vec<Vec3>,
    pub box_side: f64,
    pub mode: WeightMode,
}

pub fn graph_integral(
    job: &GraphIntegralJob,
    pot: &dyn Interaction,
    beta: f64,
    quad: &QuadratureSpec,
) -> Result<SeriesEstimate> {
    let n = job.graph.vertices.len();
    let m = job.fixed.len();
    if m > n {
        return Err(Error::Precondition("more fixed points than vertices".into()));
    }
    let k = n - m;
    let rule = quad.grid().map(|g| BoxRule::new(job.box_side, g));
    let key = [KEY_SERIES, 0xF00, n as u64, point_key(&job.fixed)];
    let r = integrate_labels(k, job.box_side, quad.backend_for(k), rule.as_ref(), &key, |xs| {
        let coords: Vec<Vec3> = job.fixed.iter().chain(xs.iter()).copied().collect();
        graph_weight(&job.graph, &coords, pot, beta, job.mode).unwrap_or(0.0)
    });
    let mut s = SeriesEstimate::exact(r.value);
    s.stderr = r.stderr;
    s.per_order_stderr = vec![r.stderr];
    s.order = n;
    s.per_order_terms = vec![(n, r.value)];
    Ok(s)
}

/// Integration context shared by all series evaluators.
pub struct SeriesContext<'a> {
    pub pot: &'a PairPotential,
    pub params: EnsembleParams,
    pub quad: QuadratureSpec,
    rule: Option<BoxRule>,
}

impl<'a> SeriesContext<'a> {
    /// Checks the activity against z_max before any evaluation.
    pub fn new(pot: &'a PairPotential, params: EnsembleParams, quad: QuadratureSpec) -> Result<Self> {
        params.validate()?;
        params.check_admissible(pot)?;
        let rule = quad.grid().map(|g| BoxRule::new(params.box_side, g));
        Ok(Self {
            pot,
            params,
            quad,
            rule,
        })
    }

    /// ∫_{Λ^{n−m}} Σ_{g ∈ family} Π bonds, first m positions fixed.
    pub fn family_integral(
        &self,
        kind: FamilyKind,
        n: usize,
        white: u32,
        fixed: &[Vec3],
        mode: WeightMode,
    ) -> Result<Integral> {
        let m = fixed.len();
        let masks = member_masks_cached(kind, n, white)?;
        if masks.is_empty() {
            return Ok(Integral::exact(0.0));
        }
        let ps = pairs(n);
        let e = ps.len();
        let k = n - m;
        let beta = self.params.beta;
        let pot = self.pot;
        // bond values between fixed points do not depend on the sample
        let mut fixed_bonds = vec![0.0; e];
        for (slot, &(a, b)) in ps.iter().enumerate() {
            if b < m {
                fixed_bonds[slot] = bond(pot, fixed[a], fixed[b], beta, mode);
            }
        }
        let eval = |xs: &[Vec3]| -> f64 {
            let at = |p: usize| if p < m { fixed[p] } else { xs[p - m] };
            let mut f = [0.0f64; 28];
            for (slot, &(a, b)) in ps.iter().enumerate() {
                f[slot] = if b < m {
                    fixed_bonds[slot]
                } else {
                    bond(pot, at(a), at(b), beta, mode)
                };
            }
            family_sum(&masks, &f[..e])
        };
        let key = [
            KEY_SERIES,
            kind as u64,
            n as u64,
            white as u64,
            mode as u64,
            point_key(fixed),
        ];
        Ok(integrate_labels(
            k,
            self.params.box_side,
            self.quad.backend_for(k),
            self.rule.as_ref(),
            &key,
            eval,
        ))
    }

    fn series(
        &self,
        kind: FamilyKind,
        white: u32,
        points: &[Vec3],
        order: usize,
        mode: WeightMode,
        activity: f64,
    ) -> Result<SeriesEstimate> {
        let m = points.len();
        if order > MAX_ORDER {
            return Err(Error::SizeCap {
                size: order,
                cap: MAX_ORDER,
                estimate: 1u64 << (order * (order - 1) / 2),
            });
        }
        if m > order {
            return Err(Error::Precondition(format!(
                "series order {order} is below the number of fixed points {m}"
            )));
        }
        let mut terms = vec![0.0; order + 1];
        let mut errs = vec![0.0; order + 1];
        let mut fact = 1.0;
        for n in m..=order {
            if n > m {
                fact *= (n - m) as f64;
            }
            let w = activity.powi(n as i32) / fact;
            let r = self.family_integral(kind, n, white, points, mode)?;
            terms[n] = w * r.value;
            errs[n] = w * r.stderr;
        }
        let mut s = SeriesEstimate::from_dense(&terms, &errs);
        s.tail_bound = s.truncation_budget();
        Ok(s)
    }

    /// ω^(m) = Σ_{N=m}^{K} z^N/(N−m)! Σ_connected ∫ Π f.
    pub fn ursell_series(&self, points: &[Vec3], order: usize) -> Result<SeriesEstimate> {
        self.series(
            FamilyKind::Connected,
            low_mask(points.len()),
            points,
            order,
            WeightMode::Signed,
            self.params.activity_z,
        )
    }

    /// ρ^(m) over RootedZ graphs with the m fixed points white.
    pub fn rho_series(&self, points: &[Vec3], order: usize) -> Result<SeriesEstimate> {
        self.series(
            FamilyKind::RootedZ,
            low_mask(points.len()),
            points,
            order,
            WeightMode::Signed,
            self.params.activity_z,
        )
    }

    /// τ^(1) or τ^(2): tree sums with |f| bonds and weights (ze^{2βB})^N.
    pub fn tau_series(&self, points: &[Vec3], order: usize) -> Result<SeriesEstimate> {
        if !(1..=2).contains(&points.len()) {
            return Err(Error::Precondition("tau takes one or two points".into()));
        }
        let a = self.params.activity_z * (2.0 * self.params.beta * self.pot.b()?).exp();
        self.series(FamilyKind::Tree, 1, points, order, WeightMode::Absolute, a)
    }

    /// ζ^(m), m ∈ {3,4}: ZCross graphs with white {1,2}, first m labels fixed.
    pub fn zeta_series(&self, points: &[Vec3], order: usize) -> Result<SeriesEstimate> {
        if !(3..=4).contains(&points.len()) {
            return Err(Error::Precondition("zeta takes three or four points".into()));
        }
        self.series(
            FamilyKind::ZCross,
            0b11,
            points,
            order,
            WeightMode::Signed,
            self.params.activity_z,
        )
    }

    /// Signed series with the |graph|-summed series as its comparison scale.
    fn tracked(&self, kind: FamilyKind, white: u32, points: &[Vec3], order: usize) -> Result<Tracked> {
        let z = self.params.activity_z;
        let s = self.series(kind, white, points, order, WeightMode::Signed, z)?;
        let abs = self.series(kind, white, points, order, WeightMode::Absolute, z)?;
        let dense: Vec<f64> = abs.dense(order).iter().zip(s.dense(order)).map(|(a, b)| a.max(b.abs())).collect();
        Ok(Tracked {
            s,
            mass: SeriesEstimate::from_dense(&dense, &[]),
        })
    }

    fn rho_tracked(&self, points: &[Vec3], order: usize) -> Result<Tracked> {
        self.tracked(FamilyKind::RootedZ, low_mask(points.len()), points, order)
    }

    fn ursell_tracked(&self, points: &[Vec3], order: usize) -> Result<Tracked> {
        self.tracked(FamilyKind::Connected, low_mask(points.len()), points, order)
    }

    fn zeta_tracked(&self, points: &[Vec3], order: usize) -> Result<Tracked> {
        if !(3..=4).contains(&points.len()) {
            return Err(Error::Precondition("zeta takes three or four points".into()));
        }
        self.tracked(FamilyKind::ZCross, 0b11, points, order)
    }

    fn boltzmann(&self, a: Vec3, b: Vec3) -> f64 {
        self.pot.boltzmann(dist(a, b), self.params.beta)
    }

    /// ρ series at index subsets of `points`, cached, with absolute mass.
    fn rho_table<'s>(
        &'s self,
        points: &'s [Vec3],
        order: usize,
    ) -> impl FnMut(&[usize]) -> Tracked + 's {
        let mut cache: std::collections::HashMap<Vec<usize>, Tracked> = Default::default();
        move |idx: &[usize]| {
            if let Some(t) = cache.get(idx) {
                return t.clone();
            }
            let pts: Vec<Vec3> = idx.iter().map(|&i| points[i]).collect();
            let t = self.rho_tracked(&pts, order).expect("rho series");
            cache.insert(idx.to_vec(), t.clone());
            t
        }
    }

    fn ursell_table<'s>(
        &'s self,
        points: &'s [Vec3],
        order: usize,
    ) -> impl FnMut(&[usize]) -> Tracked + 's {
        move |idx: &[usize]| {
            let pts: Vec<Vec3> = idx.iter().map(|&i| points[i]).collect();
            let t = if pts.len() == 1 {
                self.rho_tracked(&pts, order)
            } else {
                self.ursell_tracked(&pts, order)
            };
            t.expect("ursell series")
        }
    }

    /// Compares ursell_series(m) with the ρ combinations for m = 2..=min(4, points).
    pub fn ursell_assembly_check(&self, points: &[Vec3], order: usize, tol: f64) -> Result<IdentityReport> {
        let mut report = IdentityReport::new("ursell_assembly", tol);
        let mut rho = self.rho_table(points, order);
        for m in 2..=points.len().min(4) {
            let direct = self.ursell_tracked(&points[..m], order)?;
            let assembled = match m {
                2 => omega2(&mut rho, 0, 1),
                3 => omega3(&mut rho, 0, 1, 2),
                _ => omega4(&mut rho, [0, 1, 2, 3]),
            };
            report.compare(&format!("omega{m}"), &direct, &assembled, order);
        }
        report.finish()
    }

    /// χ^(3)(R₁,R₂,R₃) = e^{−βu(|R₂−R₃|)} ζ^(3)(R₃,R₂,R₁), order by order.
    pub fn chi3_identity_check(&self, points: &[Vec3; 3], order: usize, tol: f64) -> Result<IdentityReport> {
        let mut report = IdentityReport::new("chi3", tol);
        let mut rho = self.rho_table(points, order);
        let lhs = chi3(&mut rho, 0, 1, 2);
        let zeta = self.zeta_tracked(&[points[2], points[1], points[0]], order)?;
        let rhs = zeta.scaled(self.boltzmann(points[1], points[2]));
        report.compare("chi3", &lhs, &rhs, order);
        report.finish()
    }

    /// η = e^{−βu(|R₃−R₄|)} ζ^(4)(R₃,R₄,R₁,R₂) and
    /// χ^(4) = η + χ^(3)(1,3,4)ρ^(1)(2) + χ^(3)(2,3,4)ρ^(1)(1), order by order.
    pub fn chi4_identity_check(&self, points: &[Vec3; 4], order: usize, tol: f64) -> Result<IdentityReport> {
        let mut report = IdentityReport::new("chi4", tol);
        let mut om = self.ursell_table(points, order);
        let eta = om(&[0, 1, 2, 3])
            .plus(&om(&[0, 1, 2]).times(&om(&[3])))
            .plus(&om(&[0, 3]).times(&om(&[1, 2])))
            .plus(&om(&[0, 2]).times(&om(&[1, 3])))
            .plus(&om(&[0, 1, 3]).times(&om(&[2])));
        let zeta = self.zeta_tracked(&[points[2], points[3], points[0], points[1]], order)?;
        let rhs = zeta.scaled(self.boltzmann(points[2], points[3]));
        report.compare("eta", &eta, &rhs, order);
        let mut rho = self.rho_table(points, order);
        let chi4 = rho(&[0, 1, 2, 3]).minus(&rho(&[0, 1]).times(&rho(&[2, 3])));
        let decomposition = eta
            .plus(&chi3(&mut rho, 0, 2, 3).times(&rho(&[1])))
            .plus(&chi3(&mut rho, 1, 2, 3).times(&rho(&[0])));
        report.compare("chi4", &chi4, &decomposition, order);
        report.finish()
    }
}

#[inline]
fn bond(pot: &dyn Interaction, a: Vec3, b: Vec3, beta: f64, mode: WeightMode) -> f64 {
    let f = pot.mayer(dist(a, b), beta);
    match mode {
        WeightMode::Signed => f,
        WeightMode::Absolute => f.abs(),
    }
}

fn low_mask(m: usize) -> u32 {
    if m == 0 {
        1
    } else {
        (1u32 << m) - 1
    }
}

/// Σ over member masks of the product of selected bond values.
pub(crate) fn family_sum(masks: &[u32], f: &[f64]) -> f64 {
    let e = f.len();
    if e <= 10 {
        let mut prod = [0.0f64; 1 << 10];
        subset_products(f, &mut prod[..1 << e]);
        masks.iter().map(|&m| prod[m as usize]).sum()
    } else {
        let mut prod = vec![0.0f64; 1 << e];
        subset_products(f, &mut prod);
        masks.iter().map(|&m| prod[m as usize]).sum()
    }
}

fn subset_products(f: &[f64], prod: &mut [f64]) {
    prod[0] = 1.0;
    for m in 1..prod.len() {
        let low = m.trailing_zeros() as usize;
        prod[m] = prod[m & (m - 1)] * f[low];
    }
}

/// A series paired with the absolute mass of everything that went into it,
/// which sets the scale of rounding in identity checks.
#[derive(Clone, Debug)]
pub struct Tracked {
    pub s: SeriesEstimate,
    pub mass: SeriesEstimate,
}

impl Ring for Tracked {
    fn plus(&self, o: &Self) -> Self {
        Self {
            s: self.s.add(&o.s),
            mass: self.mass.add(&o.mass),
        }
    }
    fn minus(&self, o: &Self) -> Self {
        Self {
            s: self.s.sub(&o.s),
            mass: self.mass.add(&o.mass),
        }
    }
    fn times(&self, o: &Self) -> Self {
        Self {
            s: self.s.times(&o.s),
            mass: self.mass.times(&o.mass),
        }
    }
    fn scaled(&self, a: f64) -> Self {
        Self {
            s: self.s.scale(a),
            mass: self.mass.scale(a.abs()),
        }
    }
}

/// Per-order comparison of two assembled series.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    pub tolerance: f64,
    /// (quantity, order, lhs, rhs, relative gap)
    pub rows: Vec<(String, usize, f64, f64, f64)>,
    pub max_gap: f64,
    pub worst_order: usize,
    pub passed: bool,
}

impl IdentityReport {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            tolerance,
            rows: Vec::new(),
            max_gap: 0.0,
            worst_order: 0,
            passed: true,
        }
    }

    fn compare(&mut self, what: &str, lhs: &Tracked, rhs: &Tracked, order: usize) {
        for n in 0..=order {
            let (a, b) = (lhs.s.term(n), rhs.s.term(n));
            let scale = a
                .abs()
                .max(b.abs())
                .max(lhs.mass.term(n))
                .max(rhs.mass.term(n));
            let gap = if scale == 0.0 { 0.0 } else { (a - b).abs() / scale };
            if gap > self.max_gap {
                self.max_gap = gap;
                self.worst_order = n;
            }
            self.rows.push((what.to_string(), n, a, b, gap));
        }
        self.passed = self.max_gap <= self.tolerance;
    }

    fn finish(self) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            Err(Error::IdentityViolation {
                order: self.worst_order,
                gap: self.max_gap,
            })
        }
    }
}

/// Convenience wrappers taking a bare potential and ensemble.
pub fn ursell_series(
    points: &[Vec3],
    order: usize,
    pot: &PairPotential,
    params: &EnsembleParams,
    quad: QuadratureSpec,
) -> Result<SeriesEstimate> {
    SeriesContext::new(pot, *params, quad)?.ursell_series(points, order)
}

pub fn rho_series(
    points: &[Vec3],
    order: usize,
    pot: &PairPotential,
    params: &EnsembleParams,
    quad: QuadratureSpec,
) -> Result<SeriesEstimate> {
    SeriesContext::new(pot, *params, quad)?.rho_series(points, order)
}

pub fn tau_series(
    points: &[Vec3],
    order: usize,
    pot: &PairPotential,
    params: &EnsembleParams,
    quad: QuadratureSpec,
) -> Result<SeriesEstimate> {
    SeriesContext::new(pot, *params, quad)?.tau_series(points, order)
}

pub fn zeta_series(
    points: &[Vec3],
    order: usize,
    pot: &PairPotential,
    params: &EnsembleParams,
    quad: QuadratureSpec,
) -> Result<SeriesEstimate> {
    SeriesContext::new(pot, *params, quad)?.zeta_series(points, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::VertexSplit;
    use crate::quadrature::GridSpec;
    use std::f64::consts::E;

    fn grid() -> QuadratureSpec {
        QuadratureSpec::Grid(GridSpec { panels: 1, order: 3 })
    }

    #[test]
    fn graph_weight_examples() {
        let hs = PairPotential::hard_sphere(1.0).unwrap();
        let split = VertexSplit::sized(1, 1).unwrap();
        let empty = LabeledGraph {
            vertices: split.clone(),
            edges: vec![],
        };
        let pts = [[0.0; 3], [0.5, 0.0, 0.0]];
        assert_eq!(graph_weight(&empty, &pts, &hs, 1.0, WeightMode::Signed).unwrap(), 1.0);
        let one = LabeledGraph {
            vertices: split,
            edges: vec![(1, 2)],
        };
        assert_eq!(graph_weight(&one, &pts, &hs, 1.0, WeightMode::Signed).unwrap(), -1.0);
        assert_eq!(graph_weight(&one, &pts, &hs, 1.0, WeightMode::Absolute).unwrap(), 1.0);
        let sw = PairPotential::square_well(1.0, 1.5, 1.0).unwrap();
        let path = LabeledGraph {
            vertices: VertexSplit::sized(1, 2).unwrap(),
            edges: vec![(1, 2), (2, 3)],
        };
        let pts = [[0.0; 3], [1.2, 0.0, 0.0], [2.4, 0.0, 0.0]];
        let w = graph_weight(&path, &pts, &sw, 1.0, WeightMode::Signed).unwrap();
        assert!((w - (E - 1.0).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn low_order_closed_forms() {
        let hs = PairPotential::hard_sphere(1.0).unwrap();
        let params = EnsembleParams::new(1.0, 0.01, 3.0, 0.5).unwrap();
        let ctx = SeriesContext::new(&hs, params, grid()).unwrap();
        let r = [[0.0; 3], [0.7, 0.0, 0.0]];
        let w = ctx.ursell_series(&r, 2).unwrap();
        assert!((w.value - -0.01f64.powi(2)).abs() < 1e-18);
        let rho = ctx.rho_series(&r[..1], 1).unwrap();
        assert_eq!(rho.value, 0.01);
        let t1 = ctx.tau_series(&r[..1], 1).unwrap();
        assert_eq!(t1.value, 0.01);
        let t2 = ctx.tau_series(&r, 2).unwrap();
        assert!((t2.value - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn ideal_gas_series_are_trivial() {
        let pot = PairPotential::ideal();
        let params = EnsembleParams::new(1.0, 0.1, 2.0, 0.5).unwrap();
        let ctx = SeriesContext::new(&pot, params, grid()).unwrap();
        let p = [[0.0; 3], [0.3, 0.0, 0.0], [0.0, 0.4, 0.0]];
        assert_eq!(ctx.ursell_series(&p[..2], 4).unwrap().value, 0.0);
        assert!((ctx.rho_series(&p[..1], 4).unwrap().value - 0.1).abs() < 1e-15);
        assert_eq!(ctx.zeta_series(&p, 3).unwrap().value, 0.0);
    }

    #[test]
    fn zeta3_matches_hand_enumeration() {
        let hs = PairPotential::hard_sphere(1.0).unwrap();
        let params = EnsembleParams::new(1.0, 0.02, 3.0, 0.5).unwrap();
        let ctx = SeriesContext::new(&hs, params, grid()).unwrap();
        let p = [[0.0; 3], [0.9, 0.0, 0.0], [0.4, 0.3, 0.0]];
        let f = |a: Vec3, b: Vec3| hs.mayer(dist(a, b), 1.0);
        let (f13, f23) = (f(p[0], p[2]), f(p[1], p[2]));
        let want = 0.02f64.powi(3) * (f13 + f23 + f13 * f23);
        assert!((ctx.zeta_series(&p, 3).unwrap().value - want).abs() < 1e-20);
    }

    #[test]
    fn inadmissible_activity_is_refused() {
        let hs = PairPotential::hard_sphere(1.0).unwrap();
        let params = EnsembleParams::new(1.0, 0.1, 3.0, 0.5).unwrap();
        assert!(matches!(
            SeriesContext::new(&hs, params, grid()).err(),
            Some(Error::Admissibility { .. })
        ));
    }
}
