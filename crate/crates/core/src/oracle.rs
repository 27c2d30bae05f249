//! Brute-force grand-canonical oracle.
//!
//! Ξ and ρ^(m) are evaluated from their defining integrals with the
//! particle number truncated at `n_cap`; numerator and Ξ share the same
//! truncation. Configurational integrals run on a product grid or by
//! Monte Carlo according to the quadrature settings. Monte-Carlo integrals are
//! keyed by (N, free-label count, evaluation points) and never by z, so the
//! same samples are reused when only the activity changes.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimate::{chi3, chi4, omega2, omega3, omega4, Ev};
use crate::potential::{EnsembleParams, Interaction, PairPotential};
use crate::quadrature::{
    integrate_labels, Backend, BoxRule, GridSpec, Integral, McSpec, QuadratureSpec,
};
use crate::rng::point_key;
use crate::{dist, Error, Result, SeriesEstimate, Vec3};

const KEY_Q: u64 = 0x0_0AC1E;
const MAX_MATRIX_NODES: usize = 6000;

/// Truncation and integration settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSettings {
    pub n_cap: usize,
    pub quadrature: QuadratureSpec,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            n_cap: 4,
            quadrature: QuadratureSpec::Auto {
                grid: GridSpec {
                    panels: 2,
                    order: 4,
                },
                mc: McSpec {
                    base_samples: 20_000,
                    seed: 0,
                    shards: 16,
                },
                max_grid_labels: 2,
            },
        }
    }
}

impl OracleSettings {
    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.quadrature.grid() {
            if g.panels == 0 || g.nodes_per_axis() < 2 {
                return Err(Error::Configuration(
                    "grid needs at least two nodes per axis".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Oracle bound to one interaction and one ensemble.
pub struct Oracle<'a> {
    pot: &'a dyn Interaction,
    beta: f64,
    z: f64,
    side: f64,
    b: f64,
    settings: OracleSettings,
    rule: Option<BoxRule>,
    matrix: OnceLock<Vec<f64>>,
    z_terms: Vec<Integral>,
    xi: Ev,
    warnings: Vec<String>,
}

impl<'a> Oracle<'a> {
    /// `b` is the stability constant used in the truncation-tail estimate.
    pub fn new(
        pot: &'a dyn Interaction,
        b: f64,
        params: &EnsembleParams,
        settings: OracleSettings,
    ) -> Result<Self> {
        params.validate()?;
        settings.validate()?;
        let rule = settings
            .quadrature
            .grid()
            .map(|g| BoxRule::new(params.box_side, g));
        let mut warnings = Vec::new();
        if let Some(r) = &rule {
            let hc = pot.hard_core();
            if hc > 0.0 && hc < r.spacing() {
                warnings.push(format!(
                    "hard-core radius {hc} is below the grid spacing {}",
                    r.spacing()
                ));
            }
        }
        let mut oracle = Self {
            pot,
            beta: params.beta,
            z: params.activity_z,
            side: params.box_side,
            b,
            settings,
            rule,
            matrix: OnceLock::new(),
            z_terms: Vec::new(),
            xi: Ev::default(),
            warnings,
        };
        oracle.z_terms = (0..=settings.n_cap).map(|n| oracle.q(&[], n)).collect();
        oracle.xi = oracle.xi_at(oracle.z);
        Ok(oracle)
    }

    /// Same integrals at a different activity (only the weights change).
    pub fn with_activity(&self, z: f64) -> Oracle<'a> {
        let mut o = Oracle {
            pot: self.pot,
            beta: self.beta,
            z,
            side: self.side,
            b: self.b,
            settings: self.settings,
            rule: self.rule.clone(),
            matrix: OnceLock::new(),
            z_terms: self.z_terms.clone(),
            xi: Ev::default(),
            warnings: self.warnings.clone(),
        };
        if let Some(m) = self.matrix.get() {
            let _ = o.matrix.set(m.clone());
        }
        o.xi = o.xi_at(z);
        o
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn n_cap(&self) -> usize {
        self.settings.n_cap
    }

    pub fn rule(&self) -> Option<&BoxRule> {
        self.rule.as_ref()
    }

    fn xi_at(&self, z: f64) -> Ev {
        let mut v = 0.0;
        let mut e2 = 0.0;
        let mut fact = 1.0;
        for (n, q) in self.z_terms.iter().enumerate() {
            if n > 0 {
                fact *= n as f64;
            }
            let w = z.powi(n as i32) / fact;
            v += w * q.value;
            e2 += (w * q.stderr).powi(2);
        }
        Ev::new(v, e2.sqrt())
    }

    /// z^{n+1}|Λ|^{n+1}e^{βB(n+1)}/(n+1)!.
    pub fn tail_bound(&self) -> f64 {
        let n1 = (self.settings.n_cap + 1) as i32;
        let fact: f64 = (1..=n1).map(|k| k as f64).product();
        (self.z * self.side.powi(3) * (self.beta * self.b).exp()).powi(n1) / fact
    }

    /// Ξ truncated at n_cap.
    pub fn partition_function(&self) -> SeriesEstimate {
        let mut terms = Vec::new();
        let mut errs = Vec::new();
        let mut fact = 1.0;
        for (n, q) in self.z_terms.iter().enumerate() {
            if n > 0 {
                fact *= n as f64;
            }
            let w = self.z.powi(n as i32) / fact;
            terms.push(w * q.value);
            errs.push(w * q.stderr);
        }
        let mut s = SeriesEstimate::from_dense(&terms, &errs);
        s.tail_bound = self.tail_bound();
        s
    }

    /// ∫_{Λ^{n−m}} e^{−βU_n(fixed, X)} dX with m = fixed.len().
    pub fn q(&self, fixed: &[Vec3], n: usize) -> Integral {
        let m = fixed.len();
        let k = n - m;
        let mut base = 1.0;
        for i in 0..m {
            for j in (i + 1)..m {
                base *= self.pot.boltzmann(dist(fixed[i], fixed[j]), self.beta);
            }
        }
        if k == 0 || base == 0.0 {
            return Integral::exact(base);
        }
        match self.settings.quadrature.backend_for(k) {
            Backend::Grid(_) => Integral::exact(base * self.grid_q(fixed, k)),
            backend @ Backend::MonteCarlo(_) => {
                let key = [KEY_Q, n as u64, k as u64, point_key(fixed)];
                let pot = self.pot;
                let beta = self.beta;
                let r = integrate_labels(k, self.side, backend, None, &key, |xs| {
                    let mut p = 1.0;
                    for (a, x) in xs.iter().enumerate() {
                        for f in fixed {
                            p *= pot.boltzmann(dist(*x, *f), beta);
                        }
                        for y in &xs[..a] {
                            p *= pot.boltzmann(dist(*x, *y), beta);
                        }
                        if p == 0.0 {
                            return 0.0;
                        }
                    }
                    p
                });
                Integral {
                    value: base * r.value,
                    stderr: base * r.stderr,
                }
            }
        }
    }

    fn node_matrix(&self) -> &[f64] {
        self.matrix.get_or_init(|| {
            let rule = self.rule.as_ref().expect("grid rule");
            let g = rule.len();
            assert!(g <= MAX_MATRIX_NODES, "grid of {g} nodes is too large for the oracle");
            let mut m = vec![0.0; g * g];
            m.par_chunks_mut(g).enumerate().for_each(|(a, row)| {
                for (b, slot) in row.iter_mut().enumerate() {
                    *slot = self.pot.boltzmann(dist(rule.nodes[a], rule.nodes[b]), self.beta);
                }
            });
            m
        })
    }

    /// Σ over node tuples of Π w·e with the fixed points folded into weights.
    fn grid_q(&self, fixed: &[Vec3], k: usize) -> f64 {
        let rule = self.rule.as_ref().expect("grid rule");
        let g = rule.len();
        let h: Vec<f64> = (0..g)
            .map(|c| {
                fixed.iter().fold(rule.weights[c], |acc, f| {
                    acc * self.pot.boltzmann(dist(rule.nodes[c], *f), self.beta)
                })
            })
            .collect();
        if k == 1 {
            return h.iter().sum();
        }
        let e = self.node_matrix();
        let partial: Vec<f64> = (0..g)
            .into_par_iter()
            .map(|a| {
                if h[a] == 0.0 {
                    return 0.0;
                }
                let next: Vec<f64> = (0..g).map(|c| h[c] * e[a * g + c]).collect();
                h[a] * nest(&next, e, g, k - 1)
            })
            .collect();
        partial.iter().sum()
    }

    /// ρ^(m) at the given points; identically 0 when m exceeds n_cap.
    pub fn rho(&self, points: &[Vec3]) -> SeriesEstimate {
        let m = points.len();
        let cap = self.settings.n_cap;
        if m > cap {
            return SeriesEstimate::exact(0.0);
        }
        let mut terms = vec![0.0; cap + 1];
        let mut errs = vec![0.0; cap + 1];
        let mut fact = 1.0;
        for n in m..=cap {
            if n > m {
                fact *= (n - m) as f64;
            }
            let q = self.q(points, n);
            let w = self.z.powi(n as i32) / fact;
            terms[n] = w * q.value;
            errs[n] = w * q.stderr;
        }
        let num: f64 = terms.iter().sum();
        let num_err = errs.iter().map(|e| e * e).sum::<f64>().sqrt();
        let xi = self.xi;
        for t in terms.iter_mut() {
            *t /= xi.v;
        }
        for e in errs.iter_mut() {
            *e /= xi.v;
        }
        let mut s = SeriesEstimate::from_dense(&terms, &errs);
        s.value = num / xi.v;
        s.stderr = ((num_err / xi.v).powi(2) + (num * xi.e / (xi.v * xi.v)).powi(2)).sqrt();
        s.tail_bound = self.tail_bound();
        s
    }

    pub fn ev(&self, points: &[Vec3]) -> Ev {
        let r = self.rho(points);
        Ev::new(r.value, r.stderr)
    }
}

fn nest(g_vec: &[f64], e: &[f64], g: usize, k: usize) -> f64 {
    if k == 1 {
        return g_vec.iter().sum();
    }
    let mut total = 0.0;
    let mut next = vec![0.0; g];
    for a in 0..g {
        let ga = g_vec[a];
        if ga == 0.0 {
            continue;
        }
        let row = &e[a * g..(a + 1) * g];
        for c in 0..g {
            next[c] = g_vec[c] * row[c];
        }
        total += ga * nest(&next, e, g, k - 1);
    }
    total
}

fn oracle_for<'a>(
    pot: &'a PairPotential,
    params: &EnsembleParams,
    settings: OracleSettings,
) -> Result<Oracle<'a>> {
    let b = pot.b()?;
    Oracle::new(pot, b, params, settings)
}

/// Ξ truncated at n_cap.
pub fn partition_function(
    pot: &PairPotential,
    params: &EnsembleParams,
    settings: OracleSettings,
) -> Result<SeriesEstimate> {
    Ok(oracle_for(pot, params, settings)?.partition_function())
}

/// ρ^(m) at `points` (m = points.len() ≤ n_cap).
pub fn rho_m_direct(
    pot: &PairPotential,
    params: &EnsembleParams,
    points: &[Vec3],
    settings: OracleSettings,
) -> Result<SeriesEstimate> {
    check_order(points.len(), 1, settings.n_cap)?;
    Ok(oracle_for(pot, params, settings)?.rho(points))
}

fn check_order(m: usize, lo: usize, cap: usize) -> Result<()> {
    if m < lo || m > cap {
        return Err(Error::Precondition(format!(
            "order {m} must lie in [{lo}, n_cap = {cap}]"
        )));
    }
    Ok(())
}

fn memo_rho<'o>(oracle: &'o Oracle<'_>, points: &'o [Vec3]) -> impl FnMut(&[usize]) -> Ev + 'o {
    let mut cache: std::collections::HashMap<Vec<usize>, Ev> = Default::default();
    move |idx: &[usize]| {
        *cache.entry(idx.to_vec()).or_insert_with(|| {
            let pts: Vec<Vec3> = idx.iter().map(|&i| points[i]).collect();
            oracle.ev(&pts)
        })
    }
}

/// ω^(m), m ∈ {2,3,4}, assembled from oracle ρ values.
pub fn ursell_from_oracle(
    pot: &PairPotential,
    params: &EnsembleParams,
    points: &[Vec3],
    settings: OracleSettings,
) -> Result<Ev> {
    let m = points.len();
    if !(2..=4).contains(&m) {
        return Err(Error::Precondition(format!("Ursell order {m} must be 2, 3 or 4")));
    }
    check_order(m, 2, settings.n_cap)?;
    let oracle = oracle_for(pot, params, settings)?;
    Ok(ursell_with(&oracle, points))
}

pub fn ursell_with(oracle: &Oracle<'_>, points: &[Vec3]) -> Ev {
    let mut rho = memo_rho(oracle, points);
    match points.len() {
        2 => omega2(&mut rho, 0, 1),
        3 => omega3(&mut rho, 0, 1, 2),
        _ => omega4(&mut rho, [0, 1, 2, 3]),
    }
}

/// χ^(3) or χ^(4) from oracle ρ values.
pub fn chi_from_oracle(
    pot: &PairPotential,
    params: &EnsembleParams,
    points: &[Vec3],
    settings: OracleSettings,
) -> Result<Ev> {
    let m = points.len();
    if !(3..=4).contains(&m) {
        return Err(Error::Precondition(format!("chi order {m} must be 3 or 4")));
    }
    check_order(m, 3, settings.n_cap)?;
    let oracle = oracle_for(pot, params, settings)?;
    Ok(chi_with(&oracle, points))
}

pub fn chi_with(oracle: &Oracle<'_>, points: &[Vec3]) -> Ev {
    let mut rho = memo_rho(oracle, points);
    if points.len() == 3 {
        chi3(&mut rho, 0, 1, 2)
    } else {
        chi4(&mut rho, [0, 1, 2, 3])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(panels: usize, order: usize) -> QuadratureSpec {
        QuadratureSpec::Grid(GridSpec { panels, order })
    }

    #[test]
    fn ideal_gas_partition_function() {
        let pot = PairPotential::ideal();
        let params = EnsembleParams::new(1.0, 1.0, 1.0, 0.5).unwrap();
        let s = OracleSettings {
            n_cap: 2,
            quadrature: grid(1, 2),
        };
        let xi = partition_function(&pot, &params, s).unwrap();
        assert!((xi.value - 2.5).abs() < 1e-14);
        let p0 = params.with_z(1e-300);
        assert!((partition_function(&pot, &p0, s).unwrap().value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ideal_gas_capped_density() {
        let pot = PairPotential::ideal();
        let params = EnsembleParams::new(1.0, 0.3, 2.0, 0.5).unwrap();
        let s = OracleSettings {
            n_cap: 3,
            quadrature: grid(1, 2),
        };
        let zv: f64 = 0.3 * 8.0;
        let xi = |n: usize| (0..=n).map(|k| zv.powi(k as i32) / (1..=k).product::<usize>() as f64).sum::<f64>();
        let r = rho_m_direct(&pot, &params, &[[0.1, 0.0, 0.0]], s).unwrap();
        assert!((r.value - 0.3 * xi(2) / xi(3)).abs() < 1e-14);
    }

    #[test]
    fn hard_core_overlap_gives_zero() {
        let pot = PairPotential::hard_sphere(1.0).unwrap();
        let params = EnsembleParams::new(1.0, 0.05, 3.0, 0.5).unwrap();
        let r = rho_m_direct(&pot, &params, &[[0.0; 3], [0.5, 0.0, 0.0]], OracleSettings::default())
            .unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn grid_nesting_matches_generic_sum() {
        let pot = PairPotential::square_well(1.0, 1.5, 0.5).unwrap();
        let params = EnsembleParams::new(1.0, 0.05, 2.0, 0.5).unwrap();
        let spec = GridSpec { panels: 1, order: 3 };
        let o = Oracle::new(&pot, 0.0, &params, OracleSettings { n_cap: 3, quadrature: QuadratureSpec::Grid(spec) }).unwrap();
        let fixed = [[0.1, 0.2, -0.3]];
        let fast = o.q(&fixed, 3).value;
        let slow = integrate_labels(2, 2.0, Backend::Grid(spec), None, &[], |xs| {
            pot.boltzmann(dist(xs[0], fixed[0]), 1.0)
                * pot.boltzmann(dist(xs[1], fixed[0]), 1.0)
                * pot.boltzmann(dist(xs[0], xs[1]), 1.0)
        })
        .value;
        assert!((fast - slow).abs() <= 1e-13 * slow.abs());
    }

    #[test]
    fn ursell_and_chi_vanish_for_ideal_gas_grid() {
        // on a finite cap ω is not exactly zero; at cap ≥ order + 0 with the
        // ideal gas the ratio structure still cancels to the capped value
        let pot = PairPotential::ideal();
        let params = EnsembleParams::new(1.0, 1e-3, 1.0, 0.5).unwrap();
        let s = OracleSettings {
            n_cap: 6,
            quadrature: grid(1, 2),
        };
        let w = ursell_from_oracle(&pot, &params, &[[0.0; 3], [0.2, 0.0, 0.0]], s).unwrap();
        assert!(w.v.abs() < 1e-20);
        let c = chi_from_oracle(&pot, &params, &[[0.0; 3], [0.2, 0.0, 0.0], [0.0, 0.3, 0.0]], s)
            .unwrap();
        assert!(c.v.abs() < 1e-20);
    }
}
