//! Ruelle's φ functions, the forest majorants ψ, the derivative recursion
//! φ′ and numerical checks of the inequalities relating them.
//!
//! Label sets are bitmasks over positions in the context configuration.
//! j* is always selected with the unperturbed potential, so the perturbed
//! recursion eliminates the same vertex as the unperturbed one.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::graphs::{member_masks_cached, pairs, FamilyKind};
use crate::potential::{
    check_perturbation, radial_integral, regularity_constant, select_jstar_among, vu_norm, Interaction,
    Perturbation, Perturbed,
};
use crate::quadrature::{integrate_labels, loglog_slope, BoxRule, QuadratureSpec};
use crate::rng::point_key;
use crate::series::family_sum;
use crate::{dist, Error, PairPotential, Result, Vec3};

/// Largest |𝓘 ∪ 𝓙|.
pub const MAX_VERTICES: usize = 6;
const KEY_RUELLE: u64 = 0x0_5E11E;

/// Potential, optional perturbation and coordinates for every label.
#[derive(Clone)]
pub struct PhiContext<'a> {
    pub pot: &'a PairPotential,
    pub beta: f64,
    pub v: Option<Perturbation>,
    pub t0: f64,
    pub config: Vec<Vec3>,
}

impl<'a> PhiContext<'a> {
    pub fn new(pot: &'a PairPotential, beta: f64, config: Vec<Vec3>) -> Self {
        Self {
            pot,
            beta,
            v: None,
            t0: 1.0,
            config,
        }
    }

    /// Attaches v after checking ‖v‖ ≤ t₀/2.
    pub fn with_perturbation(mut self, v: Perturbation, t0: f64) -> Result<Self> {
        check_perturbation(&v, self.pot, t0)?;
        self.v = Some(v);
        self.t0 = t0;
        Ok(self)
    }

    fn perturbation(&self) -> Result<&Perturbation> {
        self.v
            .as_ref()
            .ok_or_else(|| Error::Precondition("this operation needs a perturbation v".into()))
    }

    fn masks(&self, white: &[usize], black: &[usize]) -> Result<(u32, u32)> {
        let n = self.config.len();
        let mut i = 0u32;
        let mut j = 0u32;
        for &a in white {
            if a >= n {
                return Err(Error::Precondition(format!("label {a} has no coordinate")));
            }
            i |= 1 << a;
        }
        for &b in black {
            if b >= n {
                return Err(Error::Precondition(format!("label {b} has no coordinate")));
            }
            j |= 1 << b;
        }
        if i & j != 0 {
            return Err(Error::Precondition("white and black sets overlap".into()));
        }
        let size = (i | j).count_ones() as usize;
        if size > MAX_VERTICES {
            return Err(Error::SizeCap {
                size,
                cap: MAX_VERTICES,
                estimate: 1u64 << (size * (size - 1) / 2),
            });
        }
        Ok((i, j))
    }
}

fn bits(mask: u32) -> impl Iterator<Item = usize> {
    (0..32).filter(move |b| mask & (1 << b) != 0)
}

/// Σ over graphs of a family on the labels I ∪ J with Π bond(i, j).
fn direct_sum(
    kind: FamilyKind,
    i_mask: u32,
    j_mask: u32,
    bond: impl Fn(usize, usize) -> f64,
) -> Result<f64> {
    let labels: Vec<usize> = bits(i_mask | j_mask).collect();
    let n = labels.len();
    let white = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| i_mask & (1 << l) != 0)
        .fold(0u32, |w, (p, _)| w | (1 << p));
    let masks = member_masks_cached(kind, n, white)?;
    let f: Vec<f64> = pairs(n).iter().map(|&(a, b)| bond(labels[a], labels[b])).collect();
    Ok(family_sum(&masks, &f))
}

/// φ(𝓘;𝓙) as the sum over ℨ_{𝓘,𝓙} with the unperturbed potential.
pub fn phi_direct(ctx: &PhiContext<'_>, white: &[usize], black: &[usize]) -> Result<f64> {
    phi_direct_with(ctx, ctx.pot, white, black)
}

/// φ for an arbitrary interaction on the context coordinates.
pub fn phi_direct_with(
    ctx: &PhiContext<'_>,
    pot: &dyn Interaction,
    white: &[usize],
    black: &[usize],
) -> Result<f64> {
    let (i, j) = ctx.masks(white, black)?;
    if i == 0 {
        return Ok(0.0);
    }
    let x = &ctx.config;
    direct_sum(FamilyKind::RootedZ, i, j, |a, b| pot.mayer(dist(x[a], x[b]), ctx.beta))
}

/// Σ over ℨ_{𝓘,𝓙} of Π|f|, the rounding scale for recursion comparisons.
pub fn phi_abs_mass(ctx: &PhiContext<'_>, white: &[usize], black: &[usize]) -> Result<f64> {
    let (i, j) = ctx.masks(white, black)?;
    if i == 0 {
        return Ok(0.0);
    }
    let x = &ctx.config;
    direct_sum(FamilyKind::RootedZ, i, j, |a, b| {
        ctx.pot.mayer(dist(x[a], x[b]), ctx.beta).abs()
    })
}

/// ψ(𝓘;𝓙) = e^{2(N−1)βB} Σ over forests of Π|f|.
pub fn psi(ctx: &PhiContext<'_>, white: &[usize], black: &[usize]) -> Result<f64> {
    let (i, j) = ctx.masks(white, black)?;
    if i == 0 {
        return Ok(0.0);
    }
    let x = &ctx.config;
    let n = (i | j).count_ones() as i32;
    let pre = (2.0 * (n - 1) as f64 * ctx.beta * ctx.pot.b()?).exp();
    let s = direct_sum(FamilyKind::Forest, i, j, |a, b| {
        ctx.pot.mayer(dist(x[a], x[b]), ctx.beta).abs()
    })?;
    Ok(pre * s)
}

/// Pairwise tables for one interaction.
struct Tables {
    n: usize,
    f: Vec<f64>,
    e: Vec<f64>,
}

impl Tables {
    fn new(pot: &dyn Interaction, beta: f64, x: &[Vec3]) -> Self {
        let n = x.len();
        let mut f = vec![0.0; n * n];
        let mut e = vec![1.0; n * n];
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    let bz = pot.boltzmann(dist(x[a], x[b]), beta);
                    e[a * n + b] = bz;
                    f[a * n + b] = bz - 1.0;
                }
            }
        }
        Self { n, f, e }
    }

    #[inline]
    fn f(&self, a: usize, b: usize) -> f64 {
        self.f[a * self.n + b]
    }

    #[inline]
    fn e(&self, a: usize, b: usize) -> f64 {
        self.e[a * self.n + b]
    }
}

/// Recursion engine for one configuration.
struct Engine<'c> {
    pot: &'c PairPotential,
    x: &'c [Vec3],
    e2b: f64,
    jstar: HashMap<u32, usize>,
}

impl<'c> Engine<'c> {
    fn new(ctx: &'c PhiContext<'_>) -> Result<Self> {
        Ok(Self {
            pot: ctx.pot,
            x: &ctx.config,
            e2b: (2.0 * ctx.beta * ctx.pot.b()?).exp(),
            jstar: HashMap::new(),
        })
    }

    fn jstar(&mut self, i: u32) -> Result<usize> {
        if let Some(&j) = self.jstar.get(&i) {
            return Ok(j);
        }
        let labels: Vec<usize> = bits(i).collect();
        let j = labels[select_jstar_among(self.pot, self.x, &labels)?];
        self.jstar.insert(i, j);
        Ok(j)
    }

    fn d(t: &Tables, i: u32, j: usize) -> f64 {
        bits(i).filter(|&a| a != j).map(|a| t.e(a, j)).product()
    }

    fn k(t: &Tables, kk: u32, j: usize) -> f64 {
        bits(kk).map(|a| t.f(a, j)).product()
    }

    fn phi(&mut self, t: &Tables, memo: &mut HashMap<(u32, u32), f64>, i: u32, j: u32) -> Result<f64> {
        if i == 0 {
            return Ok(0.0);
        }
        if i.count_ones() == 1 && j == 0 {
            return Ok(1.0);
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return Ok(v);
        }
        let js = self.jstar(i)?;
        let d = Self::d(t, i, js);
        let mut sum = 0.0;
        for kk in submasks(j) {
            let k = Self::k(t, kk, js);
            if k != 0.0 {
                sum += k * self.phi(t, memo, (i | kk) & !(1 << js), j & !kk)?;
            }
        }
        let v = d * sum;
        memo.insert((i, j), v);
        Ok(v)
    }

    fn psi(&mut self, t: &Tables, memo: &mut HashMap<(u32, u32), f64>, i: u32, j: u32) -> Result<f64> {
        if i == 0 {
            return Ok(0.0);
        }
        if i.count_ones() == 1 && j == 0 {
            return Ok(1.0);
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return Ok(v);
        }
        let js = self.jstar(i)?;
        let mut sum = 0.0;
        for kk in submasks(j) {
            let k = Self::k(t, kk, js).abs();
            if k != 0.0 {
                sum += k * self.psi(t, memo, (i | kk) & !(1 << js), j & !kk)?;
            }
        }
        let v = self.e2b * sum;
        memo.insert((i, j), v);
        Ok(v)
    }

    /// φ′ with dv[a·n+b] = −βv(|R_a − R_b|).
    fn phi_prime(
        &mut self,
        t: &Tables,
        dv: &[f64],
        phi_memo: &mut HashMap<(u32, u32), f64>,
        memo: &mut HashMap<(u32, u32), f64>,
        i: u32,
        j: u32,
    ) -> Result<f64> {
        if i == 0 || (i.count_ones() == 1 && j == 0) {
            return Ok(0.0);
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return Ok(v);
        }
        let n = t.n;
        let js = self.jstar(i)?;
        let d = Self::d(t, i, js);
        let dd = bits(i).filter(|&a| a != js).map(|a| dv[a * n + js]).sum::<f64>() * d;
        let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
        for kk in submasks(j) {
            let next_i = (i | kk) & !(1 << js);
            let next_j = j & !kk;
            let k = Self::k(t, kk, js);
            let dk: f64 = bits(kk)
                .map(|a| {
                    dv[a * n + js]
                        * t.e(a, js)
                        * bits(kk).filter(|&b| b != a).map(|b| t.f(b, js)).product::<f64>()
                })
                .sum();
            let phi = self.phi(t, phi_memo, next_i, next_j)?;
            s1 += k * phi;
            s2 += dk * phi;
            if k != 0.0 {
                s3 += k * self.phi_prime(t, dv, phi_memo, memo, next_i, next_j)?;
            }
        }
        let v = dd * s1 + d * s2 + d * s3;
        memo.insert((i, j), v);
        Ok(v)
    }
}

/// All submasks of m, including 0 and m.
fn submasks(m: u32) -> impl Iterator<Item = u32> {
    let mut next = Some(m);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 { None } else { Some((cur - 1) & m) };
        Some(cur)
    })
}

/// φ(𝓘;𝓙) through the elimination recursion.
pub fn phi_recursive(ctx: &PhiContext<'_>, white: &[usize], black: &[usize]) -> Result<f64> {
    phi_recursive_with(ctx, ctx.pot, white, black)
}

/// The recursion with bonds of `pot`, j* chosen with the context potential.
pub fn phi_recursive_with(
    ctx: &PhiContext<'_>,
    pot: &dyn Interaction,
    white: &[usize],
    black: &[usize],
) -> Result<f64> {
    let (i, j) = ctx.masks(white, black)?;
    let t = Tables::new(pot, ctx.beta, &ctx.config);
    Engine::new(ctx)?.phi(&t, &mut HashMap::new(), i, j)
}

/// ψ through e^{2βB} Σ_𝓚 |k_𝓚| ψ(…).
pub fn psi_recursive(ctx: &PhiContext<'_>, white: &[usize], black: &[usize]) -> Result<f64> {
    let (i, j) = ctx.masks(white, black)?;
    let t = Tables::new(ctx.pot, ctx.beta, &ctx.config);
    let mut eng = Engine::new(ctx)?;
    let base = eng.psi(&t, &mut HashMap::new(), i, j)?;
    Ok(base)
}

fn dv_table(ctx: &PhiContext<'_>, v: &Perturbation) -> Vec<f64> {
    let n = ctx.config.len();
    let mut dv = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            if a != b {
                let r = dist(ctx.config[a], ctx.config[b]);
                if ctx.pot.u(r).is_finite() {
                    dv[a * n + b] = -ctx.beta * v.evaluate(r);
                }
            }
        }
    }
    dv
}

/// The derivative recursion φ′(𝓘;𝓙) in direction v.
pub fn phi_prime(ctx: &PhiContext<'_>, white: &[usize], black: &[usize]) -> Result<f64> {
    let v = ctx.perturbation()?;
    let (i, j) = ctx.masks(white, black)?;
    let t = Tables::new(ctx.pot, ctx.beta, &ctx.config);
    let dv = dv_table(ctx, v);
    Engine::new(ctx)?.phi_prime(&t, &dv, &mut HashMap::new(), &mut HashMap::new(), i, j)
}

/// Zeroth and first order Taylor remainders of φ at u in direction v.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorRemainders {
    pub phi: f64,
    pub phi_tilde: f64,
    pub phi_prime: f64,
    pub delta0: f64,
    pub delta1: f64,
}

pub fn taylor_remainders(ctx: &PhiContext<'_>, white: &[usize], black: &[usize]) -> Result<TaylorRemainders> {
    let v = ctx.perturbation()?;
    let (i, j) = ctx.masks(white, black)?;
    let mut eng = Engine::new(ctx)?;
    let t = Tables::new(ctx.pot, ctx.beta, &ctx.config);
    let pert = Perturbed {
        base: ctx.pot,
        v,
        t: 1.0,
    };
    let tt = Tables::new(&pert, ctx.beta, &ctx.config);
    let dv = dv_table(ctx, v);
    let mut memo = HashMap::new();
    let phi = eng.phi(&t, &mut memo, i, j)?;
    let phi_tilde = eng.phi(&tt, &mut HashMap::new(), i, j)?;
    let phi_prime = eng.phi_prime(&t, &dv, &mut memo, &mut HashMap::new(), i, j)?;
    Ok(TaylorRemainders {
        phi,
        phi_tilde,
        phi_prime,
        delta0: phi_tilde - phi,
        delta1: phi_tilde - phi - phi_prime,
    })
}

/// Fitted order of |φ(u+tv) − φ(u) − tφ′| in t.
pub fn phi_prime_fd_slope(ctx: &PhiContext<'_>, white: &[usize], black: &[usize], ts: &[f64]) -> Result<f64> {
    let v = ctx.perturbation()?;
    let phi = phi_recursive(ctx, white, black)?;
    let dphi = phi_prime(ctx, white, black)?;
    let mut ys = Vec::with_capacity(ts.len());
    for &t in ts {
        let pert = Perturbed { base: ctx.pot, v, t };
        let pt = phi_recursive_with(ctx, &pert, white, black)?;
        ys.push((pt - phi - t * dphi).abs());
    }
    Ok(loglog_slope(ts, &ys).0)
}

/// |φ| against ψ (or e^{−2βB}ψ for |𝓘| = 1).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeGraphReport {
    pub phi: f64,
    pub psi: f64,
    pub bound: f64,
    pub passed: bool,
}

pub fn verify_tree_graph_inequality(ctx: &PhiContext<'_>, white: &[usize], black: &[usize]) -> Result<TreeGraphReport> {
    let phi = phi_direct(ctx, white, black)?;
    let psi_v = psi(ctx, white, black)?;
    // for (|𝓘|,|𝓙|) = (1,0) both sides equal 1 and only |φ| ≤ ψ can hold
    let bound = if white.len() == 1 && !black.is_empty() {
        (-2.0 * ctx.beta * ctx.pot.b()?).exp() * psi_v
    } else {
        psi_v
    };
    let passed = phi.abs() <= bound * (1.0 + 1e-12);
    if !passed {
        return Err(Error::BoundViolation(format!(
            "|φ| = {} exceeds {} for white {:?}, black {:?}, configuration {:?}",
            phi.abs(),
            bound,
            white,
            black,
            ctx.config
        )));
    }
    Ok(TreeGraphReport {
        phi,
        psi: psi_v,
        bound,
        passed,
    })
}

/// Integration settings for the integrated bound checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderSettings {
    pub box_side: f64,
    pub quadrature: QuadratureSpec,
}

/// Constants entering the remainder lemmas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderConstants {
    /// max(c_β(u), c_β(u+v)).
    pub c_beta: f64,
    /// Empirical C_β including the safety factor 2.
    pub c_big: f64,
    /// C of the second-order lemma.
    pub gamma: f64,
    pub v_norm: f64,
}

/// C_β from the scalings s·v, s = 2^{−k}: 2·max ∫|f̃ − f| / ‖sv‖.
pub fn estimate_remainder_constants(pot: &PairPotential, beta: f64, v: &Perturbation, t0: f64) -> Result<RemainderConstants> {
    let v_norm = vu_norm(v, pot)?;
    let c0 = regularity_constant(pot, beta)?;
    let mut breaks = pot.breakpoints();
    breaks.extend(v.breakpoints());
    let rmax = match (pot.range(), v.support()) {
        (r, Some((_, b))) if r.is_finite() => r.max(b),
        (r, None) if r.is_finite() => r,
        _ => 60.0 * pot.length_scale(),
    };
    let mut ratio: f64 = 0.0;
    let mut c_tilde: f64 = c0;
    if v_norm > 0.0 {
        for k in 0..8 {
            let s = 0.5f64.powi(k);
            let pert = Perturbed { base: pot, v, t: s };
            let diff = radial_integral(
                |r| (pert.boltzmann(r, beta) - pot.boltzmann(r, beta)).abs(),
                0.0,
                rmax,
                &breaks,
            );
            let ct = radial_integral(|r| pert.mayer(r, beta).abs(), 0.0, rmax, &breaks);
            c_tilde = c_tilde.max(ct);
            ratio = ratio.max(diff / (s * v_norm));
        }
    }
    let c = c0.max(c_tilde);
    let c_big = 2.0 * ratio;
    let a = (4.0 * c + 2.0 * c_big * t0 + 2.0 * c_big * t0 * t0) / (t0 * t0 * c);
    let b = 0.5 * ((2.0 * c + t0 * c_big) / (t0 * c)).powi(2);
    Ok(RemainderConstants {
        c_beta: c,
        c_big,
        gamma: a.max(b),
        v_norm,
    })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Right side of the first-order lemma.
pub fn delta0_bound(k: &RemainderConstants, pot: &PairPotential, beta: f64, t0: f64, ni: usize, nj: usize) -> Result<f64> {
    let n = ni + nj;
    let e = (2.0 * beta * pot.b()? + 1.0).exp();
    Ok((n as f64 - 1.0) * (2.0 * k.c_beta + t0 * k.c_big) / (t0 * k.c_beta)
        * factorial(nj)
        * k.c_beta.powi(nj as i32)
        * e.powi(n as i32 - 1)
        * k.v_norm)
}

/// Right side of the second-order lemma.
pub fn delta1_bound(k: &RemainderConstants, pot: &PairPotential, beta: f64, ni: usize, nj: usize) -> Result<f64> {
    let n = ni + nj;
    let e = (2.0 * beta * pot.b()? + 1.0).exp();
    Ok(k.gamma
        * ((n as f64) - 1.0).powi(2)
        * factorial(nj)
        * k.c_beta.powi(nj as i32)
        * e.powi(n as i32 - 1)
        * k.v_norm
        * k.v_norm)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RemainderReport {
    pub constants: RemainderConstants,
    pub int_delta0: f64,
    pub err_delta0: f64,
    pub bound_delta0: f64,
    pub int_delta1: f64,
    pub err_delta1: f64,
    pub bound_delta1: f64,
    pub passed: bool,
}

/// ∫|Δ₀φ| and ∫|Δ₁φ| over the black coordinates against both lemmas.
pub fn verify_remainder_bounds(
    ctx: &PhiContext<'_>,
    white: &[usize],
    black: &[usize],
    settings: &RemainderSettings,
) -> Result<RemainderReport> {
    let v = ctx.perturbation()?;
    ctx.masks(white, black)?;
    let constants = estimate_remainder_constants(ctx.pot, ctx.beta, v, ctx.t0)?;
    let (ni, nj) = (white.len(), black.len());
    let bound_delta0 = delta0_bound(&constants, ctx.pot, ctx.beta, ctx.t0, ni, nj)?;
    let bound_delta1 = delta1_bound(&constants, ctx.pot, ctx.beta, ni, nj)?;
    let integrate = |which: fn(&TaylorRemainders) -> f64, tag: u64| -> Result<(f64, f64)> {
        let rule = settings.quadrature.grid().map(|g| BoxRule::new(settings.box_side, g));
        let fixed: Vec<Vec3> = white.iter().map(|&i| ctx.config[i]).collect();
        let key = [KEY_RUELLE, tag, point_key(&fixed), nj as u64];
        let failure = std::sync::Mutex::new(None);
        let r = integrate_labels(
            nj,
            settings.box_side,
            settings.quadrature.backend_for(nj),
            rule.as_ref(),
            &key,
            |xs| {
                let mut local = ctx.clone();
                for (p, &b) in black.iter().enumerate() {
                    local.config[b] = xs[p];
                }
                match taylor_remainders(&local, white, black) {
                    Ok(t) => which(&t).abs(),
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e);
                        0.0
                    }
                }
            },
        );
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
        Ok((r.value, r.stderr))
    };
    let (int_delta0, err_delta0) = integrate(|t| t.delta0, 0)?;
    let (int_delta1, err_delta1) = integrate(|t| t.delta1, 1)?;
    let passed = int_delta0 <= bound_delta0 + 3.0 * err_delta0 && int_delta1 <= bound_delta1 + 3.0 * err_delta1;
    let report = RemainderReport {
        constants,
        int_delta0,
        err_delta0,
        bound_delta0,
        int_delta1,
        err_delta1,
        bound_delta1,
        passed,
    };
    if !passed {
        return Err(Error::BoundViolation(format!("remainder bounds violated: {report:?}")));
    }
    Ok(report)
}

/// MC ∫|φ(𝓘;𝓙)| dR_𝓙 against |𝓙|! c_β^{|𝓙|} (e^{2βB+1})^{|𝓘∪𝓙|−1}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegratedBoundReport {
    pub integral: f64,
    pub stderr: f64,
    pub bound: f64,
    pub passed: bool,
}

pub fn check_ruelle_integrated_bound(
    ctx: &PhiContext<'_>,
    white: &[usize],
    black: &[usize],
    settings: &RemainderSettings,
) -> Result<IntegratedBoundReport> {
    ctx.masks(white, black)?;
    let c = regularity_constant(ctx.pot, ctx.beta)?;
    let nj = black.len();
    let n = white.len() + nj;
    let e = (2.0 * ctx.beta * ctx.pot.b()? + 1.0).exp();
    let bound = factorial(nj) * c.powi(nj as i32) * e.powi(n as i32 - 1);
    let rule = settings.quadrature.grid().map(|g| BoxRule::new(settings.box_side, g));
    let fixed: Vec<Vec3> = white.iter().map(|&i| ctx.config[i]).collect();
    let key = [KEY_RUELLE, 2, point_key(&fixed), nj as u64];
    let r = integrate_labels(
        nj,
        settings.box_side,
        settings.quadrature.backend_for(nj),
        rule.as_ref(),
        &key,
        |xs| {
            let mut local = ctx.clone();
            for (p, &b) in black.iter().enumerate() {
                local.config[b] = xs[p];
            }
            phi_recursive(&local, white, black).map(f64::abs).unwrap_or(f64::NAN)
        },
    );
    Ok(IntegratedBoundReport {
        integral: r.value,
        stderr: r.stderr,
        bound,
        passed: r.value <= bound + 3.0 * r.stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sw() -> PairPotential {
        PairPotential::square_well(1.0, 1.5, 0.5).unwrap()
    }

    #[test]
    fn base_cases() {
        let pot = sw();
        let ctx = PhiContext::new(&pot, 1.0, vec![[0.0; 3], [1.2, 0.0, 0.0], [0.0, 2.0, 0.0]]);
        assert_eq!(phi_direct(&ctx, &[0], &[]).unwrap(), 1.0);
        assert_eq!(phi_direct(&ctx, &[], &[1]).unwrap(), 0.0);
        let f12 = pot.mayer(1.2, 1.0);
        assert!((phi_direct(&ctx, &[0], &[1]).unwrap() - f12).abs() < 1e-15);
        assert!((phi_recursive(&ctx, &[0], &[1]).unwrap() - f12).abs() < 1e-15);
        // both graphs on two white vertices: 1 + f₁₂ = e^{−βu}
        assert!((phi_recursive(&ctx, &[0, 1], &[]).unwrap() - (1.0 + f12)).abs() < 1e-15);
        assert_eq!(psi(&ctx, &[0], &[]).unwrap(), 1.0);
        let e2b = (2.0 * pot.b().unwrap()).exp();
        assert!((psi(&ctx, &[0], &[1]).unwrap() - e2b * f12.abs()).abs() < 1e-12);
    }

    #[test]
    fn submask_enumeration() {
        let v: Vec<u32> = submasks(0b101).collect();
        assert_eq!(v, vec![0b101, 0b100, 0b001, 0]);
        assert_eq!(submasks(0).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn ideal_gas_phi_vanishes_with_black() {
        let pot = PairPotential::ideal();
        let ctx = PhiContext::new(&pot, 1.0, vec![[0.0; 3], [0.3, 0.0, 0.0], [0.0, 0.2, 0.0]]);
        assert_eq!(phi_recursive(&ctx, &[0], &[1, 2]).unwrap(), 0.0);
        assert_eq!(phi_direct(&ctx, &[0, 1], &[2]).unwrap(), 0.0);
    }

    #[test]
    fn phi_prime_single_bond() {
        let pot = sw();
        let v = Perturbation::bump(1.25, 0.2, 0.05);
        let ctx = PhiContext::new(&pot, 1.0, vec![[0.0; 3], [1.2, 0.0, 0.0]])
            .with_perturbation(v.clone(), 1.0)
            .unwrap();
        let want = -v.evaluate(1.2) * pot.boltzmann(1.2, 1.0);
        assert!((phi_prime(&ctx, &[0, 1], &[]).unwrap() - want).abs() < 1e-15);
        let zero = PhiContext::new(&pot, 1.0, ctx.config.clone())
            .with_perturbation(Perturbation::zero(), 1.0)
            .unwrap();
        assert_eq!(phi_prime(&zero, &[0], &[1]).unwrap(), 0.0);
    }
}
