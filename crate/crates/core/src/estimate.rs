//! Truncated power series in the activity with per-order bookkeeping.

use serde::{Deserialize, Serialize};

/// Value of a truncated expansion.
///
/// `per_order_terms[k] = (N, contribution)` where the contribution already
/// carries its power of the activity, so `value` is their sum.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesEstimate {
    pub value: f64,
    pub stderr: f64,
    pub order: usize,
    pub per_order_terms: Vec<(usize, f64)>,
    pub per_order_stderr: Vec<f64>,
    /// Estimated size of the omitted orders (0 when not available).
    pub tail_bound: f64,
}

impl SeriesEstimate {
    /// Builds an estimate from dense per-order contributions `terms[N]`.
    pub fn from_dense(terms: &[f64], errs: &[f64]) -> Self {
        let mut per_order_terms = Vec::with_capacity(terms.len());
        let mut per_order_stderr = Vec::with_capacity(terms.len());
        for (n, &t) in terms.iter().enumerate() {
            per_order_terms.push((n, t));
            per_order_stderr.push(errs.get(n).copied().unwrap_or(0.0));
        }
        let value = terms.iter().sum();
        let stderr = per_order_stderr.iter().map(|e| e * e).sum::<f64>().sqrt();
        Self {
            value,
            stderr,
            order: terms.len().saturating_sub(1),
            per_order_terms,
            per_order_stderr,
            tail_bound: 0.0,
        }
    }

    pub fn exact(value: f64) -> Self {
        Self::from_dense(&[value], &[0.0])
    }

    /// Contribution of order N (0 if absent).
    pub fn term(&self, n: usize) -> f64 {
        self.per_order_terms
            .iter()
            .find(|(k, _)| *k == n)
            .map(|(_, t)| *t)
            .unwrap_or(0.0)
    }

    pub fn term_stderr(&self, n: usize) -> f64 {
        self.per_order_terms
            .iter()
            .position(|(k, _)| *k == n)
            .and_then(|i| self.per_order_stderr.get(i).copied())
            .unwrap_or(0.0)
    }

    /// Dense contributions for orders 0..=order.
    pub fn dense(&self, order: usize) -> Vec<f64> {
        (0..=order).map(|n| self.term(n)).collect()
    }

    fn dense_err(&self, order: usize) -> Vec<f64> {
        (0..=order).map(|n| self.term_stderr(n)).collect()
    }

    pub fn scale(&self, a: f64) -> Self {
        let k = self.order;
        let t: Vec<f64> = self.dense(k).iter().map(|x| a * x).collect();
        let e: Vec<f64> = self.dense_err(k).iter().map(|x| a.abs() * x).collect();
        let mut out = Self::from_dense(&t, &e);
        out.tail_bound = a.abs() * self.tail_bound;
        out
    }

    /// Order-by-order linear combination `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        let k = self.order.max(other.order);
        let x = self.dense(k);
        let y = other.dense(k);
        let ex = self.dense_err(k);
        let ey = other.dense_err(k);
        let t: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let e: Vec<f64> = ex
            .iter()
            .zip(&ey)
            .map(|(p, q)| ((a * p).powi(2) + (b * q).powi(2)).sqrt())
            .collect();
        let mut out = Self::from_dense(&t, &e);
        out.tail_bound = a.abs() * self.tail_bound + b.abs() * other.tail_bound;
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(1.0, other, -1.0)
    }

    /// Cauchy product truncated at `order`.
    pub fn mul(&self, other: &Self, order: usize) -> Self {
        let x = self.dense(order);
        let y = other.dense(order);
        let ex = self.dense_err(order);
        let ey = other.dense_err(order);
        let mut t = vec![0.0; order + 1];
        let mut e2 = vec![0.0; order + 1];
        for a in 0..=order {
            for b in 0..=(order - a) {
                t[a + b] += x[a] * y[b];
                e2[a + b] += (ex[a] * y[b]).powi(2) + (x[a] * ey[b]).powi(2);
            }
        }
        let e: Vec<f64> = e2.iter().map(|v| v.sqrt()).collect();
        Self::from_dense(&t, &e)
    }

    /// Sum of absolute contributions, used as a scale for relative gaps.
    pub fn abs_mass(&self, n: usize) -> f64 {
        self.term(n).abs()
    }

    /// Geometric truncation budget from the last two contributions,
    /// 2|t_K|q/(1−q) with q = |t_K/t_{K−1}|, infinite when q ≥ 1.
    pub fn truncation_budget(&self) -> f64 {
        let k = self.order;
        let last = self.term(k).abs();
        if k == 0 || last == 0.0 {
            return 0.0;
        }
        let prev = self.term(k - 1).abs();
        if prev == 0.0 {
            return f64::INFINITY;
        }
        let q = last / prev;
        if q >= 1.0 {
            f64::INFINITY
        } else {
            2.0 * last * q / (1.0 - q)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_is_sum_of_terms() {
        let s = SeriesEstimate::from_dense(&[0.0, 1.0, 0.5, 0.25], &[0.0; 4]);
        assert_eq!(s.value, 1.75);
        assert_eq!(s.order, 3);
        assert_eq!(s.term(2), 0.5);
    }

    #[test]
    fn cauchy_product_truncates() {
        let a = SeriesEstimate::from_dense(&[0.0, 1.0, 2.0], &[0.0; 3]);
        let p = a.mul(&a, 3);
        assert_eq!(p.dense(3), vec![0.0, 0.0, 1.0, 4.0]);
    }

    #[test]
    fn geometric_budget() {
        let s = SeriesEstimate::from_dense(&[0.0, 1.0, 0.5, 0.25], &[0.0; 4]);
        assert!((s.truncation_budget() - 0.5).abs() < 1e-15);
    }
}

/// Arithmetic needed to assemble Ursell and χ combinations from ρ values.
pub trait Ring: Clone {
    fn plus(&self, other: &Self) -> Self;
    fn minus(&self, other: &Self) -> Self;
    fn times(&self, other: &Self) -> Self;
    fn scaled(&self, a: f64) -> Self;
}

impl Ring for SeriesEstimate {
    fn plus(&self, other: &Self) -> Self {
        self.add(other)
    }
    fn minus(&self, other: &Self) -> Self {
        self.sub(other)
    }
    fn times(&self, other: &Self) -> Self {
        self.mul(other, self.order.max(other.order))
    }
    fn scaled(&self, a: f64) -> Self {
        self.scale(a)
    }
}

/// A value with a first-order propagated standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ev {
    pub v: f64,
    pub e: f64,
}

impl Ev {
    pub fn new(v: f64, e: f64) -> Self {
        Self { v, e }
    }
}

impl Ring for Ev {
    fn plus(&self, o: &Self) -> Self {
        Ev::new(self.v + o.v, self.e.hypot(o.e))
    }
    fn minus(&self, o: &Self) -> Self {
        Ev::new(self.v - o.v, self.e.hypot(o.e))
    }
    fn times(&self, o: &Self) -> Self {
        Ev::new(self.v * o.v, (self.e * o.v).hypot(self.v * o.e))
    }
    fn scaled(&self, a: f64) -> Self {
        Ev::new(a * self.v, a.abs() * self.e)
    }
}

/// ω^(2)(a,b) = ρ(ab) − ρ(a)ρ(b); `rho` takes point indices.
pub fn omega2<R: Ring>(rho: &mut impl FnMut(&[usize]) -> R, a: usize, b: usize) -> R {
    rho(&[a, b]).minus(&rho(&[a]).times(&rho(&[b])))
}

/// ω^(3)(a,b,c) = ρ(abc) − ρ(bc)ρ(a) − ω(ac)ρ(b) − ω(ab)ρ(c).
pub fn omega3<R: Ring>(rho: &mut impl FnMut(&[usize]) -> R, a: usize, b: usize, c: usize) -> R {
    let t1 = rho(&[a, b, c]);
    let t2 = rho(&[b, c]).times(&rho(&[a]));
    let t3 = omega2(rho, a, c).times(&rho(&[b]));
    let t4 = omega2(rho, a, b).times(&rho(&[c]));
    t1.minus(&t2).minus(&t3).minus(&t4)
}

/// ω^(4) exactly as the nine-term combination with ω^(2), ω^(3) and ρ.
pub fn omega4<R: Ring>(rho: &mut impl FnMut(&[usize]) -> R, p: [usize; 4]) -> R {
    let [a, b, c, d] = p;
    let mut acc = rho(&[a, b, c, d]);
    let sub = [
        rho(&[a, b]).times(&rho(&[c, d])),
        omega3(rho, a, b, c).times(&rho(&[d])),
        omega2(rho, a, d).times(&omega2(rho, b, c)),
        omega3(rho, a, b, d).times(&rho(&[c])),
        omega2(rho, a, c).times(&omega2(rho, b, d)),
        rho(&[a, c, d]).times(&rho(&[b])),
        rho(&[b, c, d]).times(&rho(&[a])),
    ];
    for s in &sub {
        acc = acc.minus(s);
    }
    let last = rho(&[c, d]).times(&rho(&[a])).times(&rho(&[b])).scaled(2.0);
    acc.plus(&last)
}

/// χ^(3)(a,b,c) = ρ(abc) − ρ(a)ρ(bc).
pub fn chi3<R: Ring>(rho: &mut impl FnMut(&[usize]) -> R, a: usize, b: usize, c: usize) -> R {
    rho(&[a, b, c]).minus(&rho(&[a]).times(&rho(&[b, c])))
}

/// χ^(4)(a,b,c,d) = ρ(abcd) − ρ(ab)ρ(cd).
pub fn chi4<R: Ring>(rho: &mut impl FnMut(&[usize]) -> R, p: [usize; 4]) -> R {
    let [a, b, c, d] = p;
    rho(&[a, b, c, d]).minus(&rho(&[a, b]).times(&rho(&[c, d])))
}
