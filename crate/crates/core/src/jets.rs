//! Truncated multivariate Taylor-jet arithmetic.
//!
//! A `JetScalar` holds the Taylor coefficients (derivative / alpha!) of one
//! scalar function of `d` variables at a point, up to total order `m`.
//! Arithmetic and elementary-function composition propagate the coefficients
//! exactly up to floating-point rounding, which gives machine-precision
//! partial derivatives of any immersion built from elementary functions.
//!
//! A finite-difference fallback (`finite_difference_jet`) covers immersions
//! that can only be evaluated pointwise; it supports orders up to 3 with
//! Richardson-extrapolated central differences.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::{Error, Real, Result};

/// Exponent vector of one partial derivative.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub Vec<u8>);

impl MultiIndex {
    pub fn order(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn factorial_f64(&self) -> f64 {
        self.0
            .iter()
            .map(|&e| (1..=e as u64).product::<u64>() as f64)
            .product()
    }
}

/// Shared index tables for one (dimension, order) pair.
#[derive(Debug)]
pub struct JetSpace {
    dim: usize,
    order: usize,
    indices: Vec<Vec<u8>>,
    pos: HashMap<Vec<u8>, usize>,
    /// For each result slot k, the list of coefficient pairs (i, j) with
    /// alpha_i + alpha_j = alpha_k.
    mul_pairs: Vec<Vec<(u32, u32)>>,
}

fn enumerate_indices(dim: usize, order: usize) -> Vec<Vec<u8>> {
    // Graded lexicographic enumeration: all exponent vectors of total
    // order 0, then 1, and so on.
    let mut out = Vec::new();
    let mut current = vec![0u8; dim];
    fn rec(dim: usize, slot: usize, left: u8, current: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if slot == dim {
            if left == 0 {
                out.push(current.clone());
            }
            return;
        }
        for e in 0..=left {
            current[slot] = e;
            rec(dim, slot + 1, left - e, current, out);
        }
        current[slot] = 0;
    }
    for total in 0..=order as u8 {
        rec(dim, 0, total, &mut current, &mut out);
    }
    out
}

impl JetSpace {
    fn new(dim: usize, order: usize) -> Self {
        let indices = enumerate_indices(dim, order);
        let pos: HashMap<Vec<u8>, usize> =
            indices.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
        let n = indices.len();
        let mut mul_pairs = vec![Vec::new(); n];
        for (i, a) in indices.iter().enumerate() {
            let oa: usize = a.iter().map(|&e| e as usize).sum();
            for (j, b) in indices.iter().enumerate() {
                let ob: usize = b.iter().map(|&e| e as usize).sum();
                if oa + ob > order {
                    continue;
                }
                let sum: Vec<u8> = a.iter().zip(b).map(|(&x, &y)| x + y).collect();
                let k = pos[&sum];
                mul_pairs[k].push((i as u32, j as u32));
            }
        }
        JetSpace { dim, order, indices, pos, mul_pairs }
    }

    pub fn get(dim: usize, order: usize) -> Arc<JetSpace> {
        static SPACES: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetSpace>>>> = OnceLock::new();
        let cache = SPACES.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().unwrap();
        map.entry((dim, order))
            .or_insert_with(|| Arc::new(JetSpace::new(dim, order)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn indices(&self) -> &[Vec<u8>] {
        &self.indices
    }

    pub fn position(&self, exps: &[u8]) -> Option<usize> {
        self.pos.get(exps).copied()
    }
}

/// Taylor coefficients of one scalar function, truncated at total order `m`.
#[derive(Debug, Clone)]
pub struct JetScalar<T> {
    space: Arc<JetSpace>,
    coeffs: Vec<T>,
}

impl<T: Real> JetScalar<T> {
    pub fn constant(value: T, dim: usize, order: usize) -> Self {
        let space = JetSpace::get(dim, order);
        let mut coeffs = vec![T::zero(); space.len()];
        coeffs[0] = value;
        JetScalar { space, coeffs }
    }

    /// The i-th coordinate function: value plus unit first derivative.
    pub fn variable(value: T, var: usize, dim: usize, order: usize) -> Self {
        let space = JetSpace::get(dim, order);
        let mut coeffs = vec![T::zero(); space.len()];
        coeffs[0] = value;
        if order >= 1 {
            let mut e = vec![0u8; dim];
            e[var] = 1;
            let k = space.position(&e).unwrap();
            coeffs[k] = T::one();
        }
        JetScalar { space, coeffs }
    }

    pub fn from_coeffs(coeffs: Vec<T>, dim: usize, order: usize) -> Self {
        let space = JetSpace::get(dim, order);
        assert_eq!(coeffs.len(), space.len());
        JetScalar { space, coeffs }
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    pub fn value(&self) -> T {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Taylor coefficient at the given exponent vector.
    pub fn coeff(&self, exps: &[u8]) -> T {
        match self.space.position(exps) {
            Some(k) => self.coeffs[k],
            None => panic!("multi-index {exps:?} outside jet space"),
        }
    }

    /// Derivative value (Taylor coefficient times alpha!).
    pub fn deriv(&self, exps: &[u8]) -> T {
        let fact = MultiIndex(exps.to_vec()).factorial_f64();
        self.coeff(exps) * T::from_f64(fact).unwrap()
    }

    pub fn truncate(&self, order: usize) -> JetScalar<T> {
        assert!(order <= self.order());
        if order == self.order() {
            return self.clone();
        }
        let space = JetSpace::get(self.dim(), order);
        let coeffs = space
            .indices()
            .iter()
            .map(|idx| self.coeff(idx))
            .collect();
        JetScalar { space, coeffs }
    }

    /// Jet of the partial derivative with respect to variable `var`,
    /// truncated at order m-1.
    pub fn derivative(&self, var: usize) -> JetScalar<T> {
        assert!(self.order() >= 1);
        let space = JetSpace::get(self.dim(), self.order() - 1);
        let coeffs = space
            .indices()
            .iter()
            .map(|idx| {
                let mut up = idx.clone();
                up[var] += 1;
                let k = self.space.position(&up).unwrap();
                self.coeffs[k] * T::from_f64((up[var]) as f64).unwrap()
            })
            .collect();
        JetScalar { space, coeffs }
    }

    fn assert_compatible(&self, other: &JetScalar<T>) {
        assert_eq!(self.dim(), other.dim(), "jet dimension mismatch");
        assert_eq!(self.order(), other.order(), "jet order mismatch");
    }

    pub fn add(&self, other: &JetScalar<T>) -> JetScalar<T> {
        self.assert_compatible(other);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| a + b)
            .collect();
        JetScalar { space: self.space.clone(), coeffs }
    }

    pub fn sub(&self, other: &JetScalar<T>) -> JetScalar<T> {
        self.assert_compatible(other);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| a - b)
            .collect();
        JetScalar { space: self.space.clone(), coeffs }
    }

    pub fn neg(&self) -> JetScalar<T> {
        let coeffs = self.coeffs.iter().map(|&a| -a).collect();
        JetScalar { space: self.space.clone(), coeffs }
    }

    pub fn scale(&self, s: T) -> JetScalar<T> {
        let coeffs = self.coeffs.iter().map(|&a| a * s).collect();
        JetScalar { space: self.space.clone(), coeffs }
    }

    pub fn add_scalar(&self, s: T) -> JetScalar<T> {
        let mut out = self.clone();
        out.coeffs[0] = out.coeffs[0] + s;
        out
    }

    /// Truncated Cauchy product.
    pub fn mul(&self, other: &JetScalar<T>) -> JetScalar<T> {
        self.assert_compatible(other);
        let mut coeffs = vec![T::zero(); self.space.len()];
        for (k, pairs) in self.space.mul_pairs.iter().enumerate() {
            let mut s = T::zero();
            for &(i, j) in pairs {
                s = s + self.coeffs[i as usize] * other.coeffs[j as usize];
            }
            coeffs[k] = s;
        }
        JetScalar { space: self.space.clone(), coeffs }
    }

    /// Exact integer power by repeated multiplication.
    pub fn powi(&self, p: usize) -> JetScalar<T> {
        let mut acc = JetScalar::constant(T::one(), self.dim(), self.order());
        for _ in 0..p {
            acc = acc.mul(self);
        }
        acc
    }

    /// Composes `g(self)` given the Taylor coefficients of `g` at the jet's
    /// value: `g_taylor[k] = g^(k)(value) / k!`.
    pub fn compose(&self, g_taylor: &[T]) -> JetScalar<T> {
        let m = self.order();
        assert_eq!(g_taylor.len(), m + 1);
        // w = self - value; w has zero constant term, so w^k starts at order k.
        let mut w = self.clone();
        w.coeffs[0] = T::zero();
        let mut acc = JetScalar::constant(g_taylor[0], self.dim(), m);
        let mut wp = JetScalar::constant(T::one(), self.dim(), m);
        for coeff in g_taylor.iter().skip(1) {
            wp = wp.mul(&w);
            acc = acc.add(&wp.scale(*coeff));
        }
        acc
    }

    pub fn exp(&self) -> JetScalar<T> {
        let v = self.value().exp();
        let mut g = vec![T::zero(); self.order() + 1];
        let mut fact = T::one();
        for (k, gk) in g.iter_mut().enumerate() {
            if k > 0 {
                fact = fact * T::from_f64(k as f64).unwrap();
            }
            *gk = v / fact;
        }
        self.compose(&g)
    }

    pub fn ln(&self) -> Result<JetScalar<T>> {
        let v = self.value();
        if v <= T::zero() {
            return Err(Error::Domain(format!("log of non-positive value {v}")));
        }
        let m = self.order();
        let mut g = vec![T::zero(); m + 1];
        g[0] = v.ln();
        // d^k/dx^k ln x = (-1)^(k-1) (k-1)! / x^k, so the Taylor coefficient
        // is (-1)^(k-1) / (k v^k).
        let mut vp = T::one();
        for (k, gk) in g.iter_mut().enumerate().skip(1) {
            vp = vp * v;
            let sign = if k % 2 == 1 { T::one() } else { -T::one() };
            *gk = sign / (T::from_f64(k as f64).unwrap() * vp);
        }
        Ok(self.compose(&g))
    }

    /// Real power `self^p`; requires a positive value.
    pub fn powf(&self, p: T) -> Result<JetScalar<T>> {
        let v = self.value();
        if v <= T::zero() {
            return Err(Error::Domain(format!("power of non-positive value {v}")));
        }
        let m = self.order();
        let mut g = vec![T::zero(); m + 1];
        // Taylor coefficient k: binom(p, k) v^(p-k).
        let mut binom = T::one();
        for (k, gk) in g.iter_mut().enumerate() {
            if k > 0 {
                binom = binom * (p - T::from_f64((k - 1) as f64).unwrap())
                    / T::from_f64(k as f64).unwrap();
            }
            *gk = binom * v.powf(p - T::from_f64(k as f64).unwrap());
        }
        Ok(self.compose(&g))
    }

    pub fn sqrt(&self) -> Result<JetScalar<T>> {
        self.powf(T::from_f64(0.5).unwrap())
    }

    pub fn recip(&self) -> Result<JetScalar<T>> {
        let v = self.value();
        if v == T::zero() {
            return Err(Error::Domain("division by zero-value jet".into()));
        }
        let m = self.order();
        let mut g = vec![T::zero(); m + 1];
        // Taylor coefficient k of 1/x at v: (-1)^k / v^(k+1).
        let mut vp = v;
        for (k, gk) in g.iter_mut().enumerate() {
            let sign = if k % 2 == 0 { T::one() } else { -T::one() };
            *gk = sign / vp;
            vp = vp * v;
        }
        Ok(self.compose(&g))
    }

    pub fn div(&self, other: &JetScalar<T>) -> Result<JetScalar<T>> {
        Ok(self.mul(&other.recip()?))
    }

    fn trig_taylor(&self, even: fn(T) -> T, odd: fn(T) -> T, signs: [T; 4]) -> Vec<T> {
        // Cyclic derivative table for sin/cos/sinh/cosh.
        let v = self.value();
        let m = self.order();
        let base = [even(v), odd(v), even(v), odd(v)];
        let mut g = vec![T::zero(); m + 1];
        let mut fact = T::one();
        for (k, gk) in g.iter_mut().enumerate() {
            if k > 0 {
                fact = fact * T::from_f64(k as f64).unwrap();
            }
            *gk = signs[k % 4] * base[k % 4] / fact;
        }
        g
    }

    pub fn sin(&self) -> JetScalar<T> {
        let one = T::one();
        let g = self.trig_taylor(|x| x.sin(), |x| x.cos(), [one, one, -one, -one]);
        self.compose(&g)
    }

    pub fn cos(&self) -> JetScalar<T> {
        let one = T::one();
        let g = self.trig_taylor(|x| x.cos(), |x| x.sin(), [one, -one, -one, one]);
        self.compose(&g)
    }

    pub fn sinh(&self) -> JetScalar<T> {
        let one = T::one();
        let g = self.trig_taylor(|x| x.sinh(), |x| x.cosh(), [one, one, one, one]);
        self.compose(&g)
    }

    pub fn cosh(&self) -> JetScalar<T> {
        let one = T::one();
        let g = self.trig_taylor(|x| x.cosh(), |x| x.sinh(), [one, one, one, one]);
        self.compose(&g)
    }
}

/// Binary/unary jet operation selector for the dispatch-style entry point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Exp,
    Log,
    Sin,
    Cos,
    Sinh,
    Cosh,
}

/// Uniform entry point over the elementary jet operations. `b` carries the
/// second operand for binary ops and the exponent for `Pow`.
pub fn jet_arith<T: Real>(
    op: JetOp,
    a: &JetScalar<T>,
    b: Option<&JetScalar<T>>,
    exponent: Option<T>,
) -> Result<JetScalar<T>> {
    match op {
        JetOp::Add => Ok(a.add(b.expect("add needs two operands"))),
        JetOp::Sub => Ok(a.sub(b.expect("sub needs two operands"))),
        JetOp::Mul => Ok(a.mul(b.expect("mul needs two operands"))),
        JetOp::Div => a.div(b.expect("div needs two operands")),
        JetOp::Pow => a.powf(exponent.expect("pow needs an exponent")),
        JetOp::Exp => Ok(a.exp()),
        JetOp::Log => a.ln(),
        JetOp::Sin => Ok(a.sin()),
        JetOp::Cos => Ok(a.cos()),
        JetOp::Sinh => Ok(a.sinh()),
        JetOp::Cosh => Ok(a.cosh()),
    }
}

/// All partial derivatives of an immersion up to order `m` at one point.
#[derive(Debug, Clone)]
pub struct JetPoint<T> {
    components: Vec<JetScalar<T>>,
}

impl<T: Real> JetPoint<T> {
    pub fn new(components: Vec<JetScalar<T>>) -> Self {
        assert!(!components.is_empty());
        let d = components[0].dim();
        let m = components[0].order();
        for c in &components {
            assert_eq!(c.dim(), d);
            assert_eq!(c.order(), m);
        }
        JetPoint { components }
    }

    pub fn dim_ambient(&self) -> usize {
        self.components.len()
    }

    pub fn dim_param(&self) -> usize {
        self.components[0].dim()
    }

    pub fn order(&self) -> usize {
        self.components[0].order()
    }

    pub fn component(&self, k: usize) -> &JetScalar<T> {
        &self.components[k]
    }

    pub fn components(&self) -> &[JetScalar<T>] {
        &self.components
    }

    pub fn value(&self) -> Vec<T> {
        self.components.iter().map(|c| c.value()).collect()
    }

    /// Derivative values of all components at one multi-index.
    pub fn deriv(&self, exps: &[u8]) -> Vec<T> {
        self.components.iter().map(|c| c.deriv(exps)).collect()
    }

    pub fn truncate(&self, order: usize) -> JetPoint<T> {
        JetPoint::new(self.components.iter().map(|c| c.truncate(order)).collect())
    }
}

fn stencil_1d(order: usize) -> Vec<(i32, f64)> {
    // Central-difference offsets (in units of the step) and weights
    // (to be divided by step^order). All have O(step^2) leading error.
    match order {
        0 => vec![(0, 1.0)],
        1 => vec![(-1, -0.5), (1, 0.5)],
        2 => vec![(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => vec![(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        _ => unreachable!(),
    }
}

/// Central-difference jets with Richardson extrapolation over the step pair
/// (step, step/2). Steps are scaled per coordinate by max(1, |x_i|).
pub fn finite_difference_jet<T, F>(
    f: F,
    point: &[T],
    order: usize,
    step: T,
) -> Result<JetPoint<T>>
where
    T: Real,
    F: Fn(&[T]) -> Result<Vec<T>>,
{
    if order > 3 {
        return Err(Error::OrderUnsupported(order));
    }
    let d = point.len();
    let half = T::from_f64(0.5).unwrap();
    // Base unit is step/2 per coordinate; all sample points live on that grid.
    let units: Vec<T> = point
        .iter()
        .map(|&x| step * half * T::one().max(x.abs()))
        .collect();

    let mut cache: HashMap<Vec<i32>, Vec<T>> = HashMap::new();
    let sample = |offsets: &[i32], cache: &mut HashMap<Vec<i32>, Vec<T>>| -> Result<Vec<T>> {
        if let Some(v) = cache.get(offsets) {
            return Ok(v.clone());
        }
        let p: Vec<T> = point
            .iter()
            .zip(offsets)
            .zip(&units)
            .map(|((&x, &o), &u)| x + T::from_f64(o as f64).unwrap() * u)
            .collect();
        let v = f(&p).map_err(|e| Error::Stencil {
            point: format!("{p:?}"),
            reason: e.to_string(),
        })?;
        cache.insert(offsets.to_vec(), v.clone());
        Ok(v)
    };

    let ambient = sample(&vec![0; d], &mut cache)?.len();
    let space = JetSpace::get(d, order);
    let mut coeffs: Vec<Vec<T>> = vec![vec![T::zero(); space.len()]; ambient];

    // Mixed partials by tensor products of 1-d stencils, at scale s (in base
    // units: coarse = 2, fine = 1), then Richardson: (4*fine - coarse) / 3.
    let estimate =
        |exps: &[u8], scale_units: i32, cache: &mut HashMap<Vec<i32>, Vec<T>>| -> Result<Vec<T>> {
            let mut terms: Vec<(Vec<i32>, f64)> = vec![(vec![0; d], 1.0)];
            let mut denom = T::one();
            for (dim, &e) in exps.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let st = stencil_1d(e as usize);
                let mut next = Vec::with_capacity(terms.len() * st.len());
                for (offs, w) in &terms {
                    for &(o, sw) in &st {
                        let mut no = offs.clone();
                        no[dim] = o * scale_units;
                        next.push((no, w * sw));
                    }
                }
                terms = next;
                let s = units[dim] * T::from_f64(scale_units as f64).unwrap();
                denom = denom * s.powi(e as i32);
            }
            let mut acc = vec![T::zero(); ambient];
            for (offs, w) in &terms {
                let v = sample(offs, cache)?;
                let wt = T::from_f64(*w).unwrap();
                for (a, x) in acc.iter_mut().zip(&v) {
                    *a = *a + wt * *x;
                }
            }
            for a in &mut acc {
                *a = *a / denom;
            }
            Ok(acc)
        };

    let four = T::from_f64(4.0).unwrap();
    let third = T::from_f64(1.0 / 3.0).unwrap();
    for (k, exps) in space.indices().iter().enumerate() {
        let total: usize = exps.iter().map(|&e| e as usize).sum();
        let est = if total == 0 {
            sample(&vec![0; d], &mut cache)?
        } else {
            // Higher derivatives divide by step^order, so roundoff grows as
            // eps / step^order; widen the step geometrically with the order
            // to keep truncation and roundoff balanced.
            let boost = 10_i32.pow(total as u32 - 1);
            let coarse = estimate(exps, 2 * boost, &mut cache)?;
            let fine = estimate(exps, boost, &mut cache)?;
            fine.iter()
                .zip(&coarse)
                .map(|(&fi, &co)| (four * fi - co) * third)
                .collect()
        };
        let fact = T::from_f64(MultiIndex(exps.clone()).factorial_f64()).unwrap();
        for (comp, &v) in est.iter().enumerate() {
            coeffs[comp][k] = v / fact;
        }
    }

    Ok(JetPoint::new(
        coeffs
            .into_iter()
            .map(|c| JetScalar::from_coeffs(c, d, order))
            .collect(),
    ))
}
