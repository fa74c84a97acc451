//! Immersion evaluators: the trait consumed by the Blaschke extractor plus
//! the classical test surfaces used as oracles.

use std::sync::Arc;

use crate::jets::{finite_difference_jet, JetPoint, JetScalar};
use crate::linalg::Mat;
use crate::{Error, Real, Result};

/// A parametrized immersion of an open chart of R^d into R^(d+1) that can
/// report its Taylor jets at a point.
pub trait Immersion<T: Real>: Send + Sync {
    fn dim_param(&self) -> usize;
    fn dim_ambient(&self) -> usize;

    /// Analytic jets of all ambient components at `point`, order `order`.
    fn jet(&self, point: &[T], order: usize) -> Result<JetPoint<T>>;

    fn eval(&self, point: &[T]) -> Result<Vec<T>> {
        Ok(self.jet(point, 0)?.value())
    }
}

/// How jets are obtained by the extractor: exact jet arithmetic, or a
/// central-difference fallback for pointwise-only immersions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JetMode<T> {
    Analytic,
    FiniteDifference { step: T },
}

impl<T: Real> JetMode<T> {
    pub fn finite_difference_default() -> Self {
        JetMode::FiniteDifference { step: T::from_f64(1e-4).unwrap() }
    }

    pub fn jet_of(&self, imm: &dyn Immersion<T>, point: &[T], order: usize) -> Result<JetPoint<T>> {
        match *self {
            JetMode::Analytic => imm.jet(point, order),
            JetMode::FiniteDifference { step } => {
                finite_difference_jet(|p| imm.eval(p), point, order.min(3), step)
            }
        }
    }
}

/// Variable jets for a parameter point.
pub fn variable_jets<T: Real>(point: &[T], order: usize) -> Vec<JetScalar<T>> {
    let d = point.len();
    point
        .iter()
        .enumerate()
        .map(|(i, &x)| JetScalar::variable(x, i, d, order))
        .collect()
}

/// Graph of |u|^2 / 2 over R^dim: the standard improper affine hypersphere.
#[derive(Debug, Clone)]
pub struct Paraboloid {
    pub dim: usize,
}

impl<T: Real> Immersion<T> for Paraboloid {
    fn dim_param(&self) -> usize {
        self.dim
    }

    fn dim_ambient(&self) -> usize {
        self.dim + 1
    }

    fn jet(&self, point: &[T], order: usize) -> Result<JetPoint<T>> {
        let vars = variable_jets(point, order);
        let mut r2 = JetScalar::constant(T::zero(), self.dim, order);
        for v in &vars {
            r2 = r2.add(&v.mul(v));
        }
        let mut comps = vars;
        comps.push(r2.scale(T::from_f64(0.5).unwrap()));
        Ok(JetPoint::new(comps))
    }
}

/// Graph chart (u, sqrt(1 - |u|^2)) of the upper unit hemisphere.
#[derive(Debug, Clone)]
pub struct SphereChart {
    pub dim: usize,
}

impl SphereChart {
    /// Chart radius kept away from the equator singularity.
    const MAX_R2: f64 = 0.81;
}

impl<T: Real> Immersion<T> for SphereChart {
    fn dim_param(&self) -> usize {
        self.dim
    }

    fn dim_ambient(&self) -> usize {
        self.dim + 1
    }

    fn jet(&self, point: &[T], order: usize) -> Result<JetPoint<T>> {
        let r2_val: T = point.iter().map(|&x| x * x).sum();
        if r2_val > T::from_f64(Self::MAX_R2).unwrap() {
            return Err(Error::Chart(format!("|u|^2 = {r2_val} outside sphere chart")));
        }
        let vars = variable_jets(point, order);
        let mut r2 = JetScalar::constant(T::zero(), self.dim, order);
        for v in &vars {
            r2 = r2.add(&v.mul(v));
        }
        let one = JetScalar::constant(T::one(), self.dim, order);
        let height = one.sub(&r2).sqrt()?;
        let mut comps = vars;
        comps.push(height);
        Ok(JetPoint::new(comps))
    }
}

/// Flat plane (u, 0); degenerate by construction, used as an error-path
/// oracle for the metric extractor.
#[derive(Debug, Clone)]
pub struct Plane {
    pub dim: usize,
}

impl<T: Real> Immersion<T> for Plane {
    fn dim_param(&self) -> usize {
        self.dim
    }

    fn dim_ambient(&self) -> usize {
        self.dim + 1
    }

    fn jet(&self, point: &[T], order: usize) -> Result<JetPoint<T>> {
        let mut comps = variable_jets(point, order);
        comps.push(JetScalar::constant(T::zero(), self.dim, order));
        Ok(JetPoint::new(comps))
    }
}

/// Ambient affine image `x -> M x + b` of another immersion.
pub struct AffineImage<T> {
    pub inner: Arc<dyn Immersion<T>>,
    pub linear: Mat<T>,
    pub translation: Vec<T>,
}

impl<T: Real> Immersion<T> for AffineImage<T> {
    fn dim_param(&self) -> usize {
        self.inner.dim_param()
    }

    fn dim_ambient(&self) -> usize {
        self.inner.dim_ambient()
    }

    fn jet(&self, point: &[T], order: usize) -> Result<JetPoint<T>> {
        let base = self.inner.jet(point, order)?;
        let n = self.dim_ambient();
        let d = self.dim_param();
        let mut comps = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = JetScalar::constant(self.translation[i], d, order);
            for j in 0..n {
                acc = acc.add(&base.component(j).scale(self.linear[(i, j)]));
            }
            comps.push(acc);
        }
        Ok(JetPoint::new(comps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paraboloid_jets() {
        let p = Paraboloid { dim: 2 };
        let jet = Immersion::<f64>::jet(&p, &[1.0, 2.0], 2).unwrap();
        assert_eq!(jet.value(), vec![1.0, 2.0, 2.5]);
        assert_eq!(jet.deriv(&[1, 0]), vec![1.0, 0.0, 1.0]);
        assert_eq!(jet.deriv(&[2, 0]), vec![0.0, 0.0, 1.0]);
        assert_eq!(jet.deriv(&[1, 1]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn sphere_chart_rejects_out_of_chart() {
        let s = SphereChart { dim: 2 };
        assert!(matches!(
            Immersion::<f64>::jet(&s, &[0.9, 0.9], 1),
            Err(Error::Chart(_))
        ));
    }
}
