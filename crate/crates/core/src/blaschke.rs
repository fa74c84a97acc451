//! Pointwise Blaschke structure of a non-degenerate immersion.
//!
//! From the jet of an immersion f at a parameter point this module builds
//! the affine metric h, the affine normal xi, the shape operator S, the
//! induced and Levi-Civita connections, the difference tensor K, the
//! support function rho with its tangential part Z, and the centre point
//! c = f - rho xi.
//!
//! The whole pipeline runs in jet arithmetic, so first derivatives of the
//! derived fields (h, rho, Z*, a0 and, with order-5 input, S) come out
//! analytically. The shape operator needs order-4 jets; with order-3 input
//! (the finite-difference fallback) S is recovered by differencing the
//! affine-normal field.

use crate::immersion::{Immersion, JetMode};
use crate::jets::{JetPoint, JetScalar};
use crate::linalg::{norm2, Mat, Tensor3};
use crate::{Error, Real, Result};

/// Frame condition number above which solves are rejected.
const MAX_FRAME_COND: f64 = 1e10;
/// Relative eigenvalue gap below which spectrum clusters are merged.
pub const CLUSTER_GAP: f64 = 1e-4;
/// Relative threshold on |rho| below which Z* is not formed.
const RHO_FLOOR: f64 = 1e-10;
/// Threshold on h(Z*, Z*) below which a0 is treated as absent.
const A0_FLOOR: f64 = 1e-20;

/// Shape-operator spectrum with multiplicity clustering.
#[derive(Debug, Clone)]
pub struct Spectrum<T> {
    /// Eigenvalues in ascending order.
    pub eigvals: Vec<T>,
    /// Matching eigenvectors as columns, h-orthonormal.
    pub eigvecs: Mat<T>,
    /// Clusters as (start, len) ranges into `eigvals`.
    pub clusters: Vec<(usize, usize)>,
}

/// The full pointwise Blaschke apparatus plus the analytic first
/// derivatives of the derived fields.
#[derive(Debug, Clone)]
pub struct BlaschkePoint<T> {
    pub point: Vec<T>,
    pub value: Vec<T>,
    /// Columns f_*d_1, ..., f_*d_n, xi.
    pub frame: Mat<T>,
    pub h: Mat<T>,
    pub h_inv: Mat<T>,
    /// d_h[k] = partial_k h.
    pub d_h: Vec<Mat<T>>,
    /// Conformal factor |det G|^(-1/(n+2)) of the metric normalization.
    pub conformal: T,
    pub xi: Vec<T>,
    pub s: Option<Mat<T>>,
    /// partial_k S from order-5 jets, when available.
    pub d_s_jets: Option<Tensor3<T>>,
    pub gamma: Tensor3<T>,
    pub gamma_hat: Tensor3<T>,
    pub k_tensor: Tensor3<T>,
    pub rho: T,
    pub d_rho: Vec<T>,
    pub z: Vec<T>,
    /// Z* = Z / rho; absent when rho is numerically zero.
    pub z_star: Option<Vec<T>>,
    /// (partial_i Z*)^k stored at (k, i).
    pub d_z_star: Option<Mat<T>>,
    pub a0: Option<T>,
    pub d_a0: Option<Vec<T>>,
    pub centre: Vec<T>,
    pub spectrum: Option<Spectrum<T>>,
    /// Gauss-relation closure: xi-coefficient of f_ij versus h_ij.
    pub closure_residual: T,
    /// xi-component of D_i xi relative to its tangential part.
    pub weingarten_residual: T,
    /// max_i |trace K_{d_i}|, normalized.
    pub apolarity_residual: T,
}

impl<T: Real> BlaschkePoint<T> {
    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn z_star_or_err(&self) -> Result<&Vec<T>> {
        self.z_star.as_ref().ok_or_else(|| Error::SupportZero {
            point: format!("{:?}", self.point),
            rho: format!("{}", self.rho),
        })
    }

    pub fn s_or_err(&self) -> Result<&Mat<T>> {
        self.s.as_ref().ok_or_else(|| Error::Domain(
            "shape operator unavailable (jet order < 4)".into(),
        ))
    }
}

// ---------------------------------------------------------------------------
// Jet linear algebra helpers
// ---------------------------------------------------------------------------

/// Determinant by Laplace expansion along the first column; exact on the
/// jet ring, no division.
fn jet_det<T: Real>(m: &[Vec<JetScalar<T>>]) -> JetScalar<T> {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    let dim = m[0][0].dim();
    let order = m[0][0].order();
    let mut acc = JetScalar::constant(T::zero(), dim, order);
    for i in 0..n {
        let minor: Vec<Vec<JetScalar<T>>> = (0..n)
            .filter(|&r| r != i)
            .map(|r| m[r][1..].to_vec())
            .collect();
        let term = m[i][0].mul(&jet_det(&minor));
        acc = if i % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
    }
    acc
}

/// Gaussian elimination on the jet ring, pivoting by constant-term
/// magnitude. Solves A x = b for several right-hand sides.
fn jet_solve<T: Real>(
    a: &[Vec<JetScalar<T>>],
    rhs: &[Vec<JetScalar<T>>],
    point: &[T],
) -> Result<Vec<Vec<JetScalar<T>>>> {
    let n = a.len();
    let mut m: Vec<Vec<JetScalar<T>>> = a.to_vec();
    let mut b: Vec<Vec<JetScalar<T>>> = rhs.to_vec();
    let scale = m
        .iter()
        .flat_map(|row| row.iter())
        .fold(T::zero(), |acc, j| acc.max(j.value().abs()));
    for k in 0..n {
        let (p, best) = (k..n)
            .map(|i| (i, m[i][k].value().abs()))
            .fold((k, T::zero()), |acc, it| if it.1 > acc.1 { it } else { acc });
        if best <= scale * T::from_f64(1e-14).unwrap() {
            return Err(Error::FrameSolve {
                point: format!("{point:?}"),
                cond: "singular".into(),
            });
        }
        m.swap(k, p);
        b.swap(k, p);
        let inv = m[k][k].recip().map_err(|_| Error::FrameSolve {
            point: format!("{point:?}"),
            cond: "zero pivot".into(),
        })?;
        for i in 0..n {
            if i == k {
                continue;
            }
            let f = m[i][k].mul(&inv);
            for j in k..n {
                let s = f.mul(&m[k][j]);
                m[i][j] = m[i][j].sub(&s);
            }
            for bj in 0..b[i].len() {
                let s = f.mul(&b[k][bj]);
                b[i][bj] = b[i][bj].sub(&s);
            }
        }
    }
    let mut x = vec![Vec::new(); n];
    for k in 0..n {
        let inv = m[k][k].recip().unwrap();
        x[k] = b[k].iter().map(|v| v.mul(&inv)).collect();
    }
    Ok(x)
}

fn values<T: Real>(jets: &[JetScalar<T>]) -> Vec<T> {
    jets.iter().map(|j| j.value()).collect()
}

/// Derivative value of a jet, or 0 when the jet carries no derivative data
/// (order-3 input; the fallback path fills these by field differencing).
fn jderiv<T: Real>(j: &JetScalar<T>, k: usize) -> T {
    if j.order() >= 1 {
        j.derivative(k).value()
    } else {
        T::zero()
    }
}

// ---------------------------------------------------------------------------
// Stage 1: affine metric
// ---------------------------------------------------------------------------

struct MetricStage<T> {
    d: usize,
    f_i: Vec<Vec<JetScalar<T>>>,   // [i][comp], order m-1
    f_ij: Vec<Vec<Vec<JetScalar<T>>>>, // [i][j][comp], order m-2
    h: Vec<Vec<JetScalar<T>>>,     // order m-2
    conformal: T,
    sign_flipped: bool,
}

fn metric_stage<T: Real>(jet: &JetPoint<T>, point: &[T]) -> Result<MetricStage<T>> {
    let d = jet.dim_param();
    let na = jet.dim_ambient();
    assert_eq!(na, d + 1, "immersion must map R^d into R^(d+1)");
    let m = jet.order();
    if m < 2 {
        return Err(Error::Domain("affine metric needs jet order >= 2".into()));
    }

    let f_i: Vec<Vec<JetScalar<T>>> = (0..d)
        .map(|i| (0..na).map(|c| jet.component(c).derivative(i)).collect())
        .collect();
    let f_ij: Vec<Vec<Vec<JetScalar<T>>>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| (0..na).map(|c| f_i[i][c].derivative(j)).collect())
                .collect()
        })
        .collect();

    // G_ij = det(f_1, ..., f_d, f_ij), as jets of order m-2.
    let mut g: Vec<Vec<JetScalar<T>>> = Vec::with_capacity(d);
    for i in 0..d {
        let mut row = Vec::with_capacity(d);
        for j in 0..d {
            let mat: Vec<Vec<JetScalar<T>>> = (0..na)
                .map(|c| {
                    let mut r: Vec<JetScalar<T>> =
                        (0..d).map(|k| f_i[k][c].truncate(m - 2)).collect();
                    r.push(f_ij[i][j][c].clone());
                    r
                })
                .collect();
            row.push(jet_det(&mat));
        }
        g.push(row);
    }
    let det_g = jet_det(&g);

    // Degeneracy threshold relative to the frame scale.
    let frame_scale: T = (0..d)
        .map(|i| norm2(&values(&f_i[i])))
        .fold(T::one(), |a, b| a * b.max(T::from_f64(1e-30).unwrap()));
    let hess_scale = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| norm2(&values(&f_ij[i][j])))
        .fold(T::zero(), T::max);
    let base = frame_scale * T::one().max(hess_scale);
    let thresh = T::from_f64(1e-12).unwrap() * base.powi(d as i32);
    if det_g.value().abs() <= thresh {
        return Err(Error::Degenerate {
            point: format!("{point:?}"),
            det: format!("{:e}", det_g.value()),
        });
    }

    // h = sign * |det G|^(-1/(d+2)) G, oriented positive definite.
    let abs_det = if det_g.value() < T::zero() { det_g.neg() } else { det_g.clone() };
    let expo = -T::one() / T::from_f64((d + 2) as f64).unwrap();
    let factor = abs_det.powf(expo)?;
    let conformal = factor.value();
    let mut h: Vec<Vec<JetScalar<T>>> = g
        .iter()
        .map(|row| row.iter().map(|e| e.mul(&factor)).collect())
        .collect();

    let h_val = Mat::from_fn(d, d, |i, j| h[i][j].value());
    let (evals, _) = h_val.sym_eigen();
    let sign_flipped = if evals[0] > T::zero() {
        false
    } else if evals[d - 1] < T::zero() {
        for row in &mut h {
            for e in row.iter_mut() {
                *e = e.neg();
            }
        }
        true
    } else {
        return Err(Error::Domain(format!(
            "indefinite affine metric at {point:?} (eigenvalues {evals:?})"
        )));
    };

    Ok(MetricStage { d, f_i, f_ij, h, conformal, sign_flipped })
}

/// Affine metric at a point: needs jet order >= 2. Returns the metric and
/// the conformal normalization factor |det G|^(-1/(n+2)).
pub fn affine_metric<T: Real>(jet: &JetPoint<T>) -> Result<(Mat<T>, T)> {
    let point = jet.value();
    let stage = metric_stage(jet, &point)?;
    let d = stage.d;
    Ok((Mat::from_fn(d, d, |i, j| stage.h[i][j].value()), stage.conformal))
}

// ---------------------------------------------------------------------------
// Full extraction
// ---------------------------------------------------------------------------

/// Runs the full pipeline on one jet. Order >= 3 is required; the shape
/// operator and spectrum are filled only when order >= 4, and the analytic
/// S-derivatives only when order >= 5.
pub fn extract_from_jet<T: Real>(jet: &JetPoint<T>, point: &[T]) -> Result<BlaschkePoint<T>> {
    let m = jet.order();
    if m < 3 {
        return Err(Error::Domain("extraction needs jet order >= 3".into()));
    }
    let stage = metric_stage(jet, point)?;
    let d = stage.d;
    let na = d + 1;
    let value = jet.value();

    // Metric inverse as jets of order m-2.
    let eye: Vec<Vec<JetScalar<T>>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    JetScalar::constant(
                        if i == j { T::one() } else { T::zero() },
                        d,
                        m - 2,
                    )
                })
                .collect()
        })
        .collect();
    let h_inv_rows = jet_solve(&stage.h, &eye, point)?;

    // Levi-Civita connection of h, jets of order m-3.
    let dh: Vec<Vec<Vec<JetScalar<T>>>> = (0..d)
        .map(|k| {
            (0..d)
                .map(|i| (0..d).map(|j| stage.h[i][j].derivative(k)).collect())
                .collect()
        })
        .collect();
    let half = T::from_f64(0.5).unwrap();
    let mut gamma_hat_jets: Vec<Vec<Vec<JetScalar<T>>>> = vec![Vec::new(); d];
    for k in 0..d {
        gamma_hat_jets[k] = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let mut acc = JetScalar::constant(T::zero(), d, m - 3);
                        for l in 0..d {
                            let hkl = h_inv_rows[k][l].truncate(m - 3);
                            let term = dh[i][l][j]
                                .add(&dh[j][l][i])
                                .sub(&dh[l][i][j]);
                            acc = acc.add(&hkl.mul(&term.truncate(m - 3)));
                        }
                        acc.scale(half)
                    })
                    .collect()
            })
            .collect();
    }

    // Affine normal xi = (1/n) h^ij (f_ij - Gammahat^k_ij f_k), order m-3.
    let inv_n = T::one() / T::from_f64(d as f64).unwrap();
    let mut xi_jets: Vec<JetScalar<T>> = (0..na)
        .map(|_| JetScalar::constant(T::zero(), d, m - 3))
        .collect();
    for i in 0..d {
        for j in 0..d {
            let hij = h_inv_rows[i][j].truncate(m - 3);
            for (c, xj) in xi_jets.iter_mut().enumerate() {
                let mut second = stage.f_ij[i][j][c].truncate(m - 3);
                for k in 0..d {
                    let corr = gamma_hat_jets[k][i][j].mul(&stage.f_i[k][c].truncate(m - 3));
                    second = second.sub(&corr);
                }
                *xj = xj.add(&hij.mul(&second));
            }
        }
    }
    for xj in xi_jets.iter_mut() {
        *xj = xj.scale(inv_n);
    }

    // Frame and its conditioning.
    let frame = Mat::from_fn(na, na, |r, c| {
        if c < d {
            stage.f_i[c][r].value()
        } else {
            xi_jets[r].value()
        }
    });
    let cond = frame.condition_number();
    if cond > T::from_f64(MAX_FRAME_COND).unwrap() {
        return Err(Error::FrameSolve {
            point: format!("{point:?}"),
            cond: format!("{cond:e}"),
        });
    }

    // Support decomposition f = f_* Z + rho xi, solved on the jet ring.
    let frame_jets: Vec<Vec<JetScalar<T>>> = (0..na)
        .map(|r| {
            let mut row: Vec<JetScalar<T>> =
                (0..d).map(|c| stage.f_i[c][r].truncate(m - 3)).collect();
            row.push(xi_jets[r].clone());
            row
        })
        .collect();
    let f_rhs: Vec<Vec<JetScalar<T>>> = (0..na)
        .map(|r| vec![jet.component(r).truncate(m - 3)])
        .collect();
    let support = jet_solve(&frame_jets, &f_rhs, point)?;
    let z_jets: Vec<JetScalar<T>> = (0..d).map(|k| support[k][0].clone()).collect();
    let rho_jet = support[d][0].clone();
    let rho = rho_jet.value();
    let d_rho: Vec<T> = (0..d).map(|k| jderiv(&rho_jet, k)).collect();
    let z: Vec<T> = values(&z_jets);
    let centre: Vec<T> = (0..na).map(|r| value[r] - rho * xi_jets[r].value()).collect();

    let pos_scale = norm2(&value).max(T::from_f64(1e-30).unwrap());
    let rho_ok = rho.abs() > T::from_f64(RHO_FLOOR).unwrap() * pos_scale;

    // Z* = Z / rho and a0 = -|Z*|_h, with their analytic derivatives.
    let (z_star, d_z_star, a0, d_a0) = if rho_ok {
        let zs_jets: Vec<JetScalar<T>> = z_jets
            .iter()
            .map(|zj| zj.div(&rho_jet))
            .collect::<Result<_>>()?;
        let zs: Vec<T> = values(&zs_jets);
        let mut dzs = Mat::zeros(d, d);
        for k in 0..d {
            for i in 0..d {
                dzs[(k, i)] = jderiv(&zs_jets[k], i);
            }
        }
        let mut hzz = JetScalar::constant(T::zero(), d, m - 3);
        for i in 0..d {
            for j in 0..d {
                let hij = stage.h[i][j].truncate(m - 3);
                hzz = hzz.add(&hij.mul(&zs_jets[i]).mul(&zs_jets[j]));
            }
        }
        if hzz.value() > T::from_f64(A0_FLOOR).unwrap() {
            let a0_jet = hzz.sqrt()?.neg();
            let d_a0: Vec<T> = (0..d).map(|k| jderiv(&a0_jet, k)).collect();
            (Some(zs), Some(dzs), Some(a0_jet.value()), Some(d_a0))
        } else {
            (Some(zs), Some(dzs), None, None)
        }
    } else {
        (None, None, None, None)
    };

    // Induced connection from the Gauss relation, value level.
    let fij_rhs: Vec<Vec<T>> = (0..na)
        .map(|r| {
            (0..d)
                .flat_map(|i| (0..d).map(move |j| (i, j)))
                .map(|(i, j)| stage.f_ij[i][j][r].value())
                .collect()
        })
        .collect();
    let h_val = Mat::from_fn(d, d, |i, j| stage.h[i][j].value());
    let h_inv_val = Mat::from_fn(d, d, |i, j| h_inv_rows[i][j].value());
    let mut gamma = Tensor3::zeros(d, d, d);
    let mut closure_residual = T::zero();
    let h_scale = h_val.max_abs().max(T::from_f64(1e-30).unwrap());
    {
        let rhs_mat = Mat::from_fn(na, d * d, |r, c| fij_rhs[r][c]);
        let sol = frame.solve_mat(&rhs_mat).map_err(|_| Error::FrameSolve {
            point: format!("{point:?}"),
            cond: format!("{cond:e}"),
        })?;
        for i in 0..d {
            for j in 0..d {
                let col = i * d + j;
                for k in 0..d {
                    gamma[(k, i, j)] = sol[(k, col)];
                }
                let xi_coeff = sol[(d, col)];
                let res = (xi_coeff - h_val[(i, j)]).abs() / h_scale;
                if res > closure_residual {
                    closure_residual = res;
                }
            }
        }
    }

    let mut gamma_hat = Tensor3::zeros(d, d, d);
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                gamma_hat[(k, i, j)] = gamma_hat_jets[k][i][j].value();
            }
        }
    }
    let k_tensor = gamma.sub(&gamma_hat);
    let k_scale = k_tensor.max_abs().max(T::one());
    let mut apolarity_residual = T::zero();
    for i in 0..d {
        let mut tr = T::zero();
        for k in 0..d {
            tr = tr + k_tensor[(k, k, i)];
        }
        if tr.abs() / k_scale > apolarity_residual {
            apolarity_residual = tr.abs() / k_scale;
        }
    }

    let d_h: Vec<Mat<T>> = (0..d)
        .map(|k| Mat::from_fn(d, d, |i, j| dh[k][i][j].value()))
        .collect();

    // Shape operator from the Weingarten relation, when order allows.
    let (s, d_s_jets, weingarten_residual, spectrum) = if m >= 4 {
        let dxi: Vec<Vec<JetScalar<T>>> = (0..d)
            .map(|i| (0..na).map(|c| xi_jets[c].derivative(i)).collect())
            .collect();
        let frame_jets4: Vec<Vec<JetScalar<T>>> = (0..na)
            .map(|r| {
                let mut row: Vec<JetScalar<T>> =
                    (0..d).map(|c| stage.f_i[c][r].truncate(m - 4)).collect();
                row.push(xi_jets[r].truncate(m - 4));
                row
            })
            .collect();
        let rhs: Vec<Vec<JetScalar<T>>> = (0..na)
            .map(|r| (0..d).map(|i| dxi[i][r].neg()).collect())
            .collect();
        let sol = jet_solve(&frame_jets4, &rhs, point)?;
        let mut s_mat = Mat::zeros(d, d);
        for i in 0..d {
            for k in 0..d {
                s_mat[(k, i)] = sol[k][i].value();
            }
        }
        let mut wres = T::zero();
        for i in 0..d {
            let dxi_norm = norm2(&values(&dxi[i]));
            let denom = dxi_norm.max(norm2(&xi_jets.iter().map(|x| x.value()).collect::<Vec<_>>()));
            let r = sol[d][i].value().abs() / denom.max(T::from_f64(1e-30).unwrap());
            if r > wres {
                wres = r;
            }
        }
        let d_s = if m >= 5 {
            let mut t = Tensor3::zeros(d, d, d);
            for k in 0..d {
                for row in 0..d {
                    for i in 0..d {
                        t[(k, row, i)] = sol[row][i].derivative(k).value();
                    }
                }
            }
            Some(t)
        } else {
            None
        };
        let spec = spectrum_of(&s_mat, &h_val)?;
        (Some(s_mat), d_s, wres, Some(spec))
    } else {
        (None, None, T::zero(), None)
    };

    let _ = stage.sign_flipped;
    Ok(BlaschkePoint {
        point: point.to_vec(),
        value,
        frame,
        h: h_val,
        h_inv: h_inv_val,
        d_h,
        conformal: stage.conformal,
        xi: values(&xi_jets),
        s,
        d_s_jets,
        gamma,
        gamma_hat,
        k_tensor,
        rho,
        d_rho,
        z,
        z_star,
        d_z_star,
        a0,
        d_a0,
        centre,
        spectrum,
        closure_residual,
        weingarten_residual,
        apolarity_residual,
    })
}

/// Spectrum of S via the h-symmetrized operator h^(1/2) S h^(-1/2).
pub fn spectrum_of<T: Real>(s: &Mat<T>, h: &Mat<T>) -> Result<Spectrum<T>> {
    let hs = h.sym_sqrt()?;
    let hs_inv = hs.inverse()?;
    let sym = hs.matmul(s).matmul(&hs_inv);
    let (eigvals, w) = sym.sym_eigen();
    let eigvecs = hs_inv.matmul(&w);
    let d = eigvals.len();
    let radius = eigvals
        .iter()
        .fold(T::zero(), |a, &l| a.max(l.abs()));
    let gap = T::from_f64(CLUSTER_GAP).unwrap() * radius.max(T::from_f64(1e-30).unwrap());
    let mut clusters = Vec::new();
    let mut start = 0;
    for i in 1..=d {
        if i == d || eigvals[i] - eigvals[i - 1] > gap {
            clusters.push((start, i - start));
            start = i;
        }
    }
    Ok(Spectrum { eigvals, eigvecs, clusters })
}

// ---------------------------------------------------------------------------
// Spec-level single operations
// ---------------------------------------------------------------------------

pub fn affine_normal<T: Real>(jet: &JetPoint<T>) -> Result<Vec<T>> {
    let point = jet.value();
    Ok(extract_from_jet(jet, &point)?.xi)
}

pub fn shape_operator<T: Real>(jet: &JetPoint<T>) -> Result<Mat<T>> {
    let point = jet.value();
    let bp = extract_from_jet(jet, &point)?;
    bp.s.ok_or_else(|| Error::Domain("shape operator needs jet order >= 4".into()))
}

pub fn connections_and_difference<T: Real>(
    jet: &JetPoint<T>,
) -> Result<(Tensor3<T>, Tensor3<T>, Tensor3<T>)> {
    let point = jet.value();
    let bp = extract_from_jet(jet, &point)?;
    Ok((bp.gamma, bp.gamma_hat, bp.k_tensor))
}

pub fn support_and_centre<T: Real>(jet: &JetPoint<T>) -> Result<(T, Vec<T>, Vec<T>)> {
    let point = jet.value();
    let bp = extract_from_jet(jet, &point)?;
    bp.z_star_or_err()?;
    Ok((bp.rho, bp.z, bp.centre))
}

// ---------------------------------------------------------------------------
// Extraction from an immersion, analytic or fallback
// ---------------------------------------------------------------------------

/// Extracts the Blaschke point of an immersion. In analytic mode this uses
/// order-`order` jets (order >= 4; 5 adds analytic S-derivatives). In
/// fallback mode it uses order-3 central-difference jets and recovers the
/// shape operator and the missing field derivatives by differencing the
/// derived fields.
pub fn extract<T: Real>(
    imm: &dyn Immersion<T>,
    point: &[T],
    mode: JetMode<T>,
    order: usize,
) -> Result<BlaschkePoint<T>> {
    match mode {
        JetMode::Analytic => {
            let jet = imm.jet(point, order.max(4))?;
            extract_from_jet(&jet, point)
        }
        JetMode::FiniteDifference { step } => {
            let jet = mode.jet_of(imm, point, 3)?;
            let mut bp = extract_from_jet(&jet, point)?;
            fill_fallback_fields(imm, point, step, &mut bp)?;
            Ok(bp)
        }
    }
}

/// First derivative of a vector-valued field by Richardson central
/// differences over the step pair (delta, delta/2).
pub fn richardson_derivative<T: Real, F>(mut f: F, delta: T) -> Result<Vec<T>>
where
    F: FnMut(T) -> Result<Vec<T>>,
{
    let two = T::from_f64(2.0).unwrap();
    let half = delta / two;
    let coarse: Vec<T> = {
        let p = f(delta)?;
        let mm = f(-delta)?;
        p.iter().zip(&mm).map(|(&a, &b)| (a - b) / (two * delta)).collect()
    };
    let fine: Vec<T> = {
        let p = f(half)?;
        let mm = f(-half)?;
        p.iter().zip(&mm).map(|(&a, &b)| (a - b) / (two * half)).collect()
    };
    let four = T::from_f64(4.0).unwrap();
    let third = T::from_f64(1.0 / 3.0).unwrap();
    Ok(fine
        .iter()
        .zip(&coarse)
        .map(|(&fi, &co)| (four * fi - co) * third)
        .collect())
}

fn fill_fallback_fields<T: Real>(
    imm: &dyn Immersion<T>,
    point: &[T],
    step: T,
    bp: &mut BlaschkePoint<T>,
) -> Result<()> {
    let d = bp.dim();
    let na = d + 1;
    let mode = JetMode::FiniteDifference { step };

    // xi, rho, Z*, a0 at shifted points (each from its own order-3 jet).
    let eval_fields = |p: &[T]| -> Result<Vec<T>> {
        let jet = mode.jet_of(imm, p, 3)?;
        let b = extract_from_jet(&jet, p)?;
        let mut out = b.xi.clone();
        out.push(b.rho);
        match (&b.z_star, b.a0) {
            (Some(zs), a0) => {
                out.extend_from_slice(zs);
                out.push(a0.unwrap_or(T::zero()));
            }
            (None, _) => {
                out.extend(std::iter::repeat(T::zero()).take(d + 1));
            }
        }
        Ok(out)
    };

    let mut dxi: Vec<Vec<T>> = Vec::with_capacity(d);
    let mut d_rho = vec![T::zero(); d];
    let mut dzs = Mat::zeros(d, d);
    let mut d_a0 = vec![T::zero(); d];
    // The differenced fields carry finite-difference-jet noise (~1e-9), so
    // the differencing step must be much wider than the jet step to keep
    // noise/delta below truncation.
    let diff_step = step.max(T::from_f64(1e-2).unwrap());
    for i in 0..d {
        let delta = diff_step * T::one().max(point[i].abs());
        let der = richardson_derivative(
            |eps| {
                let mut p = point.to_vec();
                p[i] = p[i] + eps;
                eval_fields(&p)
            },
            delta,
        )?;
        dxi.push(der[0..na].to_vec());
        d_rho[i] = der[na];
        for k in 0..d {
            dzs[(k, i)] = der[na + 1 + k];
        }
        d_a0[i] = der[na + 1 + d];
    }
    bp.d_rho = d_rho;
    if bp.z_star.is_some() {
        bp.d_z_star = Some(dzs);
        if bp.a0.is_some() {
            bp.d_a0 = Some(d_a0);
        }
    }

    // S from the differenced affine-normal field.
    let mut rhs = Mat::zeros(na, d);
    for i in 0..d {
        for r in 0..na {
            rhs[(r, i)] = -dxi[i][r];
        }
    }
    let sol = bp.frame.solve_mat(&rhs).map_err(|_| Error::FrameSolve {
        point: format!("{point:?}"),
        cond: "singular".into(),
    })?;
    let s_mat = Mat::from_fn(d, d, |k, i| sol[(k, i)]);
    let mut wres = T::zero();
    for i in 0..d {
        let scale = norm2(&dxi[i]).max(norm2(&bp.xi)).max(T::from_f64(1e-30).unwrap());
        let r = sol[(d, i)].abs() / scale;
        if r > wres {
            wres = r;
        }
    }
    bp.weingarten_residual = wres;
    bp.spectrum = Some(spectrum_of(&s_mat, &bp.h)?);
    bp.s = Some(s_mat);
    Ok(())
}

// ---------------------------------------------------------------------------
// Field derivatives of derived quantities
// ---------------------------------------------------------------------------

/// Where the derivative of the S field comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsSource {
    /// Richardson differences of the extracted S field (default path).
    FieldDifference,
    /// Analytic derivatives from order-5 jets.
    Order5Jets,
}

/// One extraction on the stencil around the base point, kept so that
/// downstream consumers can difference further derived fields.
#[derive(Debug, Clone)]
pub struct StencilSample<T> {
    pub dir: usize,
    /// Offset applied to coordinate `dir`, in absolute units.
    pub offset: T,
    pub bp: BlaschkePoint<T>,
}

/// Directional derivatives of the derived fields around one point.
#[derive(Debug, Clone)]
pub struct FieldDerivatives<T> {
    /// d_s[(k, i, j)] = partial_k S^i_j.
    pub d_s: Tensor3<T>,
    /// Cubic form (nabla h)(d_i, d_j, Z*), values.
    pub d_nabla_h: Option<Mat<T>>,
    pub d_z_star: Option<Mat<T>>,
    pub d_a0: Option<Vec<T>>,
    /// Stencil extractions (empty in order-5 mode); step layout is
    /// (+delta, -delta, +delta/2, -delta/2) per direction.
    pub stencil: Vec<StencilSample<T>>,
    /// Steps used per direction.
    pub deltas: Vec<T>,
}

/// Computes the Blaschke point and the field derivatives at `point`.
pub fn field_derivatives<T: Real>(
    imm: &dyn Immersion<T>,
    point: &[T],
    mode: JetMode<T>,
    source: DsSource,
    step: T,
) -> Result<(BlaschkePoint<T>, FieldDerivatives<T>)> {
    let order = match source {
        DsSource::FieldDifference => 4,
        DsSource::Order5Jets => 5,
    };
    let bp = extract(imm, point, mode, order)?;
    let d = bp.dim();

    let mut stencil = Vec::new();
    let mut deltas = vec![T::zero(); d];
    let d_s = match source {
        DsSource::Order5Jets => bp
            .d_s_jets
            .clone()
            .ok_or_else(|| Error::Domain("order-5 jets unavailable".into()))?,
        DsSource::FieldDifference => {
            let two = T::from_f64(2.0).unwrap();
            let mut t = Tensor3::zeros(d, d, d);
            for dir in 0..d {
                let delta = step * T::one().max(point[dir].abs());
                deltas[dir] = delta;
                let offsets = [delta, -delta, delta / two, -(delta / two)];
                let mut samples = Vec::with_capacity(4);
                for &off in &offsets {
                    let mut p = point.to_vec();
                    p[dir] = p[dir] + off;
                    let b = extract(imm, &p, mode, 4)?;
                    samples.push(StencilSample { dir, offset: off, bp: b });
                }
                let four = T::from_f64(4.0).unwrap();
                let third = T::from_f64(1.0 / 3.0).unwrap();
                {
                    let sp = samples[0].bp.s_or_err()?;
                    let sm = samples[1].bp.s_or_err()?;
                    let sph = samples[2].bp.s_or_err()?;
                    let smh = samples[3].bp.s_or_err()?;
                    for i in 0..d {
                        for j in 0..d {
                            let coarse = (sp[(i, j)] - sm[(i, j)]) / (two * delta);
                            let fine = (sph[(i, j)] - smh[(i, j)]) / delta;
                            t[(dir, i, j)] = (four * fine - coarse) * third;
                        }
                    }
                }
                stencil.extend(samples);
            }
            t
        }
    };

    // Cubic form (nabla h)(X, Y, Z*) from analytic dh and the induced
    // connection.
    let d_nabla_h = bp.z_star.as_ref().map(|zs| {
        Mat::from_fn(d, d, |i, j| {
            let mut acc = T::zero();
            for k in 0..d {
                let mut t_ijk = bp.d_h[i][(j, k)];
                for l in 0..d {
                    t_ijk = t_ijk
                        - bp.gamma[(l, i, j)] * bp.h[(l, k)]
                        - bp.gamma[(l, i, k)] * bp.h[(j, l)];
                }
                acc = acc + t_ijk * zs[k];
            }
            acc
        })
    });

    let fd = FieldDerivatives {
        d_s,
        d_nabla_h,
        d_z_star: bp.d_z_star.clone(),
        d_a0: bp.d_a0.clone(),
        stencil,
        deltas,
    };
    Ok((bp, fd))
}
