//! Kernels, Gram matrices and kernel discrepancy statistics.
//!
//! All statistics are written as weighted sums `Σ W_ij k(a_i, b_j)` over
//! Gram blocks, which gives one gradient routine ([`Kernel::weighted_gram_grad`])
//! for every estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::matrix::{sq_dist, Matrix};
use crate::math::median;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise Euclidean distance of the samples the kernel is
    /// resolved against.
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: Bandwidth,
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Self {
        Self {
            family: KernelFamily::Rbf,
            bandwidth: Bandwidth::Fixed(gamma),
        }
    }

    pub fn rbf_median() -> Self {
        Self {
            family: KernelFamily::Rbf,
            bandwidth: Bandwidth::Median,
        }
    }

    pub fn linear() -> Self {
        Self {
            family: KernelFamily::Linear,
            bandwidth: Bandwidth::Fixed(1.0),
        }
    }

    /// Replaces a median policy with the concrete bandwidth for `samples`.
    pub fn frozen_on(&self, samples: &Matrix) -> Result<KernelSpec> {
        match (self.family, self.bandwidth) {
            (KernelFamily::Rbf, Bandwidth::Median) => Ok(KernelSpec::rbf(resolve_bandwidth(self, samples)?)),
            _ => Ok(*self),
        }
    }

    pub(crate) fn kernel_for(&self, a: &Matrix, b: &Matrix) -> Result<Kernel> {
        let gamma = match (self.family, self.bandwidth) {
            (KernelFamily::Linear, _) => 1.0,
            (KernelFamily::Rbf, Bandwidth::Fixed(g)) => {
                if !(g > 0.0 && g.is_finite()) {
                    return Err(Error::InvalidArgument(format!("rbf bandwidth must be positive, got {g}")));
                }
                g
            }
            (KernelFamily::Rbf, Bandwidth::Median) => {
                let pooled = Matrix::from_vec(
                    a.rows() + b.rows(),
                    a.cols(),
                    a.as_slice().iter().chain(b.as_slice()).copied().collect(),
                )?;
                resolve_bandwidth(self, &pooled)?
            }
        };
        Ok(Kernel {
            family: self.family,
            gamma,
        })
    }
}

/// Bandwidth the spec resolves to on `samples`: the fixed value, or the
/// median pairwise distance (1.0 when that median is zero).
pub fn resolve_bandwidth(spec: &KernelSpec, samples: &Matrix) -> Result<f64> {
    match spec.bandwidth {
        Bandwidth::Fixed(g) => Ok(g),
        Bandwidth::Median => {
            let n = samples.rows();
            if n < 2 {
                return Err(Error::InsufficientData {
                    context: "resolve_bandwidth",
                    needed: 2,
                    got: n,
                });
            }
            let mut d = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in i + 1..n {
                    d.push(sq_dist(samples.row(i), samples.row(j)).sqrt());
                }
            }
            let m = median(&d);
            Ok(if m > 0.0 { m } else { 1.0 })
        }
    }
}

/// A kernel with its bandwidth resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub family: KernelFamily,
    pub gamma: f64,
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Rbf => (-sq_dist(a, b) / (2.0 * self.gamma * self.gamma)).exp(),
            KernelFamily::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        }
    }

    pub fn gram(&self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        if a.cols() != b.cols() {
            return Err(Error::shape("gram", a.cols(), b.cols()));
        }
        let mut g = a.matmul_t(b)?;
        if self.family == KernelFamily::Rbf {
            let na: Vec<f64> = a.row_iter().map(|r| r.iter().map(|x| x * x).sum()).collect();
            let nb: Vec<f64> = b.row_iter().map(|r| r.iter().map(|x| x * x).sum()).collect();
            let scale = -1.0 / (2.0 * self.gamma * self.gamma);
            if std::ptr::eq(a, b) {
                // self-Gram: evaluate the upper triangle and mirror it
                let n = g.rows();
                let data = g.as_mut_slice();
                for i in 0..n {
                    let ni = na[i];
                    let row = &mut data[i * n..(i + 1) * n];
                    row[i] = 1.0;
                    for (v, nj) in row[i + 1..].iter_mut().zip(&na[i + 1..]) {
                        *v = rbf_exp(scale * (ni + nj - 2.0 * *v).max(0.0));
                    }
                }
                mirror_upper(data, n);
            } else {
                for i in 0..g.rows() {
                    let ni = na[i];
                    for (j, v) in g.row_mut(i).iter_mut().enumerate() {
                        let d2 = (ni + nb[j] - 2.0 * *v).max(0.0);
                        *v = rbf_exp(scale * d2);
                    }
                }
            }
        }
        Ok(g)
    }

    /// Gradients of `Σ_ij W_ij k(a_i, b_j)` with respect to `a` and `b`.
    /// `gram` must be `self.gram(a, b)`.
    pub fn weighted_gram_grad(&self, a: &Matrix, b: &Matrix, gram: &Matrix, w: &Matrix) -> Result<(Matrix, Matrix)> {
        match self.family {
            KernelFamily::Linear => Ok((w.matmul(b)?, w.t_matmul(a)?)),
            KernelFamily::Rbf => {
                let p = w.hadamard(gram);
                let inv = -1.0 / (self.gamma * self.gamma);
                let rows = p.row_sums();
                let cols = p.column_sums();
                let mut ga = p.matmul(b)?;
                for i in 0..a.rows() {
                    for (g, x) in ga.row_mut(i).iter_mut().zip(a.row(i)) {
                        *g = inv * (rows[i] * x - *g);
                    }
                }
                let mut gb = p.t_matmul(a)?;
                for j in 0..b.rows() {
                    for (g, x) in gb.row_mut(j).iter_mut().zip(b.row(j)) {
                        *g = inv * (cols[j] * x - *g);
                    }
                }
                Ok((ga, gb))
            }
        }
    }

    /// Gradient of `Σ_ij W_ij k(a_i, a_j)` with respect to `a`.
    pub fn weighted_self_gram_grad(&self, a: &Matrix, gram: &Matrix, w: &Matrix) -> Result<Matrix> {
        let (mut ga, gb) = self.weighted_gram_grad(a, a, gram, w)?;
        ga.axpy(1.0, &gb);
        Ok(ga)
    }

    /// [`Kernel::weighted_self_gram_grad`] for a symmetric `W`, where both
    /// argument slots contribute the same gradient. Takes `W` by value and
    /// reuses its storage.
    pub fn symmetric_self_gram_grad(&self, a: &Matrix, gram: &Matrix, mut w: Matrix) -> Result<Matrix> {
        match self.family {
            KernelFamily::Linear => {
                let mut g = w.matmul(a)?;
                g.scale(2.0);
                Ok(g)
            }
            KernelFamily::Rbf => {
                if w.shape() != gram.shape() {
                    return Err(Error::shape("symmetric_self_gram_grad", w.rows(), gram.rows()));
                }
                w.as_mut_slice().iter_mut().zip(gram.as_slice()).for_each(|(p, k)| *p *= k);
                let inv = -2.0 / (self.gamma * self.gamma);
                let rows = w.row_sums();
                let mut g = w.matmul(a)?;
                for i in 0..a.rows() {
                    for (gv, x) in g.row_mut(i).iter_mut().zip(a.row(i)) {
                        *gv = inv * (rows[i] * x - *gv);
                    }
                }
                Ok(g)
            }
        }
    }
}

/// `exp(x)` flushed to zero below `e^-600`, keeping Gram entries and their
/// products with small weights out of the slow subnormal range.
#[inline]
fn rbf_exp(x: f64) -> f64 {
    if x < -600.0 {
        0.0
    } else {
        x.exp()
    }
}

/// Copies the strict upper triangle of a row-major `n × n` matrix into the
/// lower one, tile by tile to stay cache friendly.
fn mirror_upper(data: &mut [f64], n: usize) {
    const TILE: usize = 32;
    for bi in (0..n).step_by(TILE) {
        for bj in (bi..n).step_by(TILE) {
            for i in bi..(bi + TILE).min(n) {
                for j in bj.max(i + 1)..(bj + TILE).min(n) {
                    data[j * n + i] = data[i * n + j];
                }
            }
        }
    }
}

pub fn gram(spec: &KernelSpec, a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::shape("gram", a.cols(), b.cols()));
    }
    spec.kernel_for(a, b)?.gram(a, b)
}

/// A statistic value with optional gradients with respect to its two inputs.
#[derive(Debug, Clone)]
pub struct DiscrepancyValue {
    pub value: f64,
    pub grad_first: Option<Matrix>,
    pub grad_second: Option<Matrix>,
}

fn check_cols(context: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.cols() != b.cols() {
        return Err(Error::shape(context, a.cols(), b.cols()));
    }
    Ok(())
}

fn need(context: &'static str, needed: usize, got: usize) -> Result<()> {
    if got < needed {
        return Err(Error::InsufficientData { context, needed, got });
    }
    Ok(())
}

/// Shared body of the two MMD² estimators. `unbiased` drops the diagonals of
/// the within-sample blocks and uses `m(m−1)` normalizers.
fn mmd2(spec: &KernelSpec, zp: &Matrix, zq: &Matrix, unbiased: bool, want_grad: bool) -> Result<DiscrepancyValue> {
    let kernel = spec.kernel_for(zp, zq)?;
    let (m, n) = (zp.rows(), zq.rows());
    let kpp = kernel.gram(zp, zp)?;
    let kqq = kernel.gram(zq, zq)?;
    let kpq = kernel.gram(zp, zq)?;
    let (wp, wq) = if unbiased {
        (1.0 / (m * (m - 1)) as f64, 1.0 / (n * (n - 1)) as f64)
    } else {
        (1.0 / (m * m) as f64, 1.0 / (n * n) as f64)
    };
    let off_diag_sum = |k: &Matrix| {
        let total = k.sum();
        if unbiased {
            total - (0..k.rows()).map(|i| k.get(i, i)).sum::<f64>()
        } else {
            total
        }
    };
    let wpq = -2.0 / (m * n) as f64;
    let value = wp * off_diag_sum(&kpp) + wq * off_diag_sum(&kqq) + wpq * kpq.sum();

    if !want_grad {
        return Ok(DiscrepancyValue {
            value,
            grad_first: None,
            grad_second: None,
        });
    }
    let weights = |size: usize, w: f64| {
        let mut mat = Matrix::filled(size, size, w);
        if unbiased {
            for i in 0..size {
                mat.set(i, i, 0.0);
            }
        }
        mat
    };
    let mut gp = kernel.symmetric_self_gram_grad(zp, &kpp, weights(m, wp))?;
    let mut gq = kernel.symmetric_self_gram_grad(zq, &kqq, weights(n, wq))?;
    let (gp_cross, gq_cross) = kernel.weighted_gram_grad(zp, zq, &kpq, &Matrix::filled(m, n, wpq))?;
    gp.axpy(1.0, &gp_cross);
    gq.axpy(1.0, &gq_cross);
    Ok(DiscrepancyValue {
        value,
        grad_first: Some(gp),
        grad_second: Some(gq),
    })
}

/// Unbiased U-statistic estimate of MMD². Can be negative.
pub fn mmd2_u(spec: &KernelSpec, zp: &Matrix, zq: &Matrix, want_grad: bool) -> Result<DiscrepancyValue> {
    check_cols("mmd2_u", zp, zq)?;
    need("mmd2_u (first sample)", 2, zp.rows())?;
    need("mmd2_u (second sample)", 2, zq.rows())?;
    mmd2(spec, zp, zq, true, want_grad)
}

/// Biased plug-in (V-statistic) estimate of MMD²; non-negative up to rounding.
pub fn mmd2_v(spec: &KernelSpec, zp: &Matrix, zq: &Matrix, want_grad: bool) -> Result<DiscrepancyValue> {
    check_cols("mmd2_v", zp, zq)?;
    need("mmd2_v (first sample)", 1, zp.rows())?;
    need("mmd2_v (second sample)", 1, zq.rows())?;
    mmd2(spec, zp, zq, false, want_grad)
}

/// V-statistic HSIC `trace(K H L H) / n²` between paired rows of `z` and `e`.
pub fn hsic_v(
    spec_z: &KernelSpec,
    spec_e: &KernelSpec,
    z: &Matrix,
    e: &Matrix,
    want_grad: bool,
) -> Result<DiscrepancyValue> {
    if z.rows() != e.rows() {
        return Err(Error::shape("hsic_v rows", z.rows(), e.rows()));
    }
    let n = z.rows();
    need("hsic_v", 3, n)?;
    let kz = spec_z.kernel_for(z, z)?;
    let ke = spec_e.kernel_for(e, e)?;
    let k = kz.gram(z, z)?;
    let l = ke.gram(e, e)?;
    let inv_n2 = 1.0 / (n * n) as f64;
    let lc = l.double_centered();
    let value = inv_n2 * k.frobenius_dot(&lc);
    if !want_grad {
        return Ok(DiscrepancyValue {
            value,
            grad_first: None,
            grad_second: None,
        });
    }
    let gz = kz.symmetric_self_gram_grad(z, &k, lc.scaled(inv_n2))?;
    let kc = k.double_centered();
    let ge = ke.symmetric_self_gram_grad(e, &l, kc.scaled(inv_n2))?;
    Ok(DiscrepancyValue {
        value,
        grad_first: Some(gz),
        grad_second: Some(ge),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{finite_diff_check, RngStream};

    fn col(v: &[f64]) -> Matrix {
        Matrix::column(v)
    }

    #[test]
    fn bandwidth_resolution() {
        let spec = KernelSpec::rbf_median();
        assert_eq!(resolve_bandwidth(&spec, &col(&[0.0, 2.0])).unwrap(), 2.0);
        assert_eq!(resolve_bandwidth(&spec, &col(&[3.0, 3.0, 3.0])).unwrap(), 1.0);
        assert_eq!(resolve_bandwidth(&KernelSpec::rbf(0.5), &col(&[0.0, 9.0])).unwrap(), 0.5);
        assert!(matches!(
            resolve_bandwidth(&spec, &col(&[1.0])),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn gram_entries() {
        let rbf = KernelSpec::rbf(1.0);
        assert!((gram(&rbf, &col(&[0.4]), &col(&[0.4])).unwrap().get(0, 0) - 1.0).abs() < 1e-15);
        let g = gram(&rbf, &col(&[0.0]), &col(&[2f64.sqrt()])).unwrap();
        assert!((g.get(0, 0) - (-1f64).exp()).abs() < 1e-12);
        let a = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[[3.0, 4.0]]).unwrap();
        assert_eq!(gram(&KernelSpec::linear(), &a, &b).unwrap().get(0, 0), 11.0);
        assert!(gram(&rbf, &a, &col(&[1.0])).is_err());
    }

    #[test]
    fn mmd_hand_values() {
        let lin = KernelSpec::linear();
        let u = mmd2_u(&lin, &col(&[0.0, 2.0]), &col(&[1.0, 1.0]), false).unwrap();
        // within-p off-diagonal mean 0, within-q 1, cross mean 1 → 0 + 1 − 2
        assert!((u.value + 1.0).abs() < 1e-12);
        let v = mmd2_v(&lin, &col(&[0.0]), &col(&[1.0]), false).unwrap();
        assert!((v.value - 1.0).abs() < 1e-12);
        let same = mmd2_v(&KernelSpec::rbf(0.7), &col(&[0.1, 0.5, 2.0]), &col(&[2.0, 0.1, 0.5]), false).unwrap();
        assert!(same.value.abs() < 1e-12);
    }

    #[test]
    fn mmd_insufficient_samples() {
        let lin = KernelSpec::linear();
        assert!(mmd2_u(&lin, &col(&[0.0]), &col(&[1.0, 2.0]), false).is_err());
        assert!(mmd2_v(&lin, &Matrix::zeros(0, 1), &col(&[1.0]), false).is_err());
    }

    #[test]
    fn hsic_constant_second_argument_is_zero() {
        let mut rng = RngStream::new(2);
        let z = Matrix::from_vec(10, 2, (0..20).map(|_| rng.normal()).collect()).unwrap();
        let e = Matrix::filled(10, 3, 0.7);
        let h = hsic_v(&KernelSpec::rbf(1.0), &KernelSpec::rbf(1.0), &z, &e, false).unwrap();
        assert!(h.value.abs() < 1e-12);
        assert!(hsic_v(&KernelSpec::linear(), &KernelSpec::linear(), &col(&[1.0, 2.0]), &col(&[1.0, 2.0]), false).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RngStream::new(17);
        let (m, n, d) = (5, 4, 3);
        let p = Matrix::from_vec(m, d, (0..m * d).map(|_| rng.normal()).collect()).unwrap();
        let q = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.normal() + 0.5).collect()).unwrap();
        for spec in [KernelSpec::rbf(1.3), KernelSpec::linear()] {
            for unbiased in [false, true] {
                let mut theta = p.as_slice().to_vec();
                theta.extend_from_slice(q.as_slice());
                let err = finite_diff_check(
                    |x| {
                        let a = Matrix::from_vec(m, d, x[..m * d].to_vec()).unwrap();
                        let b = Matrix::from_vec(n, d, x[m * d..].to_vec()).unwrap();
                        let r = if unbiased {
                            mmd2_u(&spec, &a, &b, true)
                        } else {
                            mmd2_v(&spec, &a, &b, true)
                        }
                        .unwrap();
                        let mut g = r.grad_first.unwrap().into_vec();
                        g.extend(r.grad_second.unwrap().into_vec());
                        (r.value, g)
                    },
                    &theta,
                    1e-5,
                )
                .unwrap();
                assert!(err < 1e-4, "{spec:?} unbiased={unbiased}: {err}");
            }
        }
    }
}
