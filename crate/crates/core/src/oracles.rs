//! Reference kernels used to validate the estimators.

use std::f64::consts::PI;

use faer::Side;

use crate::error::{invalid, Error, Result};
use crate::linalg::{squared_distance, DenseMatrix};

/// Eigenpairs of a symmetric matrix, eigenvalues ascending, eigenvectors as
/// orthonormal columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

impl SpectralDecomposition {
    /// `V diag(g(lambda)) V^T`.
    pub fn apply_function(&self, g: impl Fn(f64) -> f64) -> Result<DenseMatrix> {
        let v = &self.eigenvectors;
        let scale: Vec<f64> = self.eigenvalues.iter().map(|&l| g(l)).collect();
        let scaled = DenseMatrix::from_fn(v.rows(), v.cols(), |i, j| v[(i, j)] * scale[j]);
        let mut out = scaled.matmul_transposed(v)?;
        symmetrize(&mut out);
        Ok(out)
    }

    pub fn heat_kernel(&self, params: HeatKernelParams) -> Result<DenseMatrix> {
        params.validate()?;
        let s = params.signed_time();
        self.apply_function(|l| (s * l).exp())
    }

    pub fn reconstruct(&self) -> Result<DenseMatrix> {
        self.apply_function(|l| l)
    }
}

fn symmetrize(m: &mut DenseMatrix) {
    let n = m.rows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn eigendecompose_symmetric(m: &DenseMatrix) -> Result<SpectralDecomposition> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            actual: m.cols(),
        });
    }
    let asym = m.max_asymmetry();
    if asym > 1e-10 * m.max_abs().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    if m.rows() == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: Vec::new(),
            eigenvectors: DenseMatrix::zeros(0, 0),
        });
    }
    let evd = m
        .as_faer()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenNoConvergence)?;
    let s = evd.S();
    let u = evd.U();
    let n = m.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&j| s[j]).collect();
    if eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::EigenNoConvergence);
    }
    let eigenvectors = DenseMatrix::from_fn(n, n, |i, j| u[(i, order[j])]);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Which exponential to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatSign {
    /// `exp(-t M)` for a Laplacian-like `M`.
    Diffusion,
    /// `exp(+t M)` for an affinity-like `M`.
    Affinity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatKernelParams {
    pub t: f64,
    pub sign: HeatSign,
}

impl HeatKernelParams {
    pub fn diffusion(t: f64) -> Self {
        Self {
            t,
            sign: HeatSign::Diffusion,
        }
    }

    pub fn affinity(t: f64) -> Self {
        Self {
            t,
            sign: HeatSign::Affinity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(invalid("t", format!("must be positive, got {}", self.t)));
        }
        Ok(())
    }

    fn signed_time(&self) -> f64 {
        match self.sign {
            HeatSign::Diffusion => -self.t,
            HeatSign::Affinity => self.t,
        }
    }
}

/// Matrix exponential through a full eigendecomposition.
pub fn spectral_heat_kernel(m: &DenseMatrix, params: HeatKernelParams) -> Result<DenseMatrix> {
    params.validate()?;
    eigendecompose_symmetric(m)?.heat_kernel(params)
}

/// Legendre values `P_0(z) .. P_lmax(z)` by the three-term recurrence.
pub fn legendre_series(z: f64, lmax: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(lmax + 1);
    p.push(1.0);
    if lmax >= 1 {
        p.push(z);
    }
    for l in 1..lmax {
        let lf = l as f64;
        let next = ((2.0 * lf + 1.0) * z * p[l] - lf * p[l - 1]) / (lf + 1.0);
        p.push(next);
    }
    p
}

fn check_unit(x: &[f64]) -> Result<()> {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::NotUnitVector(n));
    }
    Ok(())
}

/// Heat kernel of the unit 2-sphere,
/// `sum_l (2l+1)/(4 pi) exp(-l(l+1)t) P_l(<x,y>)` for `l <= lmax`.
pub fn sphere_heat_kernel(x: &[f64], y: &[f64], t: f64, lmax: usize) -> Result<f64> {
    if x.len() != 3 || y.len() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            actual: if x.len() != 3 { x.len() } else { y.len() },
        });
    }
    check_unit(x)?;
    check_unit(y)?;
    if !(t > 0.0) {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    let z = (x[0] * y[0] + x[1] * y[1] + x[2] * y[2]).clamp(-1.0, 1.0);
    Ok(sphere_series(z, t, lmax))
}

fn sphere_series(z: f64, t: f64, lmax: usize) -> f64 {
    legendre_series(z, lmax)
        .iter()
        .enumerate()
        .map(|(l, p)| {
            let lf = l as f64;
            (2.0 * lf + 1.0) / (4.0 * PI) * (-lf * (lf + 1.0) * t).exp() * p
        })
        .sum()
}

/// Sphere heat kernel between every pair of rows of a flat `n x 3` buffer.
pub fn sphere_heat_kernel_matrix(points: &[f64], t: f64, lmax: usize) -> Result<DenseMatrix> {
    let n = points.len() / 3;
    for i in 0..n {
        check_unit(&points[3 * i..3 * i + 3])?;
    }
    if !(t > 0.0) {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    let mut k = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let xi = &points[3 * i..3 * i + 3];
        for j in i..n {
            let xj = &points[3 * j..3 * j + 3];
            let z = (xi[0] * xj[0] + xi[1] * xj[1] + xi[2] * xj[2]).clamp(-1.0, 1.0);
            let v = sphere_series(z, t, lmax);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// `exp(-|x - y|^2 / (2 sigma^2))`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if !(sigma > 0.0) {
        return Err(invalid("sigma", format!("must be positive, got {sigma}")));
    }
    Ok((-squared_distance(x, y) / (2.0 * sigma * sigma)).exp())
}

/// Continuous Gaussian feature `(2 / (pi sigma^2))^{d/4} exp(-|x - w|^2 / sigma^2)`,
/// whose inner product over `w in R^d` is the Gaussian kernel.
pub fn g_sigma(x: &[f64], omega: &[f64], sigma: f64, d: usize) -> f64 {
    g_sigma_peak(sigma, d) * (-squared_distance(x, omega) / (sigma * sigma)).exp()
}

pub fn g_sigma_peak(sigma: f64, d: usize) -> f64 {
    (2.0 / (PI * sigma * sigma)).powf(d as f64 / 4.0)
}

/// `|x-w|^2 + |y-w|^2 - 2|w-m|^2 - |x-y|^2/2` with `m` the midpoint of `x`
/// and `y`. Zero up to rounding; the completing-the-square step behind the
/// Gaussian feature identity.
pub fn midpoint_identity_residual(x: &[f64], y: &[f64], omega: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() != omega.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: if y.len() != x.len() { y.len() } else { omega.len() },
        });
    }
    let m: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok(squared_distance(x, omega) + squared_distance(y, omega)
        - 2.0 * squared_distance(omega, &m)
        - 0.5 * squared_distance(x, y))
}

/// `int g(x, w) g(y, w) dw` in one dimension by the trapezoid rule on a
/// window of `+- half_width` around the midpoint of `x` and `y`.
pub fn gaussian_feature_quadrature(x: f64, y: f64, sigma: f64, half_width: f64, step: f64) -> f64 {
    let mid = 0.5 * (x + y);
    let steps = (2.0 * half_width / step).round() as usize;
    let h = 2.0 * half_width / steps as f64;
    let mut acc = 0.0;
    for i in 0..=steps {
        let w = mid - half_width + i as f64 * h;
        let v = g_sigma(&[x], &[w], sigma, 1) * g_sigma(&[y], &[w], sigma, 1);
        acc += if i == 0 || i == steps { 0.5 * v } else { v };
    }
    acc * h
}

/// Sum of Gaussian images `sum_k exp(-|x - y + k|^2 / (2 sigma^2))` over
/// integer shifts with `|k|_inf <= k_max`. The sum factorizes over
/// coordinates, which is how it is evaluated.
pub fn periodized_gaussian(x: &[f64], y: &[f64], sigma: f64, k_max: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if !(sigma > 0.0) {
        return Err(invalid("sigma", format!("must be positive, got {sigma}")));
    }
    let km = k_max as i64;
    let two_s2 = 2.0 * sigma * sigma;
    Ok(x.iter()
        .zip(y)
        .map(|(a, b)| {
            let delta = a - b;
            (-km..=km)
                .map(|k| {
                    let r = delta + k as f64;
                    (-r * r / two_s2).exp()
                })
                .sum::<f64>()
        })
        .product())
}

/// Periodized Gaussian normalised as a density on the unit torus:
/// `(2 pi sigma^2)^{-d/2}` times [`periodized_gaussian`]. This is the heat
/// kernel of the torus Laplacian at time `sigma^2 / 2`.
pub fn periodized_gaussian_density(x: &[f64], y: &[f64], sigma: f64, k_max: usize) -> Result<f64> {
    let d = x.len() as f64;
    Ok((2.0 * PI * sigma * sigma).powf(-d / 2.0) * periodized_gaussian(x, y, sigma, k_max)?)
}

/// Heat kernel `exp(-t L_n)` of the rescaled `d`-dimensional grid Laplacian,
/// evaluated as a product of ring kernels. `L_n` is a Kronecker sum of 1D
/// operators `(2 / h^2)(I - T_1)`, so each entry factorizes over coordinates.
#[derive(Debug, Clone)]
pub struct KroneckerHeatGrid {
    n: usize,
    d: u32,
    ring: Vec<f64>,
}

impl KroneckerHeatGrid {
    pub fn new(n: usize, d: u32, t: f64) -> Result<Self> {
        if n < 3 {
            return Err(invalid("n", format!("grid side must be at least 3, got {n}")));
        }
        if d == 0 {
            return Err(invalid("d", "dimension must be at least 1"));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid("t", format!("must be finite and >= 0, got {t}")));
        }
        // circulant spectrum of the ring: lambda_m = (2/h^2)(1 - cos(2 pi m / n))
        let nf = n as f64;
        let scale = 2.0 * nf * nf;
        let decay: Vec<f64> = (0..n)
            .map(|m| (-t * scale * (1.0 - (2.0 * PI * m as f64 / nf).cos())).exp())
            .collect();
        let ring = (0..n)
            .map(|delta| {
                decay
                    .iter()
                    .enumerate()
                    .map(|(m, e)| e * (2.0 * PI * (m * delta) as f64 / nf).cos())
                    .sum::<f64>()
                    / nf
            })
            .collect();
        Ok(Self { n, d, ring })
    }

    /// 1D kernel value for index offset `a - b`.
    pub fn ring_entry(&self, a: usize, b: usize) -> f64 {
        let delta = (a + self.n - b) % self.n;
        self.ring[delta]
    }

    pub fn entry_multi(&self, x: &[usize], y: &[usize]) -> f64 {
        x.iter().zip(y).map(|(&a, &b)| self.ring_entry(a, b)).product()
    }

    /// Entry for node ids in the row-major numbering of the grid.
    pub fn entry(&self, mut x: usize, mut y: usize) -> f64 {
        let mut v = 1.0;
        for _ in 0..self.d {
            v *= self.ring_entry(x % self.n, y % self.n);
            x /= self.n;
            y /= self.n;
        }
        v
    }

    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let size = crate::graph::grid_size(self.n, self.d)?;
        Ok(DenseMatrix::from_fn(size, size, |i, j| self.entry(i, j)))
    }
}

pub fn kronecker_heat_grid(n: usize, d: u32, t: f64) -> Result<KroneckerHeatGrid> {
    KroneckerHeatGrid::new(n, d, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_identity_vanishes() {
        let r = midpoint_identity_residual(&[0.3, -1.2], &[2.0, 0.5], &[-0.7, 0.9]).unwrap();
        assert!(r.abs() < 1e-12);
        assert!(midpoint_identity_residual(&[0.0], &[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn eig_small_cases() {
        let e = eigendecompose_symmetric(&DenseMatrix::identity(4)).unwrap();
        assert!(e.eigenvalues.iter().all(|l| (l - 1.0).abs() < 1e-14));

        let d = DenseMatrix::from_fn(3, 3, |i, j| if i == j { (3 - i) as f64 } else { 0.0 });
        let e = eigendecompose_symmetric(&d).unwrap();
        assert_eq!(e.eigenvalues.len(), 3);
        for (k, l) in e.eigenvalues.iter().enumerate() {
            assert!((l - (k + 1) as f64).abs() < 1e-14);
            // eigenvector of eigenvalue k+1 is the axis 2-k
            assert!((e.eigenvectors[(2 - k, k)].abs() - 1.0).abs() < 1e-14);
        }

        let swap = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let e = eigendecompose_symmetric(&swap).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-14 && (e.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let m = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(eigendecompose_symmetric(&m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn heat_of_swap_matrix() {
        let w = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let k = spectral_heat_kernel(&w, HeatKernelParams::affinity(1.0)).unwrap();
        assert!((k[(0, 0)] - 1f64.cosh()).abs() < 1e-14);
        assert!((k[(1, 0)] - 1f64.sinh()).abs() < 1e-14);
        assert!(spectral_heat_kernel(&w, HeatKernelParams::affinity(0.0)).is_err());
    }

    #[test]
    fn legendre_low_orders() {
        let z = 0.3;
        let p = legendre_series(z, 3);
        assert!((p[2] - 0.5 * (3.0 * z * z - 1.0)).abs() < 1e-15);
        assert!((p[3] - 0.5 * (5.0 * z * z * z - 3.0 * z)).abs() < 1e-15);
    }

    #[test]
    fn sphere_kernel_limits() {
        let x = [1.0, 0.0, 0.0];
        let y = [0.0, 0.6, 0.8];
        let v = sphere_heat_kernel(&x, &y, 50.0, 50).unwrap();
        assert!((v - 1.0 / (4.0 * PI)).abs() < 1e-15);
        let a = sphere_heat_kernel(&x, &x, 0.25, 50).unwrap();
        let b = sphere_heat_kernel(&x, &x, 0.25, 100).unwrap();
        assert!((a - b).abs() < 1e-8);
        assert!(matches!(
            sphere_heat_kernel(&[1.0, 1.0, 0.0], &x, 0.25, 50),
            Err(Error::NotUnitVector(_))
        ));
    }

    #[test]
    fn gaussian_values() {
        assert_eq!(gaussian_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.3).unwrap(), 1.0);
        let s: f64 = 0.7;
        let v = gaussian_kernel(&[0.0], &[s * 2f64.sqrt()], s).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!(gaussian_kernel(&[0.0], &[0.0, 1.0], 1.0).is_err());
        assert!((g_sigma(&[0.2], &[0.2], 0.2, 1) - g_sigma_peak(0.2, 1)).abs() < 1e-15);
    }

    #[test]
    fn periodized_examples() {
        let direct = gaussian_kernel(&[0.3], &[0.4], 0.05).unwrap();
        let a = periodized_gaussian(&[0.3], &[0.4], 0.05, 3).unwrap();
        let b = periodized_gaussian(&[0.3], &[0.4], 0.05, 0).unwrap();
        assert!((a - direct).abs() < 1e-12 && (a - b).abs() < 1e-12);
        let wrap = periodized_gaussian(&[0.01], &[0.99], 0.1, 3).unwrap();
        let near = gaussian_kernel(&[0.0], &[0.02], 0.1).unwrap();
        assert!((wrap - near).abs() < 1e-6);
        let xy = periodized_gaussian(&[0.1, 0.7], &[0.8, 0.2], 0.3, 3).unwrap();
        let yx = periodized_gaussian(&[0.8, 0.2], &[0.1, 0.7], 0.3, 3).unwrap();
        assert_eq!(xy, yx);
    }

    #[test]
    fn kronecker_diagonal_is_constant() {
        let k = kronecker_heat_grid(6, 2, 0.01).unwrap();
        let d0 = k.entry(0, 0);
        for i in 0..36 {
            assert!((k.entry(i, i) - d0).abs() < 1e-15);
        }
    }
}
