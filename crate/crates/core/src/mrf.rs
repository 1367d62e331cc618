//! Feature assembly from a pointwise feature function, grid rescaling,
//! Frobenius alignment and the error metrics used to compare kernels.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grf::SignatureVector;
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrfVariant {
    /// Every discretization node is an anchor.
    Full,
    /// `m` anchors drawn i.i.d. from a density over the nodes.
    Sampled { m: usize },
}

/// Feature vectors `phi(z)_l = g(z, w_l) / sqrt(m kappa p(w_l))`.
#[derive(Debug, Clone, PartialEq)]
pub struct MrfFeatureMap {
    pub variant: MrfVariant,
    pub anchors: Vec<usize>,
    /// `points x m`.
    pub features: DenseMatrix,
    pub kappa: f64,
    /// Probability mass of each anchor under the sampling density (1 for
    /// the full variant).
    pub anchor_density: Vec<f64>,
}

impl MrfFeatureMap {
    pub fn num_features(&self) -> usize {
        self.anchors.len()
    }

    /// `Phi Phi^T`.
    pub fn gram(&self) -> Result<DenseMatrix> {
        self.features.matmul_transposed(&self.features)
    }
}

/// Builds the feature map from `g_values` (`points x nodes`).
///
/// `density` holds non-negative weights over the nodes for the sampled
/// variant; they are normalised to a probability mass. `None` means uniform.
pub fn assemble_mrf(
    g_values: &DenseMatrix,
    variant: MrfVariant,
    density: Option<&[f64]>,
    seed: u64,
) -> Result<MrfFeatureMap> {
    if let Some(v) = g_values.as_slice().iter().find(|v| !(**v >= 0.0)) {
        return Err(invalid("g_values", format!("feature values must be >= 0, found {v}")));
    }
    let nodes = g_values.cols();
    if nodes == 0 {
        return Err(Error::EmptyInput("feature columns"));
    }
    match variant {
        MrfVariant::Full => Ok(MrfFeatureMap {
            variant,
            anchors: (0..nodes).collect(),
            features: g_values.clone(),
            kappa: 1.0 / nodes as f64,
            anchor_density: vec![1.0; nodes],
        }),
        MrfVariant::Sampled { m } => {
            if m == 0 {
                return Err(invalid("m", "must be at least 1"));
            }
            let mass = normalised_mass(density, nodes)?;
            let dist = WeightedIndex::new(&mass).map_err(|e| invalid("density", e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let anchors: Vec<usize> = (0..m).map(|_| dist.sample(&mut rng)).collect();
            assemble_with_anchors(g_values, anchors, &mass)
        }
    }
}

fn normalised_mass(density: Option<&[f64]>, nodes: usize) -> Result<Vec<f64>> {
    match density {
        None => Ok(vec![1.0 / nodes as f64; nodes]),
        Some(p) => {
            if p.len() != nodes {
                return Err(Error::DimensionMismatch {
                    expected: nodes,
                    actual: p.len(),
                });
            }
            if let Some(v) = p.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(invalid("density", format!("weights must be finite and >= 0, found {v}")));
            }
            let total: f64 = p.iter().sum();
            if total <= 0.0 {
                return Err(invalid("density", "weights sum to zero"));
            }
            Ok(p.iter().map(|v| v / total).collect())
        }
    }
}

/// Sampled-variant features for a given anchor list and probability mass.
pub fn assemble_with_anchors(g_values: &DenseMatrix, anchors: Vec<usize>, mass: &[f64]) -> Result<MrfFeatureMap> {
    let m = anchors.len();
    let mut anchor_density = Vec::with_capacity(m);
    for &a in &anchors {
        if a >= g_values.cols() {
            return Err(Error::NodeOutOfRange {
                index: a,
                len: g_values.cols(),
            });
        }
        if !(mass[a] > 0.0) {
            return Err(Error::ZeroDensity(a));
        }
        anchor_density.push(mass[a]);
    }
    let scale: Vec<f64> = anchor_density.iter().map(|p| 1.0 / (m as f64 * p).sqrt()).collect();
    let features = DenseMatrix::from_fn(g_values.rows(), m, |i, l| g_values[(i, anchors[l])] * scale[l]);
    Ok(MrfFeatureMap {
        variant: MrfVariant::Sampled { m },
        anchors,
        features,
        kappa: 1.0,
        anchor_density,
    })
}

/// `(2 pi sigma^2)^{d/4} n^{d/2}`: maps grid signatures onto the continuous
/// Gaussian feature scale.
pub fn grid_constant(d: u32, sigma: f64, n: usize) -> f64 {
    let d = d as f64;
    (2.0 * std::f64::consts::PI * sigma * sigma).powf(d / 4.0) * (n as f64).powf(d / 2.0)
}

pub fn rescale_signatures(sigs: &[SignatureVector], d: u32, sigma: f64, n: usize) -> Vec<SignatureVector> {
    let c = grid_constant(d, sigma, n);
    sigs.iter().map(|s| s.scaled(c)).collect()
}

/// Scales `k_est` so that its Frobenius norm equals that of `k_gt`.
pub fn frobenius_align(k_est: &DenseMatrix, k_gt: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    if k_est.shape() != k_gt.shape() {
        return Err(Error::DimensionMismatch {
            expected: k_gt.rows() * k_gt.cols(),
            actual: k_est.rows() * k_est.cols(),
        });
    }
    let ne = k_est.frobenius_norm();
    if !(ne > 0.0) {
        return Err(Error::AlignmentUndefined);
    }
    let alpha = k_gt.frobenius_norm() / ne;
    Ok((alpha, k_est.scaled(alpha)))
}

/// Mean over repetitions of `|x - y|^2 / |y|^2`.
pub fn relative_mse(estimates: &[Vec<f64>], truth: &[f64]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::EmptyInput("repetitions"));
    }
    let denom: f64 = truth.iter().map(|y| y * y).sum();
    if !(denom > 0.0) {
        return Err(Error::ZeroTruthNorm);
    }
    let mut total = 0.0;
    for est in estimates {
        if est.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                actual: est.len(),
            });
        }
        total += est.iter().zip(truth).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / denom;
    }
    Ok(total / estimates.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelMetrics {
    pub r2: f64,
    pub mean_re: f64,
    pub median_re: f64,
    pub mse: f64,
    pub rmse: f64,
}

/// Entrywise comparison over all entries, diagonal included. Relative errors
/// use `max(truth, eps)` as the denominator.
pub fn kernel_metrics(k_est: &DenseMatrix, k_gt: &DenseMatrix, eps: f64) -> Result<KernelMetrics> {
    if k_est.shape() != k_gt.shape() {
        return Err(Error::DimensionMismatch {
            expected: k_gt.rows() * k_gt.cols(),
            actual: k_est.rows() * k_est.cols(),
        });
    }
    metrics_from_slices(k_est.as_slice(), k_gt.as_slice(), eps)
}

pub fn metrics_from_slices(est: &[f64], gt: &[f64], eps: f64) -> Result<KernelMetrics> {
    if est.len() != gt.len() {
        return Err(Error::DimensionMismatch {
            expected: gt.len(),
            actual: est.len(),
        });
    }
    if gt.is_empty() {
        return Err(Error::EmptyInput("kernel entries"));
    }
    if !(eps > 0.0) {
        return Err(invalid("eps", format!("must be positive, got {eps}")));
    }
    let n = gt.len() as f64;
    let mean = gt.iter().sum::<f64>() / n;
    let ss_tot: f64 = gt.iter().map(|y| (y - mean) * (y - mean)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let ss_res: f64 = est.iter().zip(gt).map(|(x, y)| (x - y) * (x - y)).sum();
    let mut re: Vec<f64> = est
        .iter()
        .zip(gt)
        .map(|(x, y)| (x - y).abs() / y.max(eps))
        .collect();
    let mean_re = re.iter().sum::<f64>() / n;
    re.sort_by(f64::total_cmp);
    let k = re.len();
    let median_re = if k % 2 == 1 {
        re[k / 2]
    } else {
        0.5 * (re[k / 2 - 1] + re[k / 2])
    };
    let mse = ss_res / n;
    Ok(KernelMetrics {
        r2: 1.0 - ss_res / ss_tot,
        mean_re,
        median_re,
        mse,
        rmse: mse.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_variant_is_exact() {
        let g = DenseMatrix::from_fn(4, 6, |i, j| ((i + 2 * j) % 5) as f64 * 0.3);
        let map = assemble_mrf(&g, MrfVariant::Full, None, 0).unwrap();
        let gram = map.gram().unwrap();
        for x in 0..4 {
            for y in 0..4 {
                let direct: f64 = (0..6).map(|w| g[(x, w)] * g[(y, w)]).sum();
                assert!((gram[(x, y)] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_sampled_anchor() {
        let g = DenseMatrix::from_fn(3, 5, |i, j| (i + j) as f64);
        let map = assemble_mrf(&g, MrfVariant::Sampled { m: 1 }, None, 7).unwrap();
        let a = map.anchors[0];
        for i in 0..3 {
            assert!((map.features[(i, 0)] - g[(i, a)] / (0.2f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_rejects_bad_inputs() {
        let g = DenseMatrix::from_fn(2, 3, |_, _| 1.0);
        assert!(assemble_mrf(&g, MrfVariant::Sampled { m: 0 }, None, 0).is_err());
        assert!(assemble_mrf(&g, MrfVariant::Sampled { m: 2 }, Some(&[0.0, 0.0, 0.0]), 0).is_err());
        assert!(matches!(
            assemble_with_anchors(&g, vec![1], &[0.5, 0.0, 0.5]),
            Err(Error::ZeroDensity(1))
        ));
        let neg = DenseMatrix::from_fn(2, 3, |_, _| -1.0);
        assert!(assemble_mrf(&neg, MrfVariant::Full, None, 0).is_err());
    }

    #[test]
    fn grid_constant_values() {
        let c = grid_constant(2, 0.2, 5);
        assert!((c - 2.5066282746310002).abs() < 1e-12);
        assert!(grid_constant(2, 0.2, 15) > c);
    }

    #[test]
    fn alignment_cases() {
        let gt = DenseMatrix::from_fn(3, 3, |i, j| 1.0 / (1 + i + j) as f64);
        let (a, k) = frobenius_align(&gt.scaled(2.0), &gt).unwrap();
        assert!((a - 0.5).abs() < 1e-15);
        assert!(k.max_abs_diff(&gt).unwrap() < 1e-15);
        assert!(matches!(
            frobenius_align(&DenseMatrix::zeros(3, 3), &gt),
            Err(Error::AlignmentUndefined)
        ));
    }

    #[test]
    fn relative_mse_cases() {
        let y = vec![1.0, -2.0, 3.0];
        assert_eq!(relative_mse(std::slice::from_ref(&y), &y).unwrap(), 0.0);
        let two: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        assert!((relative_mse(&[two], &y).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(relative_mse(&[vec![0.0]], &[0.0]), Err(Error::ZeroTruthNorm)));
    }

    #[test]
    fn metrics_cases() {
        let gt = DenseMatrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64 / 10.0);
        let m = kernel_metrics(&gt, &gt, 0.1).unwrap();
        assert_eq!((m.r2, m.mean_re, m.median_re, m.mse, m.rmse), (1.0, 0.0, 0.0, 0.0, 0.0));
        assert!(matches!(
            kernel_metrics(&gt, &DenseMatrix::identity(4).scaled(0.0), 0.1),
            Err(Error::ZeroVariance)
        ));
    }
}
