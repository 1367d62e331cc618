//! Numerical self-checks: each returns measured values against tolerances.

use std::f64::consts::PI;

use mrf_core::graph::{
    apply_rescaled_laplacian, build_grid_graph, build_knn_graph, rescaled_random_walk_laplacian, Bandwidth,
    GridGraph, PointCloud, WeightedGraph,
};
use mrf_core::grf::{convolve, deconvolve_alpha, estimate_kernel, exact_kernel_series, heat_alpha, run_grf, WalkConfig};
use mrf_core::linalg::DenseMatrix;
use mrf_core::manifolds::fibonacci_sphere;
use mrf_core::mrf::{frobenius_align, kernel_metrics};
use mrf_core::oracles::{
    eigendecompose_symmetric, gaussian_feature_quadrature, gaussian_kernel, kronecker_heat_grid,
    midpoint_identity_residual, periodized_gaussian_density, spectral_heat_kernel, sphere_heat_kernel,
    sphere_heat_kernel_matrix, HeatKernelParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::output::Check;

/// Connected random graph: a ring plus random chords, weights in (0.1, 0.5).
pub fn random_connected_graph(n: usize, chords: usize, seed: u64) -> Result<WeightedGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        edges.push((i, (i + 1) % n, rng.gen_range(0.1..0.5)));
    }
    for _ in 0..chords {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            edges.push((a, b, rng.gen_range(0.1..0.5)));
        }
    }
    Ok(WeightedGraph::from_edges(n, &edges)?)
}

/// Averages independent-set GRF estimates of `exp(W)` on a random 20-node
/// graph and compares them with the exact series, entry by entry.
pub fn grf_unbiasedness(seed: u64) -> Result<Vec<Check>> {
    let n = 20;
    let (reps, walks) = (100u64, 5_000);
    let g = random_connected_graph(n, 25, seed)?;
    let alpha = heat_alpha(1.0, 80)?;
    let f = deconvolve_alpha(&alpha)?;
    let exact = exact_kernel_series(&g.to_dense(), &alpha)?;
    let nodes: Vec<usize> = (0..n).collect();
    let mut sum = DenseMatrix::zeros(n, n);
    let mut sum_sq = DenseMatrix::zeros(n, n);
    for r in 0..reps {
        let cfg = WalkConfig::new(0.2, walks, seed.wrapping_mul(1_000_003).wrapping_add(r))?;
        let rows = run_grf(&g, &f, &cfg, &nodes)?;
        let cols = run_grf(&g, &f, &cfg.independent(), &nodes)?;
        let est = estimate_kernel(&rows, &cols)?;
        for (k, v) in est.as_slice().iter().enumerate() {
            sum.as_mut_slice()[k] += v;
            sum_sq.as_mut_slice()[k] += v * v;
        }
    }
    let r = reps as f64;
    let (mut worst_rel, mut worst_z): (f64, f64) = (0.0, 0.0);
    for k in 0..n * n {
        let truth = exact.as_slice()[k];
        let mean = sum.as_slice()[k] / r;
        let var = (sum_sq.as_slice()[k] - r * mean * mean).max(0.0) / (r - 1.0);
        let se = (var / r).sqrt();
        if truth > 0.01 {
            worst_rel = worst_rel.max((mean - truth).abs() / truth);
        }
        if se > 0.0 {
            worst_z = worst_z.max(((mean - truth) / se).abs());
        }
    }
    let total_walks = reps as usize * walks * 2 * n;
    Ok(vec![
        Check::below(format!("grf_max_relative_error ({total_walks} walks)"), worst_rel, 0.05),
        Check::below("grf_max_abs_z", worst_z, 4.0),
    ])
}

/// Self-convolution of the deconvolved heat modulation against `alpha`, and
/// against the closed form `(t/2)^k / k!`, for `k <= 30`.
pub fn deconvolution_identity() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for t in [0.02, 1.0, 10.0] {
        let alpha = heat_alpha(t, 200)?;
        let f = deconvolve_alpha(&alpha)?;
        let fv = f.values();
        let conv = convolve(fv, fv);
        let (mut conv_err, mut closed_err): (f64, f64) = (0.0, 0.0);
        let mut closed = 1.0;
        for k in 0..=30 {
            if k > 0 {
                closed *= t / 2.0 / k as f64;
            }
            let a = alpha.values()[k];
            conv_err = conv_err.max((conv[k] - a).abs() / a);
            closed_err = closed_err.max((fv[k] - closed).abs() / closed);
        }
        out.push(Check::below(format!("self_convolution t={t}"), conv_err, 1e-12));
        out.push(Check::below(format!("closed_form t={t}"), closed_err, 1e-12));
    }
    Ok(out)
}

fn laplacian_sup_error(n: usize, d: u32) -> Result<f64> {
    let grid: GridGraph = build_grid_graph(n, d)?;
    let f: Vec<f64> = (0..grid.num_nodes())
        .map(|i| grid.coords(i).iter().map(|x| (2.0 * PI * x).sin()).product())
        .collect();
    let lf = apply_rescaled_laplacian(&grid, &f)?;
    let eig = 4.0 * PI * PI * d as f64;
    Ok(lf.iter().zip(&f).map(|(a, b)| (a - eig * b).abs()).fold(0.0, f64::max))
}

/// Sup-norm consistency error of the grid Laplacian on a sine product, from
/// `n = 16` to `n = 32`.
pub fn laplacian_rate() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for d in [1u32, 2] {
        let ratio = laplacian_sup_error(16, d)? / laplacian_sup_error(32, d)?;
        out.push(Check::within(format!("laplacian_error_ratio d={d}"), ratio, 3.2, 4.8));
        out.push(Check::at_least(format!("laplacian_order d={d}"), ratio.log2(), 1.8));
    }
    Ok(out)
}

/// Trapezoid quadrature of the Gaussian feature product versus the kernel,
/// `d = 1`, `sigma = 0.2`, 20 random pairs with `|x - y| <= 3 sigma`.
pub fn gaussian_quadrature(seed: u64) -> Result<Vec<Check>> {
    let sigma = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x: f64 = rng.gen_range(-1.0..1.0);
        let y = x + rng.gen_range(-3.0 * sigma..=3.0 * sigma);
        let q = gaussian_feature_quadrature(x, y, sigma, 6.0 * sigma, sigma / 50.0);
        worst = worst.max((q - gaussian_kernel(&[x], &[y], sigma)?).abs());
    }
    Ok(vec![Check::below("gaussian_quadrature_max_abs_error", worst, 1e-6)])
}

/// The completing-the-square identity on random triples.
pub fn midpoint_identity(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let mut v = || -> Vec<f64> { (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let (x, y, w) = (v(), v(), v());
        worst = worst.max(midpoint_identity_residual(&x, &y, &w)?.abs());
    }
    Ok(vec![Check::below("midpoint_identity_residual", worst, 1e-12)])
}

/// Tensorized 1D heat kernels versus the full 64 x 64 spectral kernel.
pub fn kronecker_tensorization() -> Result<Vec<Check>> {
    let (n, d, t) = (8, 2, 0.003);
    let grid = build_grid_graph(n, d)?;
    let lap = rescaled_random_walk_laplacian(grid.graph(), n, d)?;
    let full = spectral_heat_kernel(&lap, HeatKernelParams::diffusion(t))?;
    let kron = kronecker_heat_grid(n, d, t)?.to_dense()?;
    Ok(vec![Check::below("kronecker_max_deviation", full.max_abs_diff(&kron)?, 1e-10)])
}

fn grid_to_torus_error(n: usize, sigma: f64) -> Result<f64> {
    let k = kronecker_heat_grid(n, 1, sigma * sigma / 2.0)?;
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let x = [a as f64 / n as f64];
            let y = [b as f64 / n as f64];
            let truth = periodized_gaussian_density(&x, &y, sigma, 4)?;
            worst = worst.max((k.ring_entry(a, b) * n as f64 - truth).abs());
        }
    }
    Ok(worst)
}

/// Grid heat kernels approach the periodized Gaussian as the grid refines.
pub fn periodized_limit() -> Result<Vec<Check>> {
    let e: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&n| grid_to_torus_error(n, 0.2))
        .collect::<Result<_>>()?;
    Ok(vec![
        Check::holds(
            "periodized_limit_decreasing",
            e[0] > e[1] && e[1] > e[2],
            "error strictly decreasing over n = 16, 32, 64",
        ),
        Check::at_least("periodized_limit_ratio_32_64", e[1] / e[2], 3.0),
    ])
}

/// The truncated sphere kernel integrates to one and its tail is negligible.
pub fn sphere_series() -> Result<Vec<Check>> {
    let pts = fibonacci_sphere(4000);
    let t = 0.25;
    let total: f64 = pts
        .iter()
        .map(|y| sphere_heat_kernel(&pts[0], y, t, 50))
        .sum::<mrf_core::Result<f64>>()?;
    let integral = 4.0 * PI / pts.len() as f64 * total;
    let x = [0.0, 0.0, 1.0];
    let tail = (sphere_heat_kernel(&x, &x, t, 50)? - sphere_heat_kernel(&x, &x, t, 100)?).abs();
    Ok(vec![
        Check::below("sphere_kernel_integral_deviation", (integral - 1.0).abs(), 0.02),
        Check::below("sphere_kernel_tail_l50_vs_l100", tail, 1e-8),
    ])
}

/// Result of comparing the graph heat kernel of a Fibonacci sphere with the
/// analytic sphere kernel.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SphereConsistency {
    pub n: usize,
    pub knn: usize,
    pub t: f64,
    /// Factor mapping the normalized graph Laplacian onto the sphere's.
    pub laplacian_scale: f64,
    pub alpha: f64,
    pub r2: f64,
}

/// Builds a kNN graph on a Fibonacci sphere, scales `I - W_f` so that its
/// first nontrivial eigenvalue cluster averages 2 (the `l = 1` eigenvalue of
/// the sphere), and compares `exp(-t L)` with the truncated analytic kernel
/// after Frobenius alignment.
pub fn sphere_consistency(n: usize, knn: usize, t: f64, lmax: usize) -> Result<SphereConsistency> {
    let pts = fibonacci_sphere(n);
    let flat: Vec<f64> = pts.iter().flatten().copied().collect();
    let cloud = PointCloud::new(3, flat.clone())?;
    let g = build_knn_graph(&cloud, knn, Bandwidth::MedianEdge)?;
    let wf = g.graph.symmetric_normalized()?.to_dense();
    let lap = DenseMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - wf[(i, j)]);
    let eig = eigendecompose_symmetric(&lap)?;
    let first: f64 = eig.eigenvalues[1..4].iter().sum::<f64>() / 3.0;
    let scale = 2.0 / first;
    let graph_kernel = eig.apply_function(|l| (-t * scale * l).exp())?;
    let analytic = sphere_heat_kernel_matrix(&flat, t, lmax)?;
    let (alpha, aligned) = frobenius_align(&graph_kernel, &analytic)?;
    let m = kernel_metrics(&aligned, &analytic, 0.1)?;
    Ok(SphereConsistency {
        n,
        knn,
        t,
        laplacian_scale: scale,
        alpha,
        r2: m.r2,
    })
}

/// Frobenius alignment: exact on scalar multiples, idempotent, and
/// preserving the location of the maximum.
pub fn alignment_properties(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut exact_err, mut idem_err): (f64, f64) = (0.0, 0.0);
    let mut argmax_ok = true;
    let argmax = |m: &DenseMatrix| {
        m.as_slice()
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
            .0
    };
    for _ in 0..50 {
        let gt = DenseMatrix::from_fn(6, 6, |_, _| rng.gen_range(0.0..3.0));
        let c: f64 = rng.gen_range(0.01..100.0);
        let (a, _) = frobenius_align(&gt.scaled(c), &gt)?;
        exact_err = exact_err.max((a * c - 1.0).abs());
        let est = DenseMatrix::from_fn(6, 6, |_, _| rng.gen_range(0.0..5.0));
        let (_, aligned) = frobenius_align(&est, &gt)?;
        let (again, _) = frobenius_align(&aligned, &gt)?;
        idem_err = idem_err.max((again - 1.0).abs());
        argmax_ok &= argmax(&aligned) == argmax(&est);
    }
    Ok(vec![
        Check::below("alignment_multiple_recovery", exact_err, 1e-12),
        Check::below("alignment_idempotence", idem_err, 1e-12),
        Check::holds("alignment_argmax", argmax_ok, "argmax of estimate preserved"),
    ])
}
