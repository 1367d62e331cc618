use mrf_core::graph::{build_grid_graph, rescaled_random_walk_laplacian};
use mrf_core::grf::{exact_kernel_series, heat_alpha};
use mrf_core::linalg::DenseMatrix;
use mrf_core::manifolds::fibonacci_sphere;
use mrf_core::oracles::{
    eigendecompose_symmetric, gaussian_feature_quadrature, gaussian_kernel, kronecker_heat_grid, legendre_series,
    periodized_gaussian, periodized_gaussian_density, spectral_heat_kernel, sphere_heat_kernel, HeatKernelParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Bonnet recursion written out independently of the library.
fn legendre(l: usize, z: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, z);
    if l == 0 {
        return p0;
    }
    for k in 1..l {
        let p2 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p0) / (k + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

#[test]
fn legendre_matches_independent_recursion() {
    for &z in &[-1.0, -0.3, 0.0, 0.42, 1.0] {
        let series = legendre_series(z, 20);
        for (l, v) in series.iter().enumerate() {
            assert!((v - legendre(l, z)).abs() < 1e-12, "l={l} z={z}");
        }
    }
}

#[test]
fn sphere_kernel_integrates_to_one() {
    let pts = fibonacci_sphere(4000);
    for &t in &[0.1, 0.25, 1.0] {
        for x in [pts[0], pts[1234], pts[3999]] {
            let total: f64 = pts.iter().map(|y| sphere_heat_kernel(&x, y, t, 50).unwrap()).sum();
            let integral = 4.0 * PI / pts.len() as f64 * total;
            assert!((integral - 1.0).abs() < 0.02, "t={t} integral {integral}");
        }
    }
}

#[test]
fn sphere_kernel_tail_is_negligible() {
    let x = [0.0, 0.0, 1.0];
    let a = sphere_heat_kernel(&x, &x, 0.25, 50).unwrap();
    let b = sphere_heat_kernel(&x, &x, 0.25, 100).unwrap();
    assert!((a - b).abs() < 1e-8);
}

#[test]
fn thm_a3_quadrature_reproduces_gaussian() {
    let sigma = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let x: f64 = rng.gen_range(-1.0..1.0);
        let y = x + rng.gen_range(-3.0 * sigma..3.0 * sigma);
        let q = gaussian_feature_quadrature(x, y, sigma, 6.0 * sigma, sigma / 50.0);
        let k = gaussian_kernel(&[x], &[y], sigma).unwrap();
        assert!((q - k).abs() < 1e-6, "x={x} y={y}: {q} vs {k}");
    }
}

#[test]
fn periodized_gaussian_reduces_to_plain_for_narrow_width() {
    let (x, y) = ([0.3], [0.4]);
    let a = periodized_gaussian(&x, &y, 0.05, 0).unwrap();
    let b = periodized_gaussian(&x, &y, 0.05, 3).unwrap();
    assert!((a - b).abs() < 1e-12);
    let plain = (-(0.1f64).powi(2) / (2.0 * 0.05 * 0.05)).exp();
    assert!((a - plain).abs() < 1e-15);
}

#[test]
fn kronecker_matches_full_eigendecomposition() {
    let t = 0.003;
    let grid = build_grid_graph(8, 2).unwrap();
    let l = rescaled_random_walk_laplacian(grid.graph(), 8, 2).unwrap();
    let full = spectral_heat_kernel(&l, HeatKernelParams::diffusion(t)).unwrap();
    let kron = kronecker_heat_grid(8, 2, t).unwrap().to_dense().unwrap();
    assert!(full.max_abs_diff(&kron).unwrap() < 1e-10);
}

fn grid_to_torus_error(n: usize, sigma: f64) -> f64 {
    // row-stochastic exp(-(sigma^2/2) L_n) times n approximates the torus density
    let k = kronecker_heat_grid(n, 1, sigma * sigma / 2.0).unwrap();
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let x = [a as f64 / n as f64];
            let y = [b as f64 / n as f64];
            let truth = periodized_gaussian_density(&x, &y, sigma, 4).unwrap();
            worst = worst.max((k.ring_entry(a, b) * n as f64 - truth).abs());
        }
    }
    worst
}

#[test]
fn grid_heat_kernel_converges_to_periodized_gaussian() {
    let e: Vec<f64> = [16, 32, 64].iter().map(|&n| grid_to_torus_error(n, 0.2)).collect();
    assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
    // second order in h
    assert!(e[1] / e[2] > 3.0, "{e:?}");
}

#[test]
fn affinity_heat_of_swap_matrix_is_cosh_sinh() {
    let w = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let spec = spectral_heat_kernel(&w, HeatKernelParams::affinity(1.0)).unwrap();
    let series = exact_kernel_series(&w, &heat_alpha(1.0, 60).unwrap()).unwrap();
    let (c, s) = (1f64.cosh(), 1f64.sinh());
    for m in [&spec, &series] {
        assert!((m[(0, 0)] - c).abs() < 1e-10 && (m[(0, 1)] - s).abs() < 1e-10);
    }
    assert!(spec.max_abs_diff(&series).unwrap() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn oracle_kernels_symmetric_with_monotone_spectrum(vals in prop::collection::vec(-1.0f64..1.0, 21), t in 0.05f64..2.0) {
        let n = 6;
        let mut m = DenseMatrix::zeros(n, n);
        let mut it = vals.into_iter();
        for i in 0..n {
            for j in i..n {
                let v = it.next().unwrap();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let k = spectral_heat_kernel(&m, HeatKernelParams::diffusion(t)).unwrap();
        prop_assert!(k.max_asymmetry() < 1e-10);
        prop_assert!(k.diagonal().iter().all(|d| *d >= 0.0));
        // exp(-t lambda) is decreasing: the kernel's spectrum is the reverse order
        let ek = eigendecompose_symmetric(&k).unwrap().eigenvalues;
        let em = eigendecompose_symmetric(&m).unwrap().eigenvalues;
        for (i, l) in em.iter().enumerate() {
            let mapped = (-t * l).exp();
            prop_assert!((ek[n - 1 - i] - mapped).abs() < 1e-9 * mapped.max(1.0));
        }
    }

    #[test]
    fn sphere_kernel_is_symmetric(a in 0usize..500, b in 0usize..500, t in 0.05f64..1.0) {
        let pts = fibonacci_sphere(500);
        let kab = sphere_heat_kernel(&pts[a], &pts[b], t, 50).unwrap();
        let kba = sphere_heat_kernel(&pts[b], &pts[a], t, 50).unwrap();
        prop_assert!((kab - kba).abs() < 1e-12 * kab.abs().max(1.0));
    }
}
