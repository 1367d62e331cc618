//! Surrogate training on a sampled surface and comparison of the learned
//! kernel with the spectral heat kernel of the same kNN graph.

use std::f64::consts::PI;
use std::time::Instant;

use mrf_core::graph::{build_knn_graph, geodesic_rows};
use mrf_core::interp::fit_mrf_surrogate;
use mrf_core::linalg::squared_distance;
use mrf_core::manifolds::{mobius_point, sample_surface, torus_point};
use mrf_core::mrf::{frobenius_align, kernel_metrics};
use mrf_core::oracles::eigendecompose_symmetric;
use mrf_core::surrogate::{build_dataset, gradient_check, predict_feature_matrix, write_loss_history, DatasetConfig};
use mrf_core::{Bandwidth, DenseMatrix, MrfConfig, PointCloud, SurfaceSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Overrides, RunContext, Scale};
use crate::error::{bad_value, CliError, Result};
use crate::experiments::update_mrf;
use crate::output::{Check, Manifest, RunDir};

#[derive(Debug, Clone, Serialize)]
pub struct ManifoldParams {
    /// One of `sphere`, `ellipsoid`, `torus`, `mobius`.
    pub surface: String,
    pub n_points: usize,
    pub ellipsoid_a: f64,
    pub ellipsoid_b: f64,
    pub ellipsoid_c: f64,
    pub torus_major: f64,
    pub torus_minor: f64,
    pub mobius_width: f64,
    /// Held-out nodes on which the kernel is compared; never used as starts.
    pub n_val: usize,
    /// Out-of-sample points for the timing comparison.
    pub n_oos: usize,
    /// Starts whose signature fields are dumped.
    pub n_fields: usize,
    /// Floor on the truth in relative errors.
    pub re_eps: f64,
    pub r2_target: f64,
    pub grad_tol: f64,
    #[serde(flatten)]
    pub mrf: MrfConfig,
}

impl ManifoldParams {
    pub fn preset(scale: Scale, seed: u64) -> Self {
        let mrf = match scale {
            Scale::Desk => MrfConfig {
                knn: 8,
                num_walks: 20_000,
                epochs: 300,
                ..MrfConfig::desk(seed)
            },
            Scale::Paper => MrfConfig {
                knn: 8,
                num_walks: 100_000,
                ..MrfConfig::paper(seed)
            },
        };
        Self {
            surface: "sphere".into(),
            n_points: match scale {
                Scale::Desk => 500,
                Scale::Paper => 4000,
            },
            ellipsoid_a: 1.0,
            ellipsoid_b: 1.3,
            ellipsoid_c: 0.7,
            torus_major: 2.0,
            torus_minor: 0.7,
            mobius_width: 0.4,
            n_val: 100,
            n_oos: 512,
            n_fields: 3,
            re_eps: 1e-6,
            r2_target: 0.9,
            grad_tol: 1e-4,
            mrf,
        }
    }

    pub fn resolve(scale: Scale, seed: u64, o: &Overrides) -> Result<Self> {
        let mut p = Self::preset(scale, seed);
        let mut r = o.resolver();
        r.update("surface", &mut p.surface)?;
        if p.surface == "mobius" {
            p.mrf.knn = 24;
        }
        r.update("n_points", &mut p.n_points)?;
        r.update("ellipsoid_a", &mut p.ellipsoid_a)?;
        r.update("ellipsoid_b", &mut p.ellipsoid_b)?;
        r.update("ellipsoid_c", &mut p.ellipsoid_c)?;
        r.update("torus_major", &mut p.torus_major)?;
        r.update("torus_minor", &mut p.torus_minor)?;
        r.update("mobius_width", &mut p.mobius_width)?;
        r.update("n_val", &mut p.n_val)?;
        r.update("n_oos", &mut p.n_oos)?;
        r.update("n_fields", &mut p.n_fields)?;
        r.update("re_eps", &mut p.re_eps)?;
        r.update("r2_target", &mut p.r2_target)?;
        r.update("grad_tol", &mut p.grad_tol)?;
        update_mrf(&mut r, &mut p.mrf)?;
        r.finish()?;
        p.spec()?.validate()?;
        if p.n_val < 2 || p.n_val >= p.n_points {
            return Err(bad_value("n_val", "need 2 <= n_val < n_points"));
        }
        Ok(p)
    }

    pub fn spec(&self) -> Result<SurfaceSpec> {
        Ok(match self.surface.as_str() {
            "sphere" => SurfaceSpec::sphere(),
            "ellipsoid" => SurfaceSpec::ellipsoid(self.ellipsoid_a, self.ellipsoid_b, self.ellipsoid_c),
            "torus" => SurfaceSpec::torus(self.torus_major, self.torus_minor),
            "mobius" => SurfaceSpec::mobius(self.mobius_width),
            other => return Err(bad_value("surface", format!("unknown surface `{other}`"))),
        })
    }

    /// Random points on the surface, drawn through its parametrization.
    fn random_points(&self, n: usize, seed: u64) -> Result<PointCloud> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flat = Vec::with_capacity(3 * n);
        for _ in 0..n {
            let p = match self.surface.as_str() {
                "sphere" | "ellipsoid" => {
                    let z: f64 = rng.gen_range(-1.0..1.0);
                    let phi = rng.gen_range(0.0..2.0 * PI);
                    let s = (1.0 - z * z).sqrt();
                    let (a, b, c) = if self.surface == "sphere" {
                        (1.0, 1.0, 1.0)
                    } else {
                        (self.ellipsoid_a, self.ellipsoid_b, self.ellipsoid_c)
                    };
                    [a * s * phi.cos(), b * s * phi.sin(), c * z]
                }
                "torus" => torus_point(
                    self.torus_major,
                    self.torus_minor,
                    rng.gen_range(0.0..2.0 * PI),
                    rng.gen_range(0.0..2.0 * PI),
                ),
                _ => mobius_point(
                    rng.gen_range(0.0..2.0 * PI),
                    rng.gen_range(-self.mobius_width..=self.mobius_width),
                ),
            };
            flat.extend(p);
        }
        Ok(PointCloud::new(3, flat)?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SurrogateMetrics {
    pub surface: String,
    pub n_points: usize,
    pub knn: usize,
    pub tau: f64,
    pub num_starts: usize,
    pub num_walks: usize,
    pub epochs: usize,
    pub num_triples: usize,
    pub n_val: usize,
    pub alignment: f64,
    pub r2: f64,
    pub mean_re: f64,
    pub median_re: f64,
    pub mse: f64,
    pub rmse: f64,
    pub min_feature: f64,
    pub grad_rel_error: f64,
    pub train_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
struct FieldRow {
    start: usize,
    node: usize,
    predicted: f64,
    grf: f64,
    ground_truth: f64,
    residual: f64,
}

#[derive(Debug, Clone, Serialize)]
struct KernelRow {
    row: usize,
    col: usize,
    estimate: f64,
    ground_truth: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OosTiming {
    pub method: String,
    pub points: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ManifoldReport {
    pub metrics: SurrogateMetrics,
    pub timing: Vec<OosTiming>,
    pub checks: Vec<Check>,
    pub manifest: Manifest,
}

fn nearest(points: &PointCloud, z: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d = squared_distance(p, z);
        if d < best.1 {
            best = (i, d);
        }
    }
    (best.0, best.1.sqrt())
}

/// Samples the surface, fits the surrogate from starts outside a held-out
/// set, and compares `Phi Phi^T` on the held-out nodes (all nodes as
/// anchors) with the spectral heat kernel after Frobenius alignment.
pub fn run(ctx: &RunContext, p: &ManifoldParams) -> Result<ManifoldReport> {
    let mut run_dir = RunDir::create(&ctx.out_dir)?;
    let points = sample_surface(&p.spec()?, p.n_points)?;
    let n = points.len();
    let mut cfg = p.mrf;
    cfg.seed = ctx.seed;
    if p.n_val >= n {
        return Err(bad_value("n_val", format!("surface has only {n} points")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x5e_ed0f_5a11);
    let mut val = rand::seq::index::sample(&mut rng, n, p.n_val).into_vec();
    val.sort_unstable();
    let mut is_val = vec![false; n];
    val.iter().for_each(|&i| is_val[i] = true);
    let pool: Vec<usize> = (0..n).filter(|&i| !is_val[i]).collect();

    let clock = Instant::now();
    let model = fit_mrf_surrogate(&points, &pool, &cfg)?;
    let train_seconds = clock.elapsed().as_secs_f64();
    log::info!(
        "trained on {} triples from {} starts in {train_seconds:.1}s",
        model.num_triples,
        model.starts.len()
    );
    if model.knn.disconnected {
        let comp = model.knn.graph.components();
        let c0 = comp[val[0]];
        if model.starts.iter().chain(&val).any(|&i| comp[i] != c0) {
            return Err(CliError::Disconnected(
                "starts and held-out nodes span several components".into(),
            ));
        }
        log::warn!("kNN graph is disconnected; all starts share one component");
    }

    // spectral truth from the same graph
    let wf = model.knn.graph.symmetric_normalized()?.to_dense();
    let eig = eigendecompose_symmetric(&wf)?;
    let full = eig.apply_function(|l| (cfg.tau * l).exp())?;
    let half = eig.apply_function(|l| (0.5 * cfg.tau * l).exp())?;

    let phi = model.features(&val, n, ctx.seed.wrapping_add(11))?;
    let min_feature = phi.features.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let est = phi.features.matmul_transposed(&phi.features)?;
    let truth = DenseMatrix::from_fn(val.len(), val.len(), |i, j| full[(val[i], val[j])]);
    let (alignment, aligned) = frobenius_align(&est, &truth)?;
    let m = kernel_metrics(&aligned, &truth, p.re_eps)?;
    log::info!("held-out R2 {:.4}, mean RE {:.3}", m.r2, m.mean_re);

    let mut kernel_rows = Vec::new();
    for i in 0..val.len().min(5) {
        for j in 0..val.len() {
            kernel_rows.push(KernelRow {
                row: val[i],
                col: val[j],
                estimate: aligned[(i, j)],
                ground_truth: truth[(i, j)],
            });
        }
    }

    // signature fields: learned g against the walk estimate and the exact
    // half-kernel row
    let all: Vec<usize> = (0..n).collect();
    let shown: Vec<usize> = model.starts.iter().take(p.n_fields).copied().collect();
    let geo = geodesic_rows(&model.knn.graph, &points, &shown)?;
    let mut fields = Vec::new();
    for (s, &start) in shown.iter().enumerate() {
        let g = DenseMatrix::new(1, n, geo[s].clone())?;
        let pred = predict_feature_matrix(&model.params, &points.select(&[start]), &points, &g)?;
        let sig = &model.signatures[model.starts.iter().position(|&x| x == start).unwrap_or(s)];
        for &j in &all {
            let predicted = pred[(0, j)] * (n as f64).sqrt();
            let ground_truth = half[(start, j)];
            fields.push(FieldRow {
                start,
                node: j,
                predicted,
                grf: sig.get(j),
                ground_truth,
                residual: predicted - ground_truth,
            });
        }
    }

    // gradient check on a few supervision triples
    let k = model.starts.len().min(4);
    let starts_geo = geodesic_rows(&model.knn.graph, &points, &model.starts[..k])?;
    let triples = build_dataset(
        &model.signatures[..k],
        &points,
        &starts_geo,
        &DatasetConfig {
            keep_threshold: cfg.keep_threshold,
            retain_prob: cfg.retain_prob,
            candidates_per_start: cfg.candidates_per_start,
            seed: ctx.seed.wrapping_add(5),
        },
    )?;
    let sample: Vec<_> = triples.iter().take(32).collect();
    let inputs: Vec<Vec<f64>> = sample.iter().map(|t| t.input()).collect();
    let targets: Vec<f64> = sample.iter().map(|t| t.target).collect();
    // a ReLU kink inside the stencil spoils one step size but not both
    let grad_rel_error = [1e-5, 1e-6]
        .into_iter()
        .map(|h| gradient_check(&model.params, &inputs, &targets, cfg.eps, h))
        .collect::<mrf_core::Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);

    let timing = oos_timing(p, &cfg, &model, ctx.seed)?;

    let metrics = SurrogateMetrics {
        surface: p.surface.clone(),
        n_points: n,
        knn: cfg.knn,
        tau: cfg.tau,
        num_starts: model.starts.len(),
        num_walks: cfg.num_walks,
        epochs: cfg.epochs,
        num_triples: model.num_triples,
        n_val: val.len(),
        alignment,
        r2: m.r2,
        mean_re: m.mean_re,
        median_re: m.median_re,
        mse: m.mse,
        rmse: m.rmse,
        min_feature,
        grad_rel_error,
        train_seconds,
    };

    // timing columns are excluded from the deterministic tables
    let mut stable = metrics.clone();
    stable.train_seconds = 0.0;
    run_dir.csv("surrogate_metrics.csv", &[stable])?;
    write_loss_history(run_dir.file("loss_history.csv")?, &model.history)?;
    run_dir.csv("fields.csv", &fields)?;
    run_dir.csv("kernel_rows.csv", &kernel_rows)?;
    run_dir.csv("surrogate_timing.csv", &timing)?;

    let checks = vec![
        Check::at_least("heldout_r2", m.r2, p.r2_target),
        Check::at_least("min_feature", min_feature, 0.0),
        Check::below("gradient_check", grad_rel_error, p.grad_tol),
    ];
    let manifest = run_dir.finish("manifold-surrogate", ctx, p, &checks)?;
    Ok(ManifoldReport {
        metrics,
        timing,
        checks,
        manifest,
    })
}

/// Kernel on `n_oos` fresh points: the surrogate attaches each point to its
/// nearest node (distance plus graph geodesic), the spectral baseline
/// rebuilds the graph with the points added and diagonalizes it.
fn oos_timing(
    p: &ManifoldParams,
    cfg: &MrfConfig,
    model: &mrf_core::interp::MrfSurrogate,
    seed: u64,
) -> Result<Vec<OosTiming>> {
    if p.n_oos == 0 {
        return Ok(Vec::new());
    }
    let n = model.points.len();
    let fresh = p.random_points(p.n_oos, seed.wrapping_add(13))?;
    let n_rf = cfg.n_rf.min(n);

    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    let mut anchors = rand::seq::index::sample(&mut rng, n, n_rf).into_vec();
    anchors.sort_unstable();
    let rows = geodesic_rows(&model.knn.graph, &model.points, &anchors)?;
    let attach: Vec<(usize, f64)> = fresh.iter().map(|z| nearest(&model.points, z)).collect();
    let geo = DenseMatrix::from_fn(p.n_oos, n_rf, |i, l| attach[i].1 + rows[l][attach[i].0]);
    let phi = predict_feature_matrix(&model.params, &fresh, &model.points.select(&anchors), &geo)?;
    let _k = phi.matmul_transposed(&phi)?;
    let mrf_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut flat = model.points.coords().to_vec();
    flat.extend_from_slice(fresh.coords());
    let joint = PointCloud::new(3, flat)?;
    let graph = build_knn_graph(&joint, cfg.knn, Bandwidth::MedianEdge)?.graph;
    let eig = eigendecompose_symmetric(&graph.symmetric_normalized()?.to_dense())?;
    let v = &eig.eigenvectors;
    let scale: Vec<f64> = eig.eigenvalues.iter().map(|&l| (cfg.tau * l).exp()).collect();
    let block = DenseMatrix::from_fn(p.n_oos, v.cols(), |i, j| v[(n + i, j)] * scale[j].sqrt());
    let _k = block.matmul_transposed(&block)?;
    let spectral_seconds = clock.elapsed().as_secs_f64();

    Ok(vec![
        OosTiming {
            method: "mrf".into(),
            points: p.n_oos,
            seconds: mrf_seconds,
        },
        OosTiming {
            method: "spectral".into(),
            points: p.n_oos,
            seconds: spectral_seconds,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mobius_defaults_to_wider_neighbourhoods() {
        let o = Overrides::parse("surface=mobius").unwrap();
        assert_eq!(ManifoldParams::resolve(Scale::Desk, 0, &o).unwrap().mrf.knn, 24);
        let o = Overrides::parse("surface=mobius\nknn=10").unwrap();
        assert_eq!(ManifoldParams::resolve(Scale::Desk, 0, &o).unwrap().mrf.knn, 10);
        let d = ManifoldParams::resolve(Scale::Desk, 0, &Overrides::default()).unwrap();
        assert_eq!((d.mrf.knn, d.n_points, d.mrf.num_walks, d.mrf.epochs), (8, 500, 20_000, 300));
    }

    #[test]
    fn unknown_surface_is_rejected() {
        let o = Overrides::parse("surface=klein").unwrap();
        assert!(ManifoldParams::resolve(Scale::Desk, 0, &o).is_err());
    }

    #[test]
    fn random_points_lie_on_the_surface() {
        for s in ["sphere", "ellipsoid", "torus", "mobius"] {
            let o = Overrides::parse(&format!("surface={s}")).unwrap();
            let p = ManifoldParams::resolve(Scale::Desk, 0, &o).unwrap();
            let spec = p.spec().unwrap();
            let pts = p.random_points(50, 1).unwrap();
            for z in pts.iter() {
                assert!(spec.residual(z) < 1e-9, "{s}: {}", spec.residual(z));
            }
        }
    }

    #[test]
    fn tiny_run_writes_tables() {
        let dir = tempfile::tempdir().unwrap();
        let o = Overrides::parse(
            "n_points=120\nn_val=20\nn_oos=16\nnum_starts=20\nnum_walks=300\nepochs=3\nn_rf=32\ncandidates_per_start=40",
        )
        .unwrap();
        let p = ManifoldParams::resolve(Scale::Desk, 0, &o).unwrap();
        let rep = run(&RunContext::new(dir.path()), &p).unwrap();
        assert_eq!(rep.metrics.n_val, 20);
        assert!(rep.metrics.min_feature >= 0.0);
        assert_eq!(rep.timing.len(), 2);
        for f in ["surrogate_metrics.csv", "loss_history.csv", "fields.csv", "kernel_rows.csv", "surrogate_timing.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let fields = std::fs::read_to_string(dir.path().join("fields.csv")).unwrap();
        assert_eq!(fields.lines().count(), 1 + 3 * 120);
    }
}
