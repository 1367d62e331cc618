//! Mesh interpolation: vertex normals on a mesh and velocities on densified
//! cloth, each through the dense spectral kernel and the MRF factor.

use std::cell::RefCell;
use std::time::Duration;

use mrf_core::interp::{
    loglog_slope, mask_field, normals_full_kernel, normals_mrf, relative_row_error, velocity_full_kernel,
    velocity_mrf, write_timing_csv, Timed, TimedMethod, TimingRecord,
};
use mrf_core::manifolds::{densify_mesh, flag_mesh, load_mesh, torus_mesh, transfer_field, vertex_normals, FacePolicy, Vec3};
use mrf_core::{InterpolationReport, Mesh, MrfConfig};
use serde::Serialize;

use crate::config::{Overrides, RunContext, Scale};
use crate::error::{bad_value, Result};
use crate::experiments::update_mrf;
use crate::output::{Check, Manifest, RunDir};

/// `torus:NUxNV`, `flag:NXxNY` or a path to an OBJ file.
pub fn load_mesh_spec(spec: &str, torus_major: f64, torus_minor: f64) -> Result<Mesh> {
    let grid = |dims: &str| -> Result<(usize, usize)> {
        let (a, b) = dims
            .split_once('x')
            .ok_or_else(|| bad_value("mesh", format!("expected `NxM` in `{spec}`")))?;
        let parse = |s: &str| s.parse::<usize>().map_err(|e| bad_value("mesh", format!("`{s}`: {e}")));
        Ok((parse(a)?, parse(b)?))
    };
    if let Some(dims) = spec.strip_prefix("torus:") {
        let (nu, nv) = grid(dims)?;
        Ok(torus_mesh(nu, nv, torus_major, torus_minor)?)
    } else if let Some(dims) = spec.strip_prefix("flag:") {
        let (nx, ny) = grid(dims)?;
        Ok(flag_mesh(nx, ny)?)
    } else {
        let (mesh, stats) = load_mesh(spec, FacePolicy::Fan)?;
        if stats.dropped_degenerate > 0 {
            log::warn!("{spec}: dropped {} degenerate faces", stats.dropped_degenerate);
        }
        Ok(mesh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fk,
    Mrf,
    Both,
}

impl Method {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "fk" => Ok(Method::Fk),
            "mrf" => Ok(Method::Mrf),
            "both" => Ok(Method::Both),
            other => Err(bad_value("method", format!("expected fk, mrf or both, got `{other}`"))),
        }
    }

    fn fk(self) -> bool {
        self != Method::Mrf
    }

    fn mrf(self) -> bool {
        self != Method::Fk
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalsParams {
    pub mesh: String,
    pub torus_major: f64,
    pub torus_minor: f64,
    pub mask_frac: f64,
    pub method: String,
    /// Largest accepted gap between the two mean cosine similarities.
    pub max_gap: f64,
    #[serde(flatten)]
    pub mrf: MrfConfig,
}

impl NormalsParams {
    pub fn preset(scale: Scale, seed: u64) -> Self {
        let mrf = match scale {
            Scale::Desk => MrfConfig {
                num_walks: 5000,
                epochs: 300,
                ..MrfConfig::desk(seed)
            },
            Scale::Paper => MrfConfig::paper(seed),
        };
        Self {
            mesh: "torus:50x40".into(),
            torus_major: 2.0,
            torus_minor: 0.8,
            mask_frac: 0.8,
            method: "both".into(),
            max_gap: 0.05,
            mrf,
        }
    }

    pub fn resolve(scale: Scale, seed: u64, o: &Overrides) -> Result<Self> {
        let mut p = Self::preset(scale, seed);
        let mut r = o.resolver();
        r.update("mesh", &mut p.mesh)?;
        r.update("torus_major", &mut p.torus_major)?;
        r.update("torus_minor", &mut p.torus_minor)?;
        r.update("mask_frac", &mut p.mask_frac)?;
        r.update("method", &mut p.method)?;
        r.update("max_gap", &mut p.max_gap)?;
        update_mrf(&mut r, &mut p.mrf)?;
        r.finish()?;
        Method::parse(&p.method)?;
        if !(0.0..1.0).contains(&p.mask_frac) {
            return Err(bad_value("mask_frac", "must lie in [0, 1)"));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalsAccuracy {
    pub method: String,
    pub vertices: usize,
    pub masked: usize,
    pub mean_cosine: f64,
    pub zero_rows: usize,
}

#[derive(Debug, Clone, Serialize)]
struct NormalsTiming {
    method: String,
    vertices: usize,
    preprocess_seconds: f64,
    interpolate_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
struct PredictionRow {
    method: String,
    vertex: usize,
    masked: bool,
    pred_x: f64,
    pred_y: f64,
    pred_z: f64,
    true_x: f64,
    true_y: f64,
    true_z: f64,
}

#[derive(Debug, Clone)]
pub struct NormalsReport {
    pub accuracy: Vec<NormalsAccuracy>,
    pub checks: Vec<Check>,
    pub manifest: Manifest,
}

/// Masks a fraction of the vertex normals and predicts them back.
pub fn run_normals(ctx: &RunContext, p: &NormalsParams) -> Result<NormalsReport> {
    let mut run_dir = RunDir::create(&ctx.out_dir)?;
    let method = Method::parse(&p.method)?;
    let mesh = load_mesh_spec(&p.mesh, p.torus_major, p.torus_minor)?;
    let truth: Vec<Vec3> = match &mesh.normals {
        Some(n) => n.clone(),
        None => vertex_normals(&mesh).normals,
    };
    let masked = mask_field(&truth, p.mask_frac, ctx.seed)?;
    let mut cfg = p.mrf;
    cfg.seed = ctx.seed;

    let mut reports: Vec<(String, InterpolationReport)> = Vec::new();
    if method.fk() {
        reports.push(("fk".into(), normals_full_kernel(&mesh, &masked, &truth, cfg.tau)?));
    }
    if method.mrf() {
        reports.push(("mrf".into(), normals_mrf(&mesh, &masked, &truth, &cfg)?));
    }
    for (m, r) in &reports {
        log::info!(
            "{m}: mean cosine {:.4} (pre {:.2}s, interp {:.3}s)",
            r.score,
            r.preprocess_seconds,
            r.interpolate_seconds
        );
    }

    let nv = mesh.num_vertices();
    let accuracy: Vec<NormalsAccuracy> = reports
        .iter()
        .map(|(m, r)| NormalsAccuracy {
            method: m.clone(),
            vertices: nv,
            masked: masked.masked.len(),
            mean_cosine: r.score,
            zero_rows: r.zero_rows.len(),
        })
        .collect();
    let timing: Vec<NormalsTiming> = reports
        .iter()
        .map(|(m, r)| NormalsTiming {
            method: m.clone(),
            vertices: nv,
            preprocess_seconds: r.preprocess_seconds,
            interpolate_seconds: r.interpolate_seconds,
        })
        .collect();
    let mut predictions = Vec::new();
    for (m, r) in &reports {
        for (i, (pr, t)) in r.predictions.iter().zip(&truth).enumerate() {
            predictions.push(PredictionRow {
                method: m.clone(),
                vertex: i,
                masked: !masked.observed[i],
                pred_x: pr[0],
                pred_y: pr[1],
                pred_z: pr[2],
                true_x: t[0],
                true_y: t[1],
                true_z: t[2],
            });
        }
    }
    run_dir.csv("normals_accuracy.csv", &accuracy)?;
    run_dir.csv("normals_predictions.csv", &predictions)?;
    run_dir.csv("normals_timing.csv", &timing)?;
    let json: serde_json::Map<String, serde_json::Value> = reports
        .iter()
        .map(|(m, r)| Ok((m.clone(), serde_json::to_value(r)?)))
        .collect::<Result<_>>()?;
    serde_json::to_writer_pretty(run_dir.file("normals_report.json")?, &json)?;

    let mut checks = Vec::new();
    if let [fk, mrf] = &accuracy[..] {
        checks.push(Check::below(
            "normals_cosine_gap",
            (fk.mean_cosine - mrf.mean_cosine).abs(),
            p.max_gap,
        ));
    }
    let manifest = run_dir.finish("mesh-normals", ctx, p, &checks)?;
    Ok(NormalsReport {
        accuracy,
        checks,
        manifest,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VelocityParams {
    pub flag_nx: usize,
    pub flag_ny: usize,
    pub n_dense: Vec<usize>,
    pub mask_frac: f64,
    pub method: String,
    /// Per-run wall-clock budget; larger sizes of a method that exceeds it
    /// are recorded as censored.
    pub budget_seconds: f64,
    /// Required gap between the FK and MRF preprocessing log-log slopes.
    pub min_slope_gap: f64,
    #[serde(flatten)]
    pub mrf: MrfConfig,
}

impl VelocityParams {
    pub fn preset(scale: Scale, seed: u64) -> Self {
        let (mrf, n_dense) = match scale {
            Scale::Desk => (MrfConfig::desk(seed), vec![500, 1000, 2000, 4000]),
            Scale::Paper => (MrfConfig::paper(seed), vec![5000, 10_000, 20_000, 40_000]),
        };
        Self {
            flag_nx: 20,
            flag_ny: 10,
            n_dense,
            mask_frac: 0.05,
            method: "both".into(),
            budget_seconds: 900.0,
            min_slope_gap: 1.0,
            mrf,
        }
    }

    pub fn resolve(scale: Scale, seed: u64, o: &Overrides) -> Result<Self> {
        let mut p = Self::preset(scale, seed);
        let mut r = o.resolver();
        r.update("flag_nx", &mut p.flag_nx)?;
        r.update("flag_ny", &mut p.flag_ny)?;
        r.update("n_dense", &mut p.n_dense)?;
        r.update("mask_frac", &mut p.mask_frac)?;
        r.update("method", &mut p.method)?;
        r.update("budget_seconds", &mut p.budget_seconds)?;
        r.update("min_slope_gap", &mut p.min_slope_gap)?;
        update_mrf(&mut r, &mut p.mrf)?;
        r.finish()?;
        Method::parse(&p.method)?;
        if p.n_dense.is_empty() || p.n_dense.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad_value("n_dense", "need a strictly increasing, non-empty ladder"));
        }
        if !(0.0..1.0).contains(&p.mask_frac) {
            return Err(bad_value("mask_frac", "must lie in [0, 1)"));
        }
        if !(p.budget_seconds > 0.0) {
            return Err(bad_value("budget_seconds", "must be positive"));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct VelocityAccuracy {
    pub method: String,
    pub n_dense: usize,
    pub masked: usize,
    /// Relative error against the true field on the masked points.
    pub rel_error: f64,
    /// Relative error against the full-kernel prediction on the masked
    /// points, when both methods ran at this size.
    pub rel_error_vs_fk: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct VelocityReport {
    pub accuracy: Vec<VelocityAccuracy>,
    pub timing: Vec<TimingRecord>,
    pub fk_slope: Option<f64>,
    pub mrf_slope: Option<f64>,
    pub checks: Vec<Check>,
    pub manifest: Manifest,
}

struct Case {
    points: mrf_core::PointCloud,
    field: Vec<Vec3>,
    observed: Vec<bool>,
    masked: Vec<usize>,
}

fn slope(timing: &[TimingRecord], method: &str) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = timing
        .iter()
        .filter(|r| r.method == method && !r.censored)
        .map(|r| (r.size as f64, r.preprocess_seconds))
        .unzip();
    loglog_slope(&xs, &ys).ok()
}

/// Densifies a synthetic cloth to each size, masks a few velocities and
/// recovers them with the normalized kernel interpolant.
pub fn run_velocity(ctx: &RunContext, p: &VelocityParams) -> Result<VelocityReport> {
    let mut run_dir = RunDir::create(&ctx.out_dir)?;
    let method = Method::parse(&p.method)?;
    let mesh = flag_mesh(p.flag_nx, p.flag_ny)?;
    let base = mesh.velocities.clone().expect("the flag carries velocities");
    let mut cfg = p.mrf;
    cfg.seed = ctx.seed;

    let case = |n: usize| -> Result<Case> {
        let dense = densify_mesh(&mesh, n, ctx.seed.wrapping_add(n as u64))?;
        let field = transfer_field(&dense, &base)?;
        let m = mask_field(&field, p.mask_frac, ctx.seed.wrapping_add(1))?;
        Ok(Case {
            points: dense.point_cloud(),
            field,
            observed: m.observed,
            masked: m.masked,
        })
    };
    let fk_preds: RefCell<Vec<(usize, Vec<Vec3>)>> = RefCell::new(Vec::new());
    let accuracy: RefCell<Vec<VelocityAccuracy>> = RefCell::new(Vec::new());
    let record = |label: &str, n: usize, c: &Case, r: &InterpolationReport| -> mrf_core::Result<()> {
        let vs_fk = match fk_preds.borrow().iter().find(|(s, _)| *s == n) {
            Some((_, fk)) if label != "fk" => Some(relative_row_error(&r.predictions, fk, &c.masked)?),
            _ => None,
        };
        let mut acc = accuracy.borrow_mut();
        // the warm-up run repeats the smallest size
        acc.retain(|a| !(a.method == label && a.n_dense == n));
        acc.push(VelocityAccuracy {
            method: label.to_string(),
            n_dense: n,
            masked: c.masked.len(),
            rel_error: r.score,
            rel_error_vs_fk: vs_fk,
        });
        Ok(())
    };
    let timed = |r: &InterpolationReport| Timed {
        preprocess_seconds: r.preprocess_seconds,
        interpolate_seconds: r.interpolate_seconds,
    };

    let mut methods: Vec<TimedMethod<'_>> = Vec::new();
    if method.fk() {
        methods.push((
            "fk".into(),
            Box::new(|n| {
                let c = case(n).map_err(core_err)?;
                let r = velocity_full_kernel(&c.points, &c.field, &c.observed, cfg.knn, cfg.tau)?;
                record("fk", n, &c, &r)?;
                let mut preds = fk_preds.borrow_mut();
                preds.retain(|(s, _)| *s != n);
                preds.push((n, r.predictions.clone()));
                Ok(timed(&r))
            }),
        ));
    }
    if method.mrf() {
        methods.push((
            "mrf".into(),
            Box::new(|n| {
                let c = case(n).map_err(core_err)?;
                let r = velocity_mrf(&c.points, &c.field, &c.observed, &cfg)?;
                record("mrf", n, &c, &r)?;
                Ok(timed(&r))
            }),
        ));
    }
    let timing = mrf_core::interp::timing_harness(
        &p.n_dense,
        &mut methods,
        Duration::from_secs_f64(p.budget_seconds),
    )?;
    drop(methods);
    let accuracy = accuracy.into_inner();
    for a in &accuracy {
        log::info!("{} n={}: rel error {:.4} (vs fk {:?})", a.method, a.n_dense, a.rel_error, a.rel_error_vs_fk);
    }

    run_dir.csv("velocity_accuracy.csv", &accuracy)?;
    write_timing_csv(run_dir.file("velocity_timing.csv")?, &timing)?;

    let fk_slope = slope(&timing, "fk");
    let mrf_slope = slope(&timing, "mrf");
    let mut checks = Vec::new();
    if method == Method::Both {
        let gap = match (fk_slope, mrf_slope) {
            (Some(f), Some(m)) => f - m,
            _ => f64::NAN,
        };
        checks.push(Check::at_least("preprocess_slope_gap", gap, p.min_slope_gap));
        let ratio = match (fk_slope, mrf_slope) {
            (Some(f), Some(m)) => m / f,
            _ => f64::NAN,
        };
        checks.push(Check::below("mrf_to_fk_slope_ratio", ratio, 0.5));
        let largest = *p.n_dense.last().expect("validated non-empty");
        let at = |m: &str| {
            timing
                .iter()
                .find(|r| r.method == m && r.size == largest && !r.censored)
                .map(|r| r.interpolate_seconds)
        };
        let faster = matches!((at("mrf"), at("fk")), (Some(m), Some(f)) if m < f);
        checks.push(Check::holds(
            "mrf_interpolation_faster_at_largest",
            faster,
            "mrf interpolation time < fk at the largest size",
        ));
    }
    let manifest = run_dir.finish("mesh-velocity", ctx, p, &checks)?;
    Ok(VelocityReport {
        accuracy,
        timing,
        fk_slope,
        mrf_slope,
        checks,
        manifest,
    })
}

fn core_err(e: crate::error::CliError) -> mrf_core::Error {
    match e {
        crate::error::CliError::Core(c) => c,
        other => mrf_core::Error::InvalidParameter {
            name: "mesh",
            reason: other.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_specs() {
        assert_eq!(load_mesh_spec("torus:10x8", 2.0, 0.8).unwrap().num_vertices(), 80);
        let flag = load_mesh_spec("flag:6x4", 2.0, 0.8).unwrap();
        assert!(flag.velocities.is_some());
        assert!(load_mesh_spec("torus:10", 2.0, 0.8).is_err());
        assert!(load_mesh_spec("/nonexistent/mesh.obj", 2.0, 0.8).is_err());
    }

    #[test]
    fn obj_meshes_load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tet.obj");
        std::fs::write(&path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n").unwrap();
        let mesh = load_mesh_spec(path.to_str().unwrap(), 2.0, 0.8).unwrap();
        assert_eq!((mesh.num_vertices(), mesh.faces.len()), (4, 4));
    }

    #[test]
    fn presets_and_validation() {
        let p = NormalsParams::resolve(Scale::Desk, 0, &Overrides::default()).unwrap();
        assert_eq!((p.mask_frac, p.mrf.tau, p.mrf.knn, p.mrf.n_rf), (0.8, 20.0, 16, 256));
        let v = VelocityParams::resolve(Scale::Desk, 0, &Overrides::default()).unwrap();
        assert_eq!(v.n_dense, vec![500, 1000, 2000, 4000]);
        assert_eq!(v.mask_frac, 0.05);
        for bad in ["method=all", "mask_frac=1", "n_dense=10,5"] {
            let o = Overrides::parse(bad).unwrap();
            assert!(VelocityParams::resolve(Scale::Desk, 0, &o).is_err(), "{bad}");
        }
    }

    #[test]
    fn small_normals_run() {
        let dir = tempfile::tempdir().unwrap();
        let o = Overrides::parse(
            "mesh=torus:12x8\nnum_walks=200\nnum_starts=30\nepochs=2\nmin_dense=150\nn_rf=64\ncandidates_per_start=40",
        )
        .unwrap();
        let p = NormalsParams::resolve(Scale::Desk, 0, &o).unwrap();
        let rep = run_normals(&RunContext::new(dir.path()), &p).unwrap();
        assert_eq!(rep.accuracy.len(), 2);
        assert_eq!(rep.accuracy[0].masked, 76);
        assert_eq!(rep.checks.len(), 1);
        let preds = std::fs::read_to_string(dir.path().join("normals_predictions.csv")).unwrap();
        assert_eq!(preds.lines().count(), 1 + 2 * 96);
        assert!(dir.path().join("normals_report.json").exists());
    }

    #[test]
    fn small_velocity_run() {
        let dir = tempfile::tempdir().unwrap();
        let o = Overrides::parse(
            "flag_nx=6\nflag_ny=4\nn_dense=60,120\nnum_walks=100\nnum_starts=20\nepochs=2\nn_rf=32\ncandidates_per_start=20\nknn=8",
        )
        .unwrap();
        let p = VelocityParams::resolve(Scale::Desk, 0, &o).unwrap();
        let rep = run_velocity(&RunContext::new(dir.path()), &p).unwrap();
        assert_eq!(rep.timing.len(), 4);
        assert_eq!(rep.accuracy.len(), 4);
        let mrf: Vec<_> = rep.accuracy.iter().filter(|a| a.method == "mrf").collect();
        assert!(mrf.iter().all(|a| a.rel_error_vs_fk.is_some()));
        assert_eq!(rep.checks.len(), 3);
        assert!(rep.fk_slope.is_some());
    }
}
