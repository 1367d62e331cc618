//! Signature vectors of the heat kernel on a grid or a point cloud.

use mrf_core::graph::{build_grid_graph, build_knn_graph};
use mrf_core::grf::{deconvolve_alpha, heat_alpha, run_grf, write_signatures_csv, WalkConfig, DEFAULT_MAX_TERMS};
use mrf_core::{Bandwidth, PointCloud};
use serde::Serialize;

use crate::config::{Overrides, RunContext, Scale};
use crate::error::{bad_value, Result};
use crate::output::{Manifest, RunDir};

#[derive(Debug, Clone, Serialize)]
pub struct GrfDumpParams {
    /// `grid` or a path to a point-cloud CSV with columns `x0,x1,...`.
    pub source: String,
    pub grid_n: usize,
    pub grid_d: u32,
    /// kNN size for point clouds.
    pub knn: usize,
    /// Heat-kernel time on the normalized adjacency.
    pub t: f64,
    pub p_halt: f64,
    pub walks: usize,
    /// Start nodes; empty means every node.
    pub starts: Vec<usize>,
}

impl GrfDumpParams {
    pub fn preset(_scale: Scale) -> Self {
        Self {
            source: "grid".into(),
            grid_n: 11,
            grid_d: 2,
            knn: 8,
            t: 1.0,
            p_halt: 0.1,
            walks: 1000,
            starts: Vec::new(),
        }
    }

    pub fn resolve(scale: Scale, o: &Overrides) -> Result<Self> {
        let mut p = Self::preset(scale);
        let mut r = o.resolver();
        r.update("source", &mut p.source)?;
        r.update("grid_n", &mut p.grid_n)?;
        r.update("grid_d", &mut p.grid_d)?;
        r.update("knn", &mut p.knn)?;
        r.update("t", &mut p.t)?;
        r.update("p_halt", &mut p.p_halt)?;
        r.update("walks", &mut p.walks)?;
        r.update("starts", &mut p.starts)?;
        r.finish()?;
        if !(p.t > 0.0) {
            return Err(bad_value("t", "must be positive"));
        }
        Ok(p)
    }
}

/// Writes `signatures.csv` with `start_node,node,value` rows.
pub fn run(ctx: &RunContext, p: &GrfDumpParams) -> Result<Manifest> {
    let mut run_dir = RunDir::create(&ctx.out_dir)?;
    let graph = if p.source == "grid" {
        let grid = build_grid_graph(p.grid_n, p.grid_d)?;
        grid.graph().scaled(1.0 / (2 * p.grid_d) as f64)?
    } else {
        let cloud = PointCloud::load_csv(&p.source)?;
        build_knn_graph(&cloud, p.knn, Bandwidth::MedianEdge)?.graph.symmetric_normalized()?
    };
    let starts: Vec<usize> = if p.starts.is_empty() {
        (0..graph.num_nodes()).collect()
    } else {
        p.starts.clone()
    };
    let f = deconvolve_alpha(&heat_alpha(p.t, DEFAULT_MAX_TERMS)?)?;
    let cfg = WalkConfig::new(p.p_halt, p.walks, ctx.seed)?;
    let sigs = run_grf(&graph, &f, &cfg, &starts)?;
    write_signatures_csv(run_dir.file("signatures.csv")?, &sigs)?;
    run_dir.finish("grf-dump", ctx, p, &[])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_and_cloud_sources() {
        let dir = tempfile::tempdir().unwrap();
        let o = Overrides::parse("grid_n=5\nwalks=50\nstarts=0,12").unwrap();
        let p = GrfDumpParams::resolve(Scale::Desk, &o).unwrap();
        run(&RunContext::new(dir.path()), &p).unwrap();
        let text = std::fs::read_to_string(dir.path().join("signatures.csv")).unwrap();
        let starts: std::collections::BTreeSet<&str> =
            text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(starts.into_iter().collect::<Vec<_>>(), vec!["0", "12"]);

        let cloud = dir.path().join("cloud.csv");
        let pts = mrf_core::manifolds::sample_surface(&mrf_core::SurfaceSpec::sphere(), 60).unwrap();
        pts.save_csv(&cloud).unwrap();
        let mut o = Overrides::default();
        o.set("source", cloud.to_str().unwrap());
        o.set("walks", "20");
        let p = GrfDumpParams::resolve(Scale::Desk, &o).unwrap();
        let out = dir.path().join("cloud_run");
        run(&RunContext::new(&out), &p).unwrap();
        assert!(out.join("signatures.csv").exists());
    }
}
