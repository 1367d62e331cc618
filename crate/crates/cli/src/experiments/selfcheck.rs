//! Runs every numerical self-check and writes one table of results.

use serde::Serialize;

use crate::checks;
use crate::config::{Overrides, RunContext, Scale};
use crate::error::Result;
use crate::output::{Check, Manifest, RunDir};

#[derive(Debug, Clone, Serialize)]
pub struct SelfcheckParams {
    /// The walk-based unbiasedness check takes a minute or two.
    pub include_grf: bool,
    pub sphere_n: usize,
    pub sphere_knn: usize,
    pub sphere_t: f64,
    pub sphere_lmax: usize,
    pub sphere_r2: f64,
}

impl SelfcheckParams {
    pub fn preset(_scale: Scale) -> Self {
        Self {
            include_grf: true,
            sphere_n: 1000,
            sphere_knn: 8,
            sphere_t: 0.25,
            sphere_lmax: 50,
            sphere_r2: 0.95,
        }
    }

    pub fn resolve(scale: Scale, o: &Overrides) -> Result<Self> {
        let mut p = Self::preset(scale);
        let mut r = o.resolver();
        r.update("include_grf", &mut p.include_grf)?;
        r.update("sphere_n", &mut p.sphere_n)?;
        r.update("sphere_knn", &mut p.sphere_knn)?;
        r.update("sphere_t", &mut p.sphere_t)?;
        r.update("sphere_lmax", &mut p.sphere_lmax)?;
        r.update("sphere_r2", &mut p.sphere_r2)?;
        r.finish()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Serialize)]
struct Row<'a> {
    group: &'a str,
    name: &'a str,
    measured: f64,
    tolerance: &'a str,
    passed: bool,
}

#[derive(Debug, Clone)]
pub struct SelfcheckReport {
    /// `(group, check)` pairs in run order.
    pub checks: Vec<(String, Check)>,
    pub manifest: Manifest,
}

pub fn run(ctx: &RunContext, p: &SelfcheckParams) -> Result<SelfcheckReport> {
    let mut run_dir = RunDir::create(&ctx.out_dir)?;
    let mut groups: Vec<(&str, Vec<Check>)> = vec![
        ("deconvolution", checks::deconvolution_identity()?),
        ("laplacian_rate", checks::laplacian_rate()?),
        ("periodized_limit", checks::periodized_limit()?),
        ("gaussian_quadrature", checks::gaussian_quadrature(ctx.seed)?),
        ("midpoint_identity", checks::midpoint_identity(ctx.seed)?),
        ("kronecker", checks::kronecker_tensorization()?),
        ("sphere_series", checks::sphere_series()?),
        ("alignment", checks::alignment_properties(ctx.seed)?),
    ];
    let sphere = checks::sphere_consistency(p.sphere_n, p.sphere_knn, p.sphere_t, p.sphere_lmax)?;
    groups.push((
        "sphere_consistency",
        vec![Check::at_least("sphere_graph_vs_analytic_r2", sphere.r2, p.sphere_r2)],
    ));
    if p.include_grf {
        groups.push(("grf_unbiasedness", checks::grf_unbiasedness(ctx.seed)?));
    }

    let rows: Vec<Row<'_>> = groups
        .iter()
        .flat_map(|(g, cs)| {
            cs.iter().map(move |c| Row {
                group: g,
                name: &c.name,
                measured: c.measured,
                tolerance: &c.tolerance,
                passed: c.passed,
            })
        })
        .collect();
    for r in &rows {
        log::info!(
            "{} {}: {:e} ({})",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.measured,
            r.tolerance
        );
    }
    run_dir.csv("selfcheck.csv", &rows)?;
    let flat: Vec<Check> = groups.iter().flat_map(|(_, cs)| cs.iter().cloned()).collect();
    let manifest = run_dir.finish("selfcheck", ctx, p, &flat)?;
    let checks = groups
        .into_iter()
        .flat_map(|(g, cs)| cs.into_iter().map(move |c| (g.to_string(), c)))
        .collect();
    Ok(SelfcheckReport { checks, manifest })
}
