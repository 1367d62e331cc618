//! Grid signature fields converging to the Gaussian feature map as the grid
//! refines.

use mrf_core::graph::build_grid_graph;
use mrf_core::grf::{deconvolve_alpha, estimate_kernel, heat_alpha_scaled, run_grf, WalkConfig, DEFAULT_MAX_TERMS};
use mrf_core::mrf::{grid_constant, relative_mse, rescale_signatures};
use mrf_core::oracles::{g_sigma_peak, periodized_gaussian};
use serde::Serialize;

use crate::config::{Overrides, RunContext, Scale};
use crate::error::{bad_value, CliError, Result};
use crate::output::{Check, Manifest, RunDir};

#[derive(Debug, Clone, Serialize)]
pub struct GaussianParams {
    pub d: u32,
    pub sigma: f64,
    pub p_halt: f64,
    pub walks: usize,
    pub reps: usize,
    pub ns: Vec<usize>,
    /// Periodic images per axis in the Gaussian targets.
    pub image_cutoff: usize,
    /// Refuse runs whose expected walk-step count exceeds this.
    pub max_steps: f64,
}

impl GaussianParams {
    pub fn preset(scale: Scale) -> Self {
        match scale {
            Scale::Desk => Self {
                d: 2,
                sigma: 0.2,
                p_halt: 0.005,
                walks: 20_000,
                reps: 5,
                ns: vec![5, 15, 25],
                image_cutoff: 3,
                max_steps: 1e11,
            },
            Scale::Paper => Self {
                walks: 100_000,
                reps: 30,
                ns: (5..=105).step_by(10).collect(),
                max_steps: 1e15,
                ..Self::preset(Scale::Desk)
            },
        }
    }

    pub fn resolve(scale: Scale, o: &Overrides) -> Result<Self> {
        let mut p = Self::preset(scale);
        let mut r = o.resolver();
        r.update("d", &mut p.d)?;
        r.update("sigma", &mut p.sigma)?;
        r.update("p_halt", &mut p.p_halt)?;
        r.update("walks", &mut p.walks)?;
        r.update("reps", &mut p.reps)?;
        r.update("ns", &mut p.ns)?;
        r.update("image_cutoff", &mut p.image_cutoff)?;
        r.update("max_steps", &mut p.max_steps)?;
        r.finish()?;
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.ns.is_empty() || self.ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad_value("ns", "need a strictly increasing, non-empty ladder"));
        }
        if self.reps < 1 {
            return Err(bad_value("reps", "need at least one repetition"));
        }
        if !(self.sigma > 0.0) {
            return Err(bad_value("sigma", "must be positive"));
        }
        Ok(())
    }

    /// Expected walk steps: `reps * (nodes + 1) * walks / p_halt` per rung.
    pub fn estimated_steps(&self) -> f64 {
        self.ns
            .iter()
            .map(|&n| self.reps as f64 * ((n as f64).powi(self.d as i32) + 1.0) * self.walks as f64 / self.p_halt)
            .sum()
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub d: u32,
    pub sigma: f64,
    pub walks: usize,
    pub reps: usize,
    pub field_rel_mse: f64,
    pub kernel_rel_mse: f64,
}

#[derive(Debug, Clone)]
pub struct GaussianReport {
    pub rows: Vec<ConvergenceRow>,
    pub checks: Vec<Check>,
    pub manifest: Manifest,
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// For every grid side `n`: signatures of the heat kernel `exp(-(sigma^2/2) L_n)`
/// from the centre node (one walk set) and from every node (an independent
/// set), rescaled by `c_{d,sigma,n}`. The centre field is compared with the
/// periodized Gaussian feature, weighted by the quadrature factor
/// `n^{-d/2}`; the induced kernel row with the periodized Gaussian kernel.
pub fn run(ctx: &RunContext, p: &GaussianParams) -> Result<GaussianReport> {
    let estimate = p.estimated_steps();
    if estimate > p.max_steps {
        return Err(CliError::Budget {
            estimate,
            limit: p.max_steps,
        });
    }
    let mut run_dir = RunDir::create(&ctx.out_dir)?;
    let dims = p.d as usize;
    let mut rows = Vec::new();
    let mut dump = csv::Writer::from_writer(run_dir.file("center_field.csv")?);
    let mut header = vec!["n".to_string(), "node".to_string()];
    header.extend((0..dims).map(|j| format!("x{j}")));
    header.extend(["psi", "target", "residual"].map(String::from));
    dump.write_record(&header)?;

    for &n in &p.ns {
        let grid = build_grid_graph(n, p.d)?;
        let nodes = grid.num_nodes();
        let w = grid.graph().scaled(1.0 / (2 * dims) as f64)?;
        // exp(-t L_n) = e^{-c} exp(c T) with T the neighbour average
        let c = p.d as f64 * p.sigma * p.sigma * (n * n) as f64;
        let f = deconvolve_alpha(&heat_alpha_scaled(c, DEFAULT_MAX_TERMS, -c)?)?;
        let centre = grid.center();
        let xc = grid.coords(centre);
        let all: Vec<usize> = (0..nodes).collect();

        let peak = g_sigma_peak(p.sigma, dims);
        let weight = (n as f64).powf(-(dims as f64) / 2.0);
        let field_truth: Vec<f64> = all
            .iter()
            .map(|&j| {
                let v = periodized_gaussian(&xc, &grid.coords(j), p.sigma / 2f64.sqrt(), p.image_cutoff)?;
                Ok(peak * v * weight)
            })
            .collect::<mrf_core::Result<_>>()?;
        let kernel_truth: Vec<f64> = all
            .iter()
            .map(|&j| periodized_gaussian(&xc, &grid.coords(j), p.sigma, p.image_cutoff))
            .collect::<mrf_core::Result<_>>()?;

        let cst = grid_constant(p.d, p.sigma, n);
        let mut fields = Vec::with_capacity(p.reps);
        let mut kernels = Vec::with_capacity(p.reps);
        for rep in 0..p.reps {
            let seed = ctx.seed.wrapping_add(((n as u64) << 32) | rep as u64);
            let cfg = WalkConfig::new(p.p_halt, p.walks, seed)?;
            let centre_sig = run_grf(&w, &f, &cfg, &[centre])?;
            let others = run_grf(&w, &f, &cfg.independent(), &all)?;
            let psi = rescale_signatures(&centre_sig, p.d, p.sigma, n);
            let field = psi[0].to_dense();
            let row = estimate_kernel(&centre_sig, &others)?;
            kernels.push(row.as_slice().iter().map(|v| v * cst * cst).collect::<Vec<f64>>());
            if rep == 0 {
                for j in 0..nodes {
                    let mut rec = vec![n.to_string(), j.to_string()];
                    rec.extend(grid.coords(j).iter().map(|x| x.to_string()));
                    rec.push(field[j].to_string());
                    rec.push(field_truth[j].to_string());
                    rec.push((field[j] - field_truth[j]).to_string());
                    dump.write_record(&rec)?;
                }
            }
            fields.push(field);
        }
        let row = ConvergenceRow {
            n,
            d: p.d,
            sigma: p.sigma,
            walks: p.walks,
            reps: p.reps,
            field_rel_mse: relative_mse(&fields, &field_truth)?,
            kernel_rel_mse: relative_mse(&kernels, &kernel_truth)?,
        };
        log::info!(
            "n={n}: field rel-MSE {:.4e}, kernel rel-MSE {:.4e}",
            row.field_rel_mse,
            row.kernel_rel_mse
        );
        rows.push(row);
    }
    dump.flush()?;
    drop(dump);
    run_dir.csv("gaussian_convergence.csv", &rows)?;

    let field: Vec<f64> = rows.iter().map(|r| r.field_rel_mse).collect();
    let kernel: Vec<f64> = rows.iter().map(|r| r.kernel_rel_mse).collect();
    let checks = vec![
        Check::holds(
            "field_rel_mse_decreasing",
            strictly_decreasing(&field),
            "strictly decreasing in n",
        ),
        Check::holds(
            "kernel_rel_mse_decreasing",
            strictly_decreasing(&kernel),
            "strictly decreasing in n",
        ),
    ];
    let manifest = run_dir.finish("gaussian-convergence", ctx, p, &checks)?;
    Ok(GaussianReport { rows, checks, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_differ_only_in_budget() {
        let d = GaussianParams::preset(Scale::Desk);
        let p = GaussianParams::preset(Scale::Paper);
        assert_eq!((d.d, d.sigma, d.p_halt), (p.d, p.sigma, p.p_halt));
        assert_eq!(p.ns.len(), 11);
        assert_eq!(*p.ns.last().unwrap(), 105);
    }

    #[test]
    fn budget_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let o = Overrides::parse("max_steps=1000").unwrap();
        let p = GaussianParams::resolve(Scale::Desk, &o).unwrap();
        let err = run(&RunContext::new(dir.path()), &p).unwrap_err();
        assert!(matches!(err, CliError::Budget { .. }));
    }

    #[test]
    fn ladder_must_increase() {
        let o = Overrides::parse("ns=5,5").unwrap();
        assert!(GaussianParams::resolve(Scale::Desk, &o).is_err());
    }

    #[test]
    fn tiny_run_writes_tables() {
        let dir = tempfile::tempdir().unwrap();
        let o = Overrides::parse("ns=3,5\nwalks=200\nreps=2\np_halt=0.05").unwrap();
        let p = GaussianParams::resolve(Scale::Desk, &o).unwrap();
        let rep = run(&RunContext::new(dir.path()), &p).unwrap();
        assert_eq!(rep.rows.len(), 2);
        let text = std::fs::read_to_string(dir.path().join("center_field.csv")).unwrap();
        assert_eq!(text.lines().next().unwrap(), "n,node,x0,x1,psi,target,residual");
        assert_eq!(text.lines().count(), 1 + 9 + 25);
    }
}
