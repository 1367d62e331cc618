use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mrf_cli::experiments::{gaussian, grf_dump, manifold, mesh, selfcheck};
use mrf_cli::{all_passed, with_threads, Check, CliError, Overrides, Result, RunContext, Scale};

/// Manifold random features experiments.
#[derive(Debug, Parser)]
#[command(name = "mrf", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Base seed; every random choice derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Parameter preset: `desk` or `paper`.
    #[arg(long, global = true)]
    scale: Option<Scale>,
    /// Run directory; defaults to `runs/<subcommand>`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Flat `key=value` file, such as the `config.txt` of an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` parameter; repeatable, wins over the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Grid signature fields converging to the Gaussian feature map.
    GaussianConvergence {
        #[arg(long)]
        p_halt: Option<f64>,
        #[arg(long)]
        walks: Option<usize>,
    },
    /// Train the surrogate on a surface and compare with the spectral kernel.
    ManifoldSurrogate {
        /// sphere, ellipsoid, torus or mobius.
        #[arg(long)]
        surface: Option<String>,
        #[arg(long)]
        n_points: Option<usize>,
        #[arg(long)]
        p_halt: Option<f64>,
        #[arg(long)]
        walks: Option<usize>,
    },
    /// Vertex normal interpolation on a mesh.
    MeshNormals {
        /// `torus:NUxNV`, `flag:NXxNY` or an OBJ path.
        #[arg(long)]
        mesh: Option<String>,
        #[arg(long)]
        mask_frac: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        /// fk, mrf or both.
        #[arg(long)]
        method: Option<String>,
    },
    /// Velocity interpolation on densified cloth across sizes.
    MeshVelocity {
        #[arg(long)]
        mask_frac: Option<f64>,
        /// Comma-separated size ladder.
        #[arg(long)]
        n_dense: Option<String>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        method: Option<String>,
    },
    /// Numerical self-checks; exits nonzero if any fails.
    Selfcheck,
    /// Dump GRF signature vectors as CSV.
    GrfDump {
        #[arg(long)]
        p_halt: Option<f64>,
        #[arg(long)]
        walks: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GaussianConvergence { .. } => "gaussian-convergence",
            Command::ManifoldSurrogate { .. } => "manifold-surrogate",
            Command::MeshNormals { .. } => "mesh-normals",
            Command::MeshVelocity { .. } => "mesh-velocity",
            Command::Selfcheck => "selfcheck",
            Command::GrfDump { .. } => "grf-dump",
        }
    }

    /// Subcommand flags as parameter overrides.
    fn flags(&self) -> Vec<(&'static str, Option<String>)> {
        fn s<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(ToString::to_string)
        }
        match self {
            Command::GaussianConvergence { p_halt, walks } => vec![("p_halt", s(p_halt)), ("walks", s(walks))],
            Command::ManifoldSurrogate {
                surface,
                n_points,
                p_halt,
                walks,
            } => vec![
                ("surface", s(surface)),
                ("n_points", s(n_points)),
                ("p_halt", s(p_halt)),
                ("num_walks", s(walks)),
            ],
            Command::MeshNormals {
                mesh,
                mask_frac,
                tau,
                method,
            } => vec![
                ("mesh", s(mesh)),
                ("mask_frac", s(mask_frac)),
                ("tau", s(tau)),
                ("method", s(method)),
            ],
            Command::MeshVelocity {
                mask_frac,
                n_dense,
                tau,
                method,
            } => vec![
                ("mask_frac", s(mask_frac)),
                ("n_dense", s(n_dense)),
                ("tau", s(tau)),
                ("method", s(method)),
            ],
            Command::Selfcheck => Vec::new(),
            Command::GrfDump { p_halt, walks } => vec![("p_halt", s(p_halt)), ("walks", s(walks))],
        }
    }
}

fn parse_global<T: std::str::FromStr>(key: &str, raw: Option<String>) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    raw.map(|v| {
        v.parse().map_err(|e: T::Err| CliError::BadValue {
            key: key.to_string(),
            message: e.to_string(),
        })
    })
    .transpose()
}

fn execute(cli: Cli) -> Result<Vec<Check>> {
    let mut o = match &cli.global.config {
        Some(path) => Overrides::load(path)?,
        None => Overrides::default(),
    };
    for a in &cli.global.set {
        o.set_assignment(a)?;
    }
    for (key, value) in cli.command.flags() {
        if let Some(v) = value {
            o.set(key, v);
        }
    }
    let file_scale = parse_global::<Scale>("scale", o.take("scale"))?;
    let file_seed = parse_global::<u64>("seed", o.take("seed"))?;
    let file_threads = parse_global::<usize>("threads", o.take("threads"))?;
    let out_dir = cli
        .global
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(cli.command.name()));
    let mut ctx = RunContext::new(out_dir)
        .with_scale(cli.global.scale.or(file_scale).unwrap_or(Scale::Desk))
        .with_seed(cli.global.seed.or(file_seed).unwrap_or(0));
    ctx.threads = cli.global.threads.or(file_threads).unwrap_or(1);
    log::info!(
        "{} (scale {}, seed {}, threads {}) -> {}",
        cli.command.name(),
        ctx.scale,
        ctx.seed,
        ctx.threads,
        ctx.out_dir.display()
    );

    let (scale, seed) = (ctx.scale, ctx.seed);
    let checks = with_threads(ctx.threads, || -> Result<Vec<Check>> {
        Ok(match &cli.command {
            Command::GaussianConvergence { .. } => {
                gaussian::run(&ctx, &gaussian::GaussianParams::resolve(scale, &o)?)?.checks
            }
            Command::ManifoldSurrogate { .. } => {
                manifold::run(&ctx, &manifold::ManifoldParams::resolve(scale, seed, &o)?)?.checks
            }
            Command::MeshNormals { .. } => {
                mesh::run_normals(&ctx, &mesh::NormalsParams::resolve(scale, seed, &o)?)?.checks
            }
            Command::MeshVelocity { .. } => {
                mesh::run_velocity(&ctx, &mesh::VelocityParams::resolve(scale, seed, &o)?)?.checks
            }
            Command::Selfcheck => selfcheck::run(&ctx, &selfcheck::SelfcheckParams::resolve(scale, &o)?)?
                .checks
                .into_iter()
                .map(|(_, c)| c)
                .collect(),
            Command::GrfDump { .. } => {
                grf_dump::run(&ctx, &grf_dump::GrfDumpParams::resolve(scale, &o)?)?;
                Vec::new()
            }
        })
    })??;
    Ok(checks)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(checks) => {
            for c in &checks {
                println!(
                    "{} {} = {:e} ({})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.tolerance
                );
            }
            if all_passed(&checks) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
