//! Experiment drivers. Each takes a [`RunContext`](crate::config::RunContext)
//! and resolved parameters, writes CSV tables plus a manifest into the run
//! directory, and returns its results for programmatic checks.

pub mod gaussian;
pub mod grf_dump;
pub mod manifold;
pub mod mesh;
pub mod selfcheck;

use mrf_core::MrfConfig;

use crate::config::Resolver;
use crate::error::Result;

/// Reads every [`MrfConfig`] field except the seed, which follows the run.
pub(crate) fn update_mrf(r: &mut Resolver<'_>, cfg: &mut MrfConfig) -> Result<()> {
    r.update("knn", &mut cfg.knn)?;
    r.update("tau", &mut cfg.tau)?;
    r.update("p_halt", &mut cfg.p_halt)?;
    r.update("num_walks", &mut cfg.num_walks)?;
    r.update("num_starts", &mut cfg.num_starts)?;
    r.update("candidates_per_start", &mut cfg.candidates_per_start)?;
    r.update("keep_threshold", &mut cfg.keep_threshold)?;
    r.update("retain_prob", &mut cfg.retain_prob)?;
    r.update("f_cutoff", &mut cfg.f_cutoff)?;
    r.update("n_rf", &mut cfg.n_rf)?;
    r.update("min_dense", &mut cfg.min_dense)?;
    r.update("learning_rate", &mut cfg.learning_rate)?;
    r.update("batch_size", &mut cfg.batch_size)?;
    r.update("epochs", &mut cfg.epochs)?;
    r.update("eps", &mut cfg.eps)?;
    r.update("val_split", &mut cfg.val_split)?;
    Ok(())
}
