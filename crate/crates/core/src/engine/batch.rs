use std::sync::Arc;

use rayon::prelude::*;
use rayon::ThreadPoolBuilder;

use super::{run_session_with, EngineError, SessionConfig, SessionOutcome};
use crate::router::TemplateLibrary;

/// Runs independent sessions on at most `parallelism` worker threads.
///
/// Results come back in input order and each is a pure function of its own
/// config, so the output does not depend on `parallelism`. A failing
/// session is reported in its slot; the rest of the batch still runs.
pub fn run_batch(
    cfgs: &[SessionConfig],
    parallelism: usize,
    library: Arc<TemplateLibrary>,
) -> Vec<Result<SessionOutcome, EngineError>> {
    let run = |cfg: &SessionConfig| run_session_with(cfg, Arc::clone(&library));
    if parallelism <= 1 {
        return cfgs.iter().map(run).collect();
    }
    match ThreadPoolBuilder::new().num_threads(parallelism).build() {
        Ok(pool) => pool.install(|| cfgs.par_iter().map(run).collect()),
        Err(e) => {
            tracing::warn!(error = %e, "thread pool unavailable, running sequentially");
            cfgs.iter().map(run).collect()
        }
    }
}
