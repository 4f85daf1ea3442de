//! Independent scenarios run side by side.
//!
//! Each run owns its RNG streams and log buffer, so the parallel and sequential
//! paths return identical results in identical order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::Result;

use super::config::ScenarioConfig;
use super::metrics::{steady_state_rmse, ErrorReport};
use super::run::{run, RunLog};

/// Run a scenario and reduce it to its steady-state report.
pub fn evaluate(config: &ScenarioConfig) -> Result<ErrorReport> {
    let log = run(config)?;
    steady_state_rmse(&log, log.transient)
}

pub fn run_batch_sequential(configs: &[ScenarioConfig]) -> Vec<Result<RunLog>> {
    configs.iter().map(run).collect()
}

pub fn evaluate_batch_sequential(configs: &[ScenarioConfig]) -> Vec<Result<ErrorReport>> {
    configs.iter().map(evaluate).collect()
}

/// Uses the rayon pool when the `parallel` feature is on.
pub fn run_batch(configs: &[ScenarioConfig]) -> Vec<Result<RunLog>> {
    #[cfg(feature = "parallel")]
    {
        configs.par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_sequential(configs)
    }
}

pub fn evaluate_batch(configs: &[ScenarioConfig]) -> Vec<Result<ErrorReport>> {
    #[cfg(feature = "parallel")]
    {
        configs.par_iter().map(evaluate).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        evaluate_batch_sequential(configs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::MINIMAL;

    #[test]
    fn parallel_matches_sequential() {
        let base = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        let configs: Vec<ScenarioConfig> = (0..4)
            .map(|i| {
                let mut c = base.clone();
                c.seed = i;
                c.disturbance.noise_std = [0.001, 0.0001];
                c
            })
            .collect();
        assert_eq!(run_batch(&configs), run_batch_sequential(&configs));
        assert_eq!(evaluate_batch(&configs), evaluate_batch_sequential(&configs));
    }
}
