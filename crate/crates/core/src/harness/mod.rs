//! Evaluators, synthetic benchmarks, run-log persistence and benchmark suites.

pub mod bench;
pub mod evaluator;
pub mod runlog;
pub mod synth;

pub use bench::{bench, BenchReport, CellMetrics, Scorer, Seeds, SuiteConfig};
pub use evaluator::{CommandEvaluator, Evaluator, TableEvaluator};
pub use runlog::{parse_runlog, read_runlog, render_runlog, write_runlog};
pub use synth::{synth_space, SyntheticSpec};

use std::time::Duration;

use crate::error::Result;
use crate::space::{Dataset, ParameterSpace, Sample};

/// How samples are evaluated.
#[derive(Debug, Clone)]
pub enum EvaluatorBinding {
    Table(Dataset),
    Command { template: String, timeout: Option<Duration>, retries: usize },
}

impl EvaluatorBinding {
    pub fn into_evaluator(self, objectives: &[String]) -> Result<Box<dyn Evaluator>> {
        Ok(match self {
            EvaluatorBinding::Table(d) => Box::new(TableEvaluator::new(d, objectives)?),
            EvaluatorBinding::Command { template, timeout, retries } => {
                Box::new(CommandEvaluator { command: template, objectives: objectives.to_vec(), timeout, retries })
            }
        })
    }
}

/// One-off evaluation through a binding.
pub fn external_evaluate(
    binding: &EvaluatorBinding,
    objectives: &[String],
    space: &ParameterSpace,
    sample: &Sample,
) -> Result<Vec<f64>> {
    space.validate(sample)?;
    binding.clone().into_evaluator(objectives)?.evaluate(space, sample)
}
