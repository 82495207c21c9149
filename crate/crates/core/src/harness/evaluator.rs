use std::io::Read;
use std::process::{Command, Stdio};
use std::time::Duration;

use wait_timeout::ChildExt;

use crate::error::{Error, Result};
use crate::space::{Dataset, ParameterSpace, Sample};

/// Produces objective values for one sample, in the configured objective order.
///
/// Implementations must be thread-safe: a batch may be evaluated concurrently.
pub trait Evaluator: Sync {
    fn evaluate(&self, space: &ParameterSpace, sample: &Sample) -> Result<Vec<f64>>;
}

/// Looks samples up in a pre-computed dataset.
#[derive(Debug, Clone)]
pub struct TableEvaluator {
    dataset: Dataset,
    columns: Vec<usize>,
}

impl TableEvaluator {
    pub fn new(dataset: Dataset, objectives: &[String]) -> Result<Self> {
        let columns = objectives
            .iter()
            .map(|o| dataset.objective_index(o).map_err(|_| Error::Config(format!("table has no objective `{}`", o))))
            .collect::<Result<Vec<_>>>()?;
        Ok(TableEvaluator { dataset, columns })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }
}

impl Evaluator for TableEvaluator {
    fn evaluate(&self, _: &ParameterSpace, sample: &Sample) -> Result<Vec<f64>> {
        let row = self
            .dataset
            .get(sample)
            .ok_or_else(|| Error::Evaluation(format!("sample {} is not in the table", sample)))?;
        Ok(self.columns.iter().map(|&j| row[j]).collect())
    }
}

/// Runs a shell command per sample.
///
/// Every feature is passed as `FIST_PARAM_<NAME>=<option label>` where `NAME` is
/// the feature name upper-cased with non-alphanumerics replaced by `_`. The
/// command prints `objective=value` lines on stdout; other lines are ignored.
#[derive(Debug, Clone)]
pub struct CommandEvaluator {
    pub command: String,
    pub objectives: Vec<String>,
    pub timeout: Option<Duration>,
    /// Extra attempts after a failure.
    pub retries: usize,
}

pub fn env_var_name(feature: &str) -> String {
    let tail: String =
        feature.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' }).collect();
    format!("FIST_PARAM_{}", tail)
}

impl CommandEvaluator {
    pub fn new(command: impl Into<String>, objectives: Vec<String>) -> Self {
        CommandEvaluator { command: command.into(), objectives, timeout: None, retries: 0 }
    }

    fn attempt(&self, space: &ParameterSpace, sample: &Sample) -> Result<Vec<f64>> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(&self.command).stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::null());
        for (f, label) in space.features().iter().zip(space.labels(sample)) {
            cmd.env(env_var_name(&f.name), label);
        }
        let mut child =
            cmd.spawn().map_err(|e| Error::Evaluation(format!("cannot start `{}`: {}", self.command, e)))?;
        // drain stdout on a helper thread so a chatty command cannot block on a full pipe
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut buf = String::new();
            stdout.read_to_string(&mut buf).map(|_| buf)
        });
        let status = match self.timeout {
            Some(t) => match child.wait_timeout(t)? {
                Some(st) => st,
                None => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::Evaluation(format!("{} timed out after {:?}", sample, t)));
                }
            },
            None => child.wait()?,
        };
        let out = reader
            .join()
            .map_err(|_| Error::Evaluation("stdout reader panicked".into()))?
            .map_err(|e| Error::Evaluation(format!("reading stdout: {}", e)))?;
        if !status.success() {
            return Err(Error::Evaluation(format!("{} exited with {}", sample, status)));
        }
        parse_objective_lines(&out, &self.objectives)
    }
}

/// Extracts the named objectives from `name=value` lines; the last occurrence wins.
pub fn parse_objective_lines(text: &str, objectives: &[String]) -> Result<Vec<f64>> {
    let mut values = vec![None; objectives.len()];
    for line in text.lines() {
        let Some((k, v)) = line.split_once('=') else { continue };
        if let Some(j) = objectives.iter().position(|o| o == k.trim()) {
            let x: f64 = v.trim().parse().map_err(|_| {
                Error::Evaluation(format!("objective `{}` has non-numeric value `{}`", k.trim(), v.trim()))
            })?;
            if !x.is_finite() {
                return Err(Error::Evaluation(format!("objective `{}` is not finite", k.trim())));
            }
            values[j] = Some(x);
        }
    }
    values
        .into_iter()
        .zip(objectives)
        .map(|(v, o)| v.ok_or_else(|| Error::Evaluation(format!("command did not report `{}`", o))))
        .collect()
}

impl Evaluator for CommandEvaluator {
    fn evaluate(&self, space: &ParameterSpace, sample: &Sample) -> Result<Vec<f64>> {
        let mut last = None;
        for _ in 0..=self.retries {
            match self.attempt(space, sample) {
                Ok(v) => return Ok(v),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}
