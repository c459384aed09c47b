//! Strict TOML experiment configurations.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ricci_lab::heat::{SolverOptions, Stepper};
use ricci_lab::{GeometryModel, TimeGrid};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Oracle,
    Green,
    Gaussian,
    Maxprin,
    Convseq,
}

impl Experiment {
    pub const ALL: [Experiment; 5] =
        [Experiment::Oracle, Experiment::Green, Experiment::Gaussian, Experiment::Maxprin, Experiment::Convseq];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Oracle => "oracle",
            Experiment::Green => "green",
            Experiment::Gaussian => "gaussian",
            Experiment::Maxprin => "maxprin",
            Experiment::Convseq => "convseq",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeSpec {
    Uniform { start: f64, end: f64, steps: usize },
    Graded { start: f64, end: f64, first_step: f64, max_step: f64, growth: f64 },
}

impl TimeSpec {
    pub fn grid(&self) -> Result<TimeGrid> {
        Ok(match *self {
            TimeSpec::Uniform { start, end, steps } => TimeGrid::uniform(start, end, steps)?,
            TimeSpec::Graded { start, end, first_step, max_step, growth } => {
                TimeGrid::graded(start, end, first_step, max_step, growth)?
            }
        })
    }

    fn validate(&self) -> Result<()> {
        let (start, end) = match *self {
            TimeSpec::Uniform { start, end, .. } | TimeSpec::Graded { start, end, .. } => (start, end),
        };
        if !(start >= 0.0 && end > start) {
            bail!("solver.time: need 0 <= start < end, got [{start}, {end}]");
        }
        self.grid().map(|_| ())
    }
}

fn default_rel_tol() -> f64 {
    1e-14
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub time: TimeSpec,
    #[serde(default)]
    pub stepper: Stepper,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

impl SolverBlock {
    pub fn options(&self) -> SolverOptions {
        let mut opts = SolverOptions { stepper: self.stepper, ..Default::default() };
        opts.linear.rel_tol = self.rel_tol;
        opts
    }
}

/// A full configuration; `S` is the experiment-specific `[suite]` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config<S> {
    pub experiment: Experiment,
    /// Output directory, relative to the output root unless absolute.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub geometry: Option<GeometryModel>,
    #[serde(default)]
    pub solver: Option<SolverBlock>,
    pub suite: S,
}

impl<S> Config<S> {
    pub fn geometry(&self) -> Result<&GeometryModel> {
        self.geometry
            .as_ref()
            .with_context(|| format!("{} experiments need a [geometry] table", self.experiment.name()))
    }

    pub fn solver(&self) -> Result<&SolverBlock> {
        self.solver.as_ref().with_context(|| format!("{} experiments need a [solver] table", self.experiment.name()))
    }

    /// Checks the shared blocks; suites validate their own table.
    pub fn validate_common(&self) -> Result<()> {
        if let Some(g) = &self.geometry {
            g.validate()?;
        }
        if let Some(s) = &self.solver {
            s.time.validate()?;
            if !(s.rel_tol > 0.0 && s.rel_tol < 1.0) {
                bail!("solver.rel_tol must lie in (0, 1), got {}", s.rel_tol);
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct Probe {
    experiment: Experiment,
}

/// Reads only the `experiment` key; everything else is checked by [`parse`].
pub fn experiment_of(text: &str) -> Result<Experiment> {
    let table: toml::Table = toml::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))?;
    let value = table.get("experiment").context("missing key `experiment`")?.clone();
    let probe: Probe = toml::Table::from_iter([("experiment".to_string(), value)])
        .try_into()
        .map_err(|e| anyhow::anyhow!("experiment: {e}"))?;
    Ok(probe.experiment)
}

/// Strict parse: unknown keys anywhere fail with their line and column.
pub fn parse<S: DeserializeOwned>(text: &str) -> Result<Config<S>> {
    toml::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))
}

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Positive-and-finite guard shared by the suite validators.
pub fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        bail!("suite.{name} must be positive, got {v}");
    }
    Ok(())
}
