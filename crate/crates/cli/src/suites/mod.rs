//! Experiment suites. Each turns a typed `[suite]` table into artifacts and
//! a list of checks.

mod common;

pub use common::STATEMENTS;
pub mod convseq;
pub mod gaussian;
pub mod green;
pub mod maxprin;
pub mod oracle;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;

use crate::check::Checks;
use crate::config::{self, Config, Experiment};
use crate::output::{sha256_hex, Artifacts, RunManifest, Versions, MANIFEST};

/// Knobs that apply to every suite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub jobs: usize,
    pub seed: Option<u64>,
    pub tol_scale: f64,
    /// Divides every spatial resolution; 1 leaves the config untouched.
    pub coarsen: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { jobs: 1, seed: None, tol_scale: 1.0, coarsen: 1.0 }
    }
}

pub trait Suite: DeserializeOwned + Sized {
    /// Rejects bad parameters before any computation.
    fn validate(cfg: &Config<Self>) -> Result<()>;

    fn coarsen(cfg: &mut Config<Self>, factor: f64) {
        if let Some(g) = cfg.geometry.as_mut() {
            g.resolution /= factor;
        }
    }

    fn execute(cfg: &Config<Self>, opts: &RunOptions, out: &mut Artifacts) -> Result<Checks>;
}

#[derive(Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

/// Parses `text`, runs its experiment under `out_root` and writes the manifest.
/// `dir_override` replaces the output directory named in the config.
pub fn run_config(text: &str, out_root: &Path, dir_override: Option<&Path>, opts: &RunOptions) -> Result<Outcome> {
    match config::experiment_of(text)? {
        Experiment::Oracle => run_typed::<oracle::OracleSuite>(text, out_root, dir_override, opts),
        Experiment::Green => run_typed::<green::GreenSuite>(text, out_root, dir_override, opts),
        Experiment::Gaussian => run_typed::<gaussian::GaussianSuite>(text, out_root, dir_override, opts),
        Experiment::Maxprin => run_typed::<maxprin::MaxprinSuite>(text, out_root, dir_override, opts),
        Experiment::Convseq => run_typed::<convseq::ConvseqSuite>(text, out_root, dir_override, opts),
    }
}

/// Strict parse plus validation, without running anything.
pub fn check_config(text: &str) -> Result<Experiment> {
    fn typed<S: Suite>(text: &str) -> Result<()> {
        let cfg: Config<S> = config::parse(text)?;
        cfg.validate_common()?;
        S::validate(&cfg)
    }
    let e = config::experiment_of(text)?;
    match e {
        Experiment::Oracle => typed::<oracle::OracleSuite>(text)?,
        Experiment::Green => typed::<green::GreenSuite>(text)?,
        Experiment::Gaussian => typed::<gaussian::GaussianSuite>(text)?,
        Experiment::Maxprin => typed::<maxprin::MaxprinSuite>(text)?,
        Experiment::Convseq => typed::<convseq::ConvseqSuite>(text)?,
    }
    Ok(e)
}

fn run_typed<S: Suite>(text: &str, out_root: &Path, dir_override: Option<&Path>, opts: &RunOptions) -> Result<Outcome> {
    let mut cfg: Config<S> = config::parse(text)?;
    cfg.validate_common()?;
    S::validate(&cfg)?;
    anyhow::ensure!(opts.tol_scale > 0.0 && opts.tol_scale.is_finite(), "--tol-scale must be positive");
    anyhow::ensure!(opts.coarsen >= 1.0, "coarsening factor must be at least 1");
    if opts.coarsen != 1.0 {
        S::coarsen(&mut cfg, opts.coarsen);
        cfg.validate_common()?;
        S::validate(&cfg)?;
    }
    let dir = match dir_override {
        Some(d) => d.to_path_buf(),
        None => {
            let rel = cfg.output.clone().unwrap_or_else(|| PathBuf::from(cfg.experiment.name()));
            if rel.is_absolute() {
                rel
            } else {
                out_root.join(rel)
            }
        }
    };
    let mut art = Artifacts::create(&dir)?;
    art.write("config.toml", text.as_bytes())?;
    let started = Instant::now();
    let checks =
        S::execute(&cfg, opts, &mut art).with_context(|| format!("{} experiment failed", cfg.experiment.name()))?;
    let wall = started.elapsed().as_secs_f64();
    let checks = checks.list;
    let manifest = RunManifest {
        experiment: cfg.experiment.name().to_string(),
        config_sha256: sha256_hex(text.as_bytes()),
        versions: Versions::current(),
        seed: opts.seed,
        tol_scale: opts.tol_scale,
        wall_clock_seconds: wall,
        pass: checks.iter().all(|c| c.pass),
        checks,
        files: art.into_files(),
    };
    let mut body = serde_json::to_string_pretty(&manifest)?;
    body.push('\n');
    std::fs::write(dir.join(MANIFEST), body).with_context(|| format!("writing manifest in {}", dir.display()))?;
    Ok(Outcome { dir, manifest })
}
