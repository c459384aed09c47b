//! Bundled desk-scale acceptance configurations.

use std::path::Path;

use anyhow::{bail, Result};

use crate::config::Experiment;
use crate::report::table;
use crate::suites::{run_config, Outcome, RunOptions, STATEMENTS};

#[derive(Debug)]
pub struct Bundled {
    pub name: &'static str,
    pub experiment: Experiment,
    pub text: &'static str,
}

pub const BUNDLED: [Bundled; 7] = [
    Bundled { name: "oracle", experiment: Experiment::Oracle, text: include_str!("../configs/oracle.toml") },
    Bundled { name: "green-flat", experiment: Experiment::Green, text: include_str!("../configs/green_flat.toml") },
    Bundled { name: "green-bump", experiment: Experiment::Green, text: include_str!("../configs/green_bump.toml") },
    Bundled { name: "gaussian", experiment: Experiment::Gaussian, text: include_str!("../configs/gaussian.toml") },
    Bundled {
        name: "maxprin-flat",
        experiment: Experiment::Maxprin,
        text: include_str!("../configs/maxprin_flat.toml"),
    },
    Bundled {
        name: "maxprin-bump",
        experiment: Experiment::Maxprin,
        text: include_str!("../configs/maxprin_bump.toml"),
    },
    Bundled { name: "convseq", experiment: Experiment::Convseq, text: include_str!("../configs/convseq.toml") },
];

/// Bundled configs for `suite` (`all` or an experiment name).
pub fn select(suite: &str) -> Result<Vec<&'static Bundled>> {
    if suite == "all" {
        return Ok(BUNDLED.iter().collect());
    }
    match Experiment::parse(suite) {
        Some(e) => Ok(BUNDLED.iter().filter(|b| b.experiment == e).collect()),
        None => bail!("unknown suite `{suite}`; expected all, {}", Experiment::ALL.map(|e| e.name()).join(", ")),
    }
}

/// Runs the selected configs in sequence under `out_root/verify`.
pub fn verify(suite: &str, out_root: &Path, opts: &RunOptions) -> Result<Vec<(&'static str, Outcome)>> {
    let chosen = select(suite)?;
    let mut done = Vec::with_capacity(chosen.len());
    for b in chosen {
        let dir = out_root.join("verify").join(b.name);
        eprintln!("running {} ...", b.name);
        let outcome = run_config(b.text, out_root, Some(&dir), opts)?;
        done.push((b.name, outcome));
    }
    Ok(done)
}

/// Statement-by-statement table of every check in `outcomes`.
pub fn matrix(outcomes: &[(&str, Outcome)]) -> String {
    let mut rows = Vec::new();
    for statement in STATEMENTS {
        for (name, o) in outcomes {
            for c in o.manifest.checks.iter().filter(|c| c.statement == statement) {
                rows.push(vec![
                    statement.to_string(),
                    name.to_string(),
                    c.name.clone(),
                    format!("{:.6e}", c.measured),
                    c.required.clone(),
                    if c.pass { "pass" } else { "FAIL" }.to_string(),
                ]);
            }
        }
    }
    table(&["statement", "config", "check", "measured", "required", "verdict"], &rows)
}
