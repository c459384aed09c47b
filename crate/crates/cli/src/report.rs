//! Text rendering of result directories.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::output::{read_manifest, RunManifest, MANIFEST};

/// Result directories under `dir`: itself if it holds a manifest, otherwise
/// its immediate subdirectories that do.
pub fn result_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(MANIFEST).is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut found = Vec::new();
    if dir.is_dir() {
        for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
            let path = entry?.path();
            if path.join(MANIFEST).is_file() {
                found.push(path);
            }
        }
    }
    if found.is_empty() {
        bail!("no {MANIFEST} in {} or its subdirectories", dir.display());
    }
    found.sort();
    Ok(found)
}

/// Renders every result directory under `dir` and writes plot-ready
/// whitespace-separated copies of its CSV files to `plot/`.
pub fn report(dir: &Path) -> Result<String> {
    let mut text = String::new();
    for d in result_dirs(dir)? {
        let manifest = read_manifest(&d)?;
        text.push_str(&render(&d, &manifest)?);
    }
    Ok(text)
}

fn render(dir: &Path, m: &RunManifest) -> Result<String> {
    let mut s = String::new();
    writeln!(s, "== {} ({}) ==", m.experiment, dir.display())?;
    writeln!(
        s,
        "config {}  ricci-lab {}  wall {:.1}s  {}",
        &m.config_sha256[..12],
        m.versions.ricci_lab,
        m.wall_clock_seconds,
        if m.pass { "PASS" } else { "FAIL" }
    )?;
    let rows: Vec<Vec<String>> = m
        .checks
        .iter()
        .map(|c| {
            vec![
                c.statement.clone(),
                c.name.clone(),
                format!("{:.6e}", c.measured),
                c.required.clone(),
                if c.pass { "pass" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    s.push_str(&table(&["statement", "check", "measured", "required", "verdict"], &rows));
    for f in &m.files {
        if !f.path.ends_with(".csv") {
            continue;
        }
        let path = dir.join(&f.path);
        let body = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let (header, mut rows) = parse_csv(&body).with_context(|| format!("parsing {}", path.display()))?;
        sort_by_first_column(&mut rows);
        writeln!(s, "\n-- {} --", f.path)?;
        let shown: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|c| short(c)).collect()).collect();
        let head: Vec<&str> = header.iter().map(String::as_str).collect();
        s.push_str(&table(&head, &shown));
        write_plot(dir, &f.path, &header, &rows)?;
    }
    s.push('\n');
    Ok(s)
}

fn parse_csv(body: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut lines = body.lines().filter(|l| !l.is_empty());
    let header: Vec<String> = lines.next().context("empty file")?.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<String> = line.split(',').map(str::to_string).collect();
        if row.len() != header.len() {
            bail!("row {} has {} fields, header has {}", i + 1, row.len(), header.len());
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Numeric first columns sort numerically; anything else keeps file order.
fn sort_by_first_column(rows: &mut [Vec<String>]) {
    if rows.iter().all(|r| r[0].parse::<f64>().is_ok()) {
        rows.sort_by(|a, b| a[0].parse::<f64>().unwrap().total_cmp(&b[0].parse::<f64>().unwrap()));
    }
}

fn short(cell: &str) -> String {
    if cell.contains(['e', '.']) {
        if let Ok(v) = cell.parse::<f64>() {
            return format!("{v:.6e}");
        }
    }
    cell.to_string()
}

fn write_plot(dir: &Path, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let stem = Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    let out = dir.join("plot").join(format!("{stem}.dat"));
    std::fs::create_dir_all(out.parent().unwrap())?;
    let mut body = format!("# {}\n", header.join(" "));
    for r in rows {
        body.push_str(&r.join(" "));
        body.push('\n');
    }
    std::fs::write(&out, body).with_context(|| format!("writing {}", out.display()))
}

/// Left-aligned text table.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let mut l: String = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ");
        l.truncate(l.trim_end().len());
        l.push('\n');
        l
    };
    let mut s = line(header.to_vec());
    s.push_str(&line(width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for r in rows {
        s.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    s
}
