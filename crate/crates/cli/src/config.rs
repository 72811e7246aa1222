//! Run configuration: a sectioned key = value file with `[scenario]`, `[mc]`
//! and `[output]` sections. `#` and `;` start comments. Unknown sections or
//! keys, duplicates and malformed values are rejected with the line number.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use icbd::mc::McConfig;
use icbd::scenario::{DEFAULT_SUBSPACE_SEED, DEFAULT_TRAINING_INR_DB};
use icbd::{DetectorKind, Environment};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n: usize,
    pub l: usize,
    pub p: usize,
    pub q: usize,
    pub epsilon: f64,
    pub sigma2: f64,
    pub environment: Environment,
    pub training_interference: bool,
    pub training_inr_db: f64,
    pub subspace_seed: u64,
    pub h_file: Option<PathBuf>,
    pub j_file: Option<PathBuf>,
    pub theta0_file: Option<PathBuf>,
    pub phi_file: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 24,
            l: 23,
            p: 2,
            q: 6,
            epsilon: 0.95,
            sigma2: 1.0,
            environment: Environment::Homogeneous,
            training_interference: true,
            training_inr_db: DEFAULT_TRAINING_INR_DB,
            subspace_seed: DEFAULT_SUBSPACE_SEED,
            h_file: None,
            j_file: None,
            theta0_file: None,
            phi_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    /// Significant digits for real numbers in CSV output.
    pub precision: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { csv: None, precision: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub mc: McConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Section {
    Scenario,
    Mc,
    Output,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    /// Makes relative data-file paths relative to `dir`.
    pub fn resolve_paths(&mut self, dir: &Path) {
        let s = &mut self.scenario;
        for file in [&mut s.h_file, &mut s.j_file, &mut s.theta0_file, &mut s.phi_file] {
            if let Some(p) = file {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut section = None;
        let mut seen: Vec<(Section, String)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| bad_line(line_no, "unterminated section header"))?
                    .trim();
                section = Some(match name {
                    "scenario" => Section::Scenario,
                    "mc" => Section::Mc,
                    "output" => Section::Output,
                    other => return Err(bad_line(line_no, &format!("unknown section [{other}]"))),
                });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad_line(line_no, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section.ok_or_else(|| bad_line(line_no, &format!("key `{key}` appears before any section")))?;
            if seen.iter().any(|(s, k)| *s == sec && k == key) {
                return Err(bad_key(line_no, key, "duplicate key"));
            }
            seen.push((sec, key.to_string()));
            cfg.set(sec, key, value).map_err(|msg| bad_key(line_no, key, &msg))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, section: Section, key: &str, value: &str) -> Result<(), String> {
        match section {
            Section::Scenario => {
                let s = &mut self.scenario;
                match key {
                    "n" => s.n = num(value)?,
                    "l" => s.l = num(value)?,
                    "p" => s.p = num(value)?,
                    "q" => s.q = num(value)?,
                    "epsilon" => s.epsilon = num(value)?,
                    "sigma2" => s.sigma2 = num(value)?,
                    "environment" => s.environment = value.parse().map_err(|e: icbd::Error| e.to_string())?,
                    "training_interference" => s.training_interference = boolean(value)?,
                    "training_inr_db" => s.training_inr_db = num(value)?,
                    "subspace_seed" => s.subspace_seed = num(value)?,
                    "h_file" => s.h_file = path(value),
                    "j_file" => s.j_file = path(value),
                    "theta0_file" => s.theta0_file = path(value),
                    "phi_file" => s.phi_file = path(value),
                    _ => return Err("unknown key in [scenario]".into()),
                }
            }
            Section::Mc => {
                let m = &mut self.mc;
                match key {
                    "seed" => m.master_seed = num(value)?,
                    "pfa" => m.pfa = num(value)?,
                    "trials_pfa" => m.trials_pfa = num(value)?,
                    "trials_pd" => m.trials_pd = num(value)?,
                    "esnr_db" => m.esnr_grid_db = grid(value)?,
                    "detectors" => m.detectors = detectors(value)?,
                    "workers" => m.workers = num(value)?,
                    _ => return Err("unknown key in [mc]".into()),
                }
            }
            Section::Output => match key {
                "csv" => self.output.csv = path(value),
                "precision" => {
                    let p: usize = num(value)?;
                    if !(1..=17).contains(&p) {
                        return Err("precision must be between 1 and 17".into());
                    }
                    self.output.precision = p;
                }
                _ => return Err("unknown key in [output]".into()),
            },
        }
        Ok(())
    }

    /// Canonical text form; parses back to an equal value.
    pub fn serialize(&self) -> String {
        let s = &self.scenario;
        let m = &self.mc;
        let mut out = String::new();
        let _ = writeln!(out, "[scenario]");
        let _ = writeln!(out, "n = {}\nl = {}\np = {}\nq = {}", s.n, s.l, s.p, s.q);
        let _ = writeln!(out, "epsilon = {:?}\nsigma2 = {:?}", s.epsilon, s.sigma2);
        let _ = writeln!(out, "environment = {}", s.environment.as_str());
        let _ = writeln!(out, "training_interference = {}", s.training_interference);
        let _ = writeln!(out, "training_inr_db = {:?}", s.training_inr_db);
        let _ = writeln!(out, "subspace_seed = {}", s.subspace_seed);
        for (key, file) in [("h_file", &s.h_file), ("j_file", &s.j_file), ("theta0_file", &s.theta0_file), ("phi_file", &s.phi_file)] {
            if let Some(p) = file {
                let _ = writeln!(out, "{key} = {}", p.display());
            }
        }
        let _ = writeln!(out, "\n[mc]");
        let _ = writeln!(out, "seed = {}\npfa = {:?}", m.master_seed, m.pfa);
        let _ = writeln!(out, "trials_pfa = {}\ntrials_pd = {}", m.trials_pfa, m.trials_pd);
        let grid: Vec<String> = m.esnr_grid_db.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "esnr_db = {}", grid.join(", "));
        let names: Vec<&str> = m.detectors.iter().map(|d| d.name()).collect();
        let _ = writeln!(out, "detectors = {}", names.join(", "));
        let _ = writeln!(out, "workers = {}", m.workers);
        let _ = writeln!(out, "\n[output]");
        if let Some(p) = &self.output.csv {
            let _ = writeln!(out, "csv = {}", p.display());
        }
        let _ = writeln!(out, "precision = {}", self.output.precision);
        out
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}

fn bad_line(line: usize, msg: &str) -> CliError {
    CliError::Validation(format!("config line {line}: {msg}"))
}

fn bad_key(line: usize, key: &str, msg: &str) -> CliError {
    CliError::Validation(format!("config line {line}: key `{key}`: {msg}"))
}

fn num<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| format!("cannot parse `{value}`: {e}"))
}

fn boolean(value: &str) -> Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("expected true or false, got `{value}`")),
    }
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

/// Comma-separated dB values; an item `start:step:stop` expands to an
/// inclusive range.
fn grid(value: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').map(str::trim).collect();
        match parts.as_slice() {
            [single] => out.push(num(single)?),
            [start, step, stop] => {
                let (start, step, stop): (f64, f64, f64) = (num(start)?, num(step)?, num(stop)?);
                if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
                    return Err(format!("range `{item}` needs finite bounds and a positive step"));
                }
                let count = ((stop - start) / step + 1e-9).floor();
                if count < 0.0 || count > 1e6 {
                    return Err(format!("range `{item}` is empty or too long"));
                }
                out.extend((0..=count as usize).map(|i| start + i as f64 * step));
            }
            _ => return Err(format!("cannot parse grid item `{item}`")),
        }
    }
    Ok(out)
}

fn detectors(value: &str) -> Result<Vec<DetectorKind>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "icbd" => Err("use individual detector names".to_string()),
            _ => s.parse::<DetectorKind>().map_err(|e| e.to_string()),
        })
        .collect()
}
