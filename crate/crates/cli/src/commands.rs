//! The four subcommands as library functions. CSV goes to `out`, the human
//! readable summary to `log`.

use std::io::Write;
use std::time::Instant;

use icbd::mc::{calibrate_thresholds, db_to_linear, estimate_pd_many, measure_pfa, theory_pd, PerformancePoint};
use icbd::perf::threshold_theoretical;
use icbd::verify::{self, IdentityReport};
use icbd::{Dims, Scenario};

use crate::config::{RunConfig, ScenarioConfig};
use crate::csv_io::{fmt_sig, read_complex_matrix, read_complex_vector, write_points, write_theory, TheoryRow};
use crate::error::CliError;

/// Builds the scenario, loading explicit H/J/θ₀/φ files when configured.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario, CliError> {
    let mut b = Scenario::builder(cfg.n, cfg.l, cfg.p, cfg.q)
        .epsilon(cfg.epsilon)
        .sigma2(cfg.sigma2)
        .environment(cfg.environment)
        .training_interference(cfg.training_interference)
        .training_inr_db(cfg.training_inr_db)
        .subspace_seed(cfg.subspace_seed);
    if let Some(p) = &cfg.h_file {
        b = b.signal_subspace(read_complex_matrix(p)?);
    }
    if let Some(p) = &cfg.j_file {
        b = b.interference_subspace(read_complex_matrix(p)?);
    }
    if let Some(p) = &cfg.theta0_file {
        b = b.theta0(read_complex_vector(p)?);
    }
    if let Some(p) = &cfg.phi_file {
        b = b.phi(read_complex_vector(p)?);
    }
    Ok(b.build()?)
}

/// Re-validates a loaded configuration and returns its warnings.
pub fn validate(cfg: &RunConfig) -> Result<(Scenario, Vec<String>), CliError> {
    let warnings = cfg.mc.validate()?;
    let scenario = build_scenario(&cfg.scenario)?;
    if cfg.mc.detectors.iter().any(|k| k.is_conventional()) && cfg.scenario.l < cfg.scenario.n {
        return Err(icbd::Error::ConventionalNeedsInvertibleScm { n: cfg.scenario.n, l: cfg.scenario.l }.into());
    }
    Ok((scenario, warnings))
}

fn header(log: &mut dyn Write, command: &str, cfg: &RunConfig) -> std::io::Result<()> {
    let s = &cfg.scenario;
    writeln!(
        log,
        "# icbd {command}: seed={} N={} L={} p={} q={} epsilon={} env={} training_interference={} pfa={}",
        cfg.mc.master_seed,
        s.n,
        s.l,
        s.p,
        s.q,
        s.epsilon,
        s.environment.as_str(),
        s.training_interference,
        cfg.mc.pfa
    )
}

fn warn(log: &mut dyn Write, warnings: &[String]) -> std::io::Result<()> {
    for w in warnings {
        writeln!(log, "warning: {w}")?;
    }
    Ok(())
}

/// Threshold calibration plus PD sweep; one CSV row per (grid point, detector).
pub fn simulate(cfg: &RunConfig, out: &mut dyn Write, log: &mut dyn Write) -> Result<Vec<PerformancePoint>, CliError> {
    let (scenario, warnings) = validate(cfg)?;
    header(log, "simulate", cfg)?;
    warn(log, &warnings)?;
    let start = Instant::now();
    let kinds = &cfg.mc.detectors;
    let thresholds = calibrate_thresholds(&scenario, kinds, &cfg.mc)?;
    for (k, t) in kinds.iter().zip(&thresholds) {
        writeln!(log, "threshold {:<14} {}", k.name(), fmt_sig(*t, cfg.output.precision))?;
    }
    let points = estimate_pd_many(&scenario, kinds, &thresholds, &cfg.mc.esnr_grid_db, &cfg.mc)?;
    write_points(&mut *out, &points, cfg.output.precision)?;
    writeln!(
        log,
        "{} rows, {} calibration + {} detection trials in {:.1} s",
        points.len(),
        if kinds.is_empty() { 0 } else { cfg.mc.trials_pfa },
        if kinds.is_empty() { 0 } else { cfg.mc.trials_pd * cfg.mc.esnr_grid_db.len() },
        start.elapsed().as_secs_f64()
    )?;
    Ok(points)
}

/// Analytic PD and threshold for every (grid point, detector); no sampling.
/// Cells are empty where the analytic law does not apply.
pub fn theory(cfg: &RunConfig, out: &mut dyn Write, log: &mut dyn Write) -> Result<Vec<TheoryRow>, CliError> {
    let (scenario, warnings) = validate(cfg)?;
    header(log, "theory", cfg)?;
    warn(log, &warnings)?;
    let dims = scenario.dims();
    let mut thresholds = Vec::new();
    for &kind in &cfg.mc.detectors {
        let eta = threshold_theoretical(kind, &dims, cfg.mc.pfa)?;
        // the law applies to the same kinds at every eSNR, so probe at zero
        thresholds.push(theory_pd(&scenario, kind, 0.0, eta)?.map(|_| eta));
    }
    let mut rows = Vec::new();
    for &db in &cfg.mc.esnr_grid_db {
        let rho = db_to_linear(db);
        for (&kind, eta) in cfg.mc.detectors.iter().zip(&thresholds) {
            let pd = match eta {
                Some(eta) => theory_pd(&scenario, kind, rho, *eta)?,
                None => None,
            };
            rows.push(TheoryRow { esnr_db: db, detector: kind.name(), pd_theory: pd, threshold_theory: *eta });
        }
    }
    write_theory(&mut *out, &rows, cfg.output.precision)?;
    writeln!(log, "{} rows", rows.len())?;
    Ok(rows)
}

/// One row of the calibration report.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub detector: &'static str,
    pub threshold: f64,
    pub threshold_theory: Option<f64>,
    pub pfa_measured: Option<f64>,
}

/// Monte Carlo thresholds, optionally re-measured on a fresh H0 budget of the
/// same size.
pub fn calibrate(cfg: &RunConfig, recheck: bool, out: &mut dyn Write, log: &mut dyn Write) -> Result<Vec<CalibrationRow>, CliError> {
    let (scenario, warnings) = validate(cfg)?;
    header(log, "calibrate", cfg)?;
    warn(log, &warnings)?;
    let kinds = &cfg.mc.detectors;
    let thresholds = calibrate_thresholds(&scenario, kinds, &cfg.mc)?;
    let measured = if recheck && !kinds.is_empty() {
        measure_pfa(&scenario, kinds, &thresholds, cfg.mc.master_seed, cfg.mc.trials_pfa, cfg.mc.workers)?
            .into_iter()
            .map(Some)
            .collect()
    } else {
        vec![None; kinds.len()]
    };
    let mut rows = Vec::new();
    for ((&kind, &t), m) in kinds.iter().zip(&thresholds).zip(measured) {
        let eta = threshold_theoretical(kind, &scenario.dims(), cfg.mc.pfa)?;
        let applies = theory_pd(&scenario, kind, 0.0, eta)?.is_some();
        rows.push(CalibrationRow { detector: kind.name(), threshold: t, threshold_theory: applies.then_some(eta), pfa_measured: m });
    }
    let digits = cfg.output.precision;
    let mut w = csv::Writer::from_writer(&mut *out);
    w.write_record(["detector", "threshold", "threshold_theory", "pfa_target", "pfa_measured", "trials"])?;
    for r in &rows {
        w.write_record([
            r.detector.to_string(),
            fmt_sig(r.threshold, digits),
            r.threshold_theory.map(|v| fmt_sig(v, digits)).unwrap_or_default(),
            fmt_sig(cfg.mc.pfa, digits),
            r.pfa_measured.map(|v| fmt_sig(v, digits)).unwrap_or_default(),
            cfg.mc.trials_pfa.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

/// Options for the identity checks. `dims` overrides the per-group defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub groups: Vec<String>,
    pub dims: Option<Dims>,
    pub instances: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            groups: verify::GROUPS.iter().map(|g| g.to_string()).collect(),
            dims: None,
            instances: 1000,
            tolerance: verify::DEFAULT_TOLERANCE,
            seed: 2023,
        }
    }
}

/// Runs the selected identity groups; a failing identity is a validation
/// failure naming the identity and the instance to replay.
pub fn verify_identities(opts: &VerifyOptions, out: &mut dyn Write, log: &mut dyn Write) -> Result<Vec<IdentityReport>, CliError> {
    if opts.instances == 0 {
        return Err(CliError::Validation("instances must be at least 1".into()));
    }
    writeln!(log, "# icbd verify: seed={} instances={} tolerance={:e}", opts.seed, opts.instances, opts.tolerance)?;
    let mut reports = Vec::new();
    for group in &opts.groups {
        let found = match group.as_str() {
            "cancellation" => {
                let d = opts.dims.unwrap_or(Dims { n: 24, l: 23, p: 2, q: 6 });
                verify::check_cancellation(d.n, d.q, opts.seed, opts.instances, opts.tolerance)?
            }
            "equivalence" => {
                let d = opts.dims.unwrap_or(Dims { n: 12, l: 16, p: 2, q: 3 });
                verify::check_equivalence(&d, opts.seed, opts.instances, opts.tolerance)?
            }
            "relations" => verify::check_relations(&opts.dims.unwrap_or(Dims::REFERENCE), opts.seed, opts.instances, opts.tolerance)?,
            other => {
                return Err(CliError::Validation(format!(
                    "unknown identity group `{other}` (expected one of {})",
                    verify::GROUPS.join(", ")
                )))
            }
        };
        reports.extend(found);
    }

    writeln!(log, "{:<36} {:>9} {:>12} {:>10}  result", "identity", "instances", "max resid", "tolerance")?;
    for r in &reports {
        writeln!(
            log,
            "{:<36} {:>9} {:>12.3e} {:>10.1e}  {}",
            r.identity_id,
            r.instances,
            r.max_relative_residual,
            r.tolerance,
            if r.pass { "pass" } else { "FAIL" }
        )?;
    }
    let mut w = csv::Writer::from_writer(&mut *out);
    w.write_record(["identity", "instances", "max_relative_residual", "tolerance", "pass", "seed", "worst_instance"])?;
    for r in &reports {
        w.write_record([
            r.identity_id.clone(),
            r.instances.to_string(),
            format!("{:e}", r.max_relative_residual),
            format!("{:e}", r.tolerance),
            r.pass.to_string(),
            r.seed.to_string(),
            r.worst_instance.to_string(),
        ])?;
    }
    w.flush()?;

    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} (seed {}, instance {})", r.identity_id, r.seed, r.worst_instance))
        .collect();
    writeln!(log, "{}/{} identities pass", reports.len() - failed.len(), reports.len())?;
    if failed.is_empty() {
        Ok(reports)
    } else {
        Err(CliError::Validation(format!("identity check failed: {}", failed.join(", "))))
    }
}
