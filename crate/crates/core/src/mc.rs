//! Monte Carlo threshold calibration and PD estimation.
//!
//! Trial `i` of a phase draws from `rng::stream(master_seed, phase, i)`, and
//! work is cut into fixed-size chunks whose results are concatenated (for
//! order statistics) or summed (for counts) in chunk order. Output is
//! therefore bitwise identical for any worker count.

use rayon::prelude::*;

use crate::detectors::{DetectorBank, DetectorKind};
use crate::error::{Error, Result};
use crate::perf::pd_theoretical;
use crate::rng::stream;
use crate::scenario::{Environment, Hypothesis, Scenario};

pub const PHASE_CALIBRATION: u64 = 0x01;
pub const PHASE_PFA_CHECK: u64 = 0x02;
/// Grid point `g` of a PD sweep uses phase `PHASE_DETECTION + g`.
pub const PHASE_DETECTION: u64 = 0x1000;

const CHUNK: usize = 2048;
/// 97.5% standard normal quantile.
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub master_seed: u64,
    /// H0 trials used to set each threshold.
    pub trials_pfa: usize,
    /// H1 trials per eSNR grid point.
    pub trials_pd: usize,
    pub pfa: f64,
    pub esnr_grid_db: Vec<f64>,
    pub detectors: Vec<DetectorKind>,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            master_seed: 2023,
            trials_pfa: 1_000_000,
            trials_pd: 10_000,
            pfa: 1e-4,
            esnr_grid_db: (0..=15).map(|i| 2.0 * i as f64).collect(),
            detectors: DetectorKind::ICBD.to_vec(),
            workers: 0,
        }
    }
}

impl McConfig {
    /// Hard errors for unusable settings; returned strings are warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return Err(Error::InvalidArgument(format!("pfa must lie in (0, 1), got {}", self.pfa)));
        }
        if self.trials_pd < 100 {
            return Err(Error::InvalidArgument(format!("trials_pd must be at least 100, got {}", self.trials_pd)));
        }
        if self.esnr_grid_db.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidArgument("eSNR grid entries must be finite dB values or -inf".into()));
        }
        let mut warnings = Vec::new();
        if (self.trials_pfa as f64) < 10.0 / self.pfa {
            warnings.push(format!(
                "trials_pfa = {} is below 10/pfa = {:.0}; the threshold estimate is unreliable",
                self.trials_pfa,
                10.0 / self.pfa
            ));
        }
        Ok(warnings)
    }
}

/// One row of a PD table.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformancePoint {
    pub esnr_db: f64,
    pub kind: DetectorKind,
    pub pd_mc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub pd_theory: Option<f64>,
    pub threshold: f64,
    pub trials: usize,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

/// k-th largest value with k = round(pfa·n).
pub fn order_statistic_threshold(values: &mut [f64], pfa: f64) -> Result<f64> {
    let n = values.len();
    let k = (pfa * n as f64).round() as usize;
    if k < 1 || k > n {
        return Err(Error::TrialBudgetTooSmall { trials: n, pfa });
    }
    let (_, kth, _) = values.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    Ok(*kth)
}

fn with_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return job();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(job),
        Err(_) => job(),
    }
}

/// Evaluates `bank` on trials `0..trials` of `phase`; row-major, one row of
/// `bank.kinds().len()` values per trial.
pub fn simulate_statistics(
    scenario: &Scenario,
    bank: &DetectorBank,
    master_seed: u64,
    phase: u64,
    trials: usize,
    esnr: f64,
    hypothesis: Hypothesis,
    workers: usize,
) -> Result<Vec<f64>> {
    let amplitude = match hypothesis {
        Hypothesis::H0 => 0.0,
        Hypothesis::H1 => scenario.scale_to_esnr(esnr)?,
    };
    let width = bank.kinds().len();
    let chunks: Vec<Result<Vec<f64>>> = with_pool(workers, || {
        (0..trials.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let range = c * CHUNK..((c + 1) * CHUNK).min(trials);
                let mut out = Vec::with_capacity(range.len() * width);
                for i in range {
                    let mut rng = stream(master_seed, phase, i as u64);
                    let trial = scenario.synthesize_with_amplitude(amplitude, hypothesis, &mut rng);
                    out.extend(bank.evaluate(&trial)?);
                }
                Ok(out)
            })
            .collect()
    });
    let mut values = Vec::with_capacity(trials * width);
    for chunk in chunks {
        values.extend(chunk?);
    }
    Ok(values)
}

/// Number of trials whose statistic exceeds its threshold, per detector.
pub fn count_exceedances(
    scenario: &Scenario,
    bank: &DetectorBank,
    thresholds: &[f64],
    master_seed: u64,
    phase: u64,
    trials: usize,
    esnr: f64,
    hypothesis: Hypothesis,
    workers: usize,
) -> Result<Vec<usize>> {
    let width = bank.kinds().len();
    if thresholds.len() != width {
        return Err(Error::Dimension(format!("{} thresholds for {width} detectors", thresholds.len())));
    }
    let amplitude = match hypothesis {
        Hypothesis::H0 => 0.0,
        Hypothesis::H1 => scenario.scale_to_esnr(esnr)?,
    };
    let partial: Vec<Result<Vec<usize>>> = with_pool(workers, || {
        (0..trials.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut counts = vec![0usize; width];
                for i in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                    let mut rng = stream(master_seed, phase, i as u64);
                    let trial = scenario.synthesize_with_amplitude(amplitude, hypothesis, &mut rng);
                    for (k, v) in bank.evaluate(&trial)?.into_iter().enumerate() {
                        if v > thresholds[k] {
                            counts[k] += 1;
                        }
                    }
                }
                Ok(counts)
            })
            .collect()
    });
    let mut total = vec![0usize; width];
    for counts in partial {
        for (t, c) in total.iter_mut().zip(counts?) {
            *t += c;
        }
    }
    Ok(total)
}

/// Thresholds for several detectors from one shared set of H0 trials.
pub fn calibrate_thresholds(scenario: &Scenario, kinds: &[DetectorKind], cfg: &McConfig) -> Result<Vec<f64>> {
    if kinds.is_empty() {
        return Ok(Vec::new());
    }
    let k = (cfg.pfa * cfg.trials_pfa as f64).round() as usize;
    if k < 1 {
        return Err(Error::TrialBudgetTooSmall { trials: cfg.trials_pfa, pfa: cfg.pfa });
    }
    let bank = DetectorBank::new(scenario, kinds)?;
    let flat = simulate_statistics(
        scenario,
        &bank,
        cfg.master_seed,
        PHASE_CALIBRATION,
        cfg.trials_pfa,
        0.0,
        Hypothesis::H0,
        cfg.workers,
    )?;
    let width = kinds.len();
    (0..width)
        .map(|j| {
            let mut column: Vec<f64> = flat.iter().skip(j).step_by(width).copied().collect();
            order_statistic_threshold(&mut column, cfg.pfa)
        })
        .collect()
}

pub fn calibrate_threshold(scenario: &Scenario, kind: DetectorKind, cfg: &McConfig) -> Result<f64> {
    Ok(calibrate_thresholds(scenario, &[kind], cfg)?[0])
}

/// Fraction of fresh H0 trials (phase [`PHASE_PFA_CHECK`]) above each threshold.
pub fn measure_pfa(
    scenario: &Scenario,
    kinds: &[DetectorKind],
    thresholds: &[f64],
    master_seed: u64,
    trials: usize,
    workers: usize,
) -> Result<Vec<f64>> {
    let bank = DetectorBank::new(scenario, kinds)?;
    let counts = count_exceedances(
        scenario,
        &bank,
        thresholds,
        master_seed,
        PHASE_PFA_CHECK,
        trials,
        0.0,
        Hypothesis::H0,
        workers,
    )?;
    Ok(counts.into_iter().map(|c| c as f64 / trials as f64).collect())
}

/// Analytic PD when the distribution theory applies to `kind` in `scenario`.
pub fn theory_pd(scenario: &Scenario, kind: DetectorKind, rho: f64, eta: f64) -> Result<Option<f64>> {
    if kind.is_conventional() && scenario.training_has_interference() {
        return Ok(None);
    }
    let sigma2 = scenario.sigma2();
    let rho = if sigma2 == 1.0 || scenario.environment() == Environment::Homogeneous {
        rho
    } else if kind.form() == crate::detectors::StatisticForm::Phe {
        // scale invariance: σ² only rescales the effective eSNR
        rho / sigma2
    } else {
        return Ok(None);
    };
    pd_theoretical(kind, &scenario.dims(), rho, eta).map(Some)
}

/// PD sweep over `esnr_grid_db` for several detectors sharing trials.
pub fn estimate_pd_many(
    scenario: &Scenario,
    kinds: &[DetectorKind],
    thresholds: &[f64],
    esnr_grid_db: &[f64],
    cfg: &McConfig,
) -> Result<Vec<PerformancePoint>> {
    if kinds.is_empty() {
        return Ok(Vec::new());
    }
    let bank = DetectorBank::new(scenario, kinds)?;
    let mut points = Vec::with_capacity(esnr_grid_db.len() * kinds.len());
    for (g, &db) in esnr_grid_db.iter().enumerate() {
        let rho = db_to_linear(db);
        let counts = count_exceedances(
            scenario,
            &bank,
            thresholds,
            cfg.master_seed,
            PHASE_DETECTION + g as u64,
            cfg.trials_pd,
            rho,
            Hypothesis::H1,
            cfg.workers,
        )?;
        for (k, &kind) in kinds.iter().enumerate() {
            let (ci_low, ci_high) = wilson_interval(counts[k], cfg.trials_pd);
            points.push(PerformancePoint {
                esnr_db: db,
                kind,
                pd_mc: counts[k] as f64 / cfg.trials_pd as f64,
                ci_low,
                ci_high,
                pd_theory: theory_pd(scenario, kind, rho, thresholds[k])?,
                threshold: thresholds[k],
                trials: cfg.trials_pd,
            });
        }
    }
    Ok(points)
}

pub fn estimate_pd(
    scenario: &Scenario,
    kind: DetectorKind,
    eta: f64,
    esnr_grid_db: &[f64],
    cfg: &McConfig,
) -> Result<Vec<PerformancePoint>> {
    estimate_pd_many(scenario, &[kind], &[eta], esnr_grid_db, cfg)
}

/// Calibration plus PD sweep for every configured detector, grid-major.
pub fn run_experiment(scenario: &Scenario, cfg: &McConfig) -> Result<Vec<PerformancePoint>> {
    cfg.validate()?;
    let thresholds = calibrate_thresholds(scenario, &cfg.detectors, cfg)?;
    estimate_pd_many(scenario, &cfg.detectors, &thresholds, &cfg.esnr_grid_db, cfg)
}
