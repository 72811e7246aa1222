//! Acceptance checks. Each test writes one `criterion N: PASS|FAIL` line
//! straight to stdout (bypassing capture) and then asserts.

use std::io::Write;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use icbd::detectors::{build_workspace, conventional_statistics, DetectorBank};
use icbd::linalg::{orth_complement, relative_difference};
use icbd::mc::{
    calibrate_thresholds, db_to_linear, estimate_pd_many, measure_pfa, simulate_statistics, McConfig, PHASE_DETECTION,
};
use icbd::perf::{cb_cdf, cf_cdf, ks_pvalue, ks_statistic, pd_theoretical, threshold_theoretical};
use icbd::rng::{complex_gaussian_matrix, complex_gaussian_vector, stream};
use icbd::scenario::{esnr_conventional, esnr_icbd};
use icbd::verify::{check_cancellation, check_equivalence, random_covariance};
use icbd::{BetaDistSpec, ComplexMatrix, DetectorKind, Dims, FDistSpec, Hypothesis, PerformancePoint, Projection, Scenario};

const SEED: u64 = 2023;
const PFA: f64 = 1e-4;
const CALIBRATION_TRIALS: usize = 1_000_000;
const PD_TRIALS: usize = 10_000;
const ICBD: [DetectorKind; 4] = DetectorKind::ICBD;

fn report(criterion: u32, pass: bool, detail: &str) {
    let line = format!("criterion {criterion}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn grid() -> Vec<f64> {
    (0..=15).map(|i| 2.0 * i as f64).collect()
}

fn mc_config(seed: u64) -> McConfig {
    McConfig {
        master_seed: seed,
        trials_pfa: CALIBRATION_TRIALS,
        trials_pd: PD_TRIALS,
        pfa: PFA,
        esnr_grid_db: grid(),
        detectors: ICBD.to_vec(),
        workers: 0,
    }
}

/// Default geometry with interference-bearing training, calibrated once.
struct Calibrated {
    scenario: Scenario,
    thresholds: Vec<f64>,
}

fn calibrated() -> &'static Calibrated {
    static CELL: OnceLock<Calibrated> = OnceLock::new();
    CELL.get_or_init(|| {
        let scenario = Scenario::reference().training_interference(true).build().unwrap();
        let thresholds = calibrate_thresholds(&scenario, &ICBD, &mc_config(SEED)).unwrap();
        Calibrated { scenario, thresholds }
    })
}

fn sweep() -> &'static Vec<PerformancePoint> {
    static CELL: OnceLock<Vec<PerformancePoint>> = OnceLock::new();
    CELL.get_or_init(|| {
        let c = calibrated();
        estimate_pd_many(&c.scenario, &ICBD, &c.thresholds, &grid(), &mc_config(SEED)).unwrap()
    })
}

fn point(points: &[PerformancePoint], db: f64, kind: DetectorKind) -> &PerformancePoint {
    points.iter().find(|p| p.esnr_db == db && p.kind == kind).unwrap()
}

#[test]
fn criterion_1_identity_suite() {
    let start = Instant::now();
    let mut reports = check_cancellation(24, 6, SEED, 1000, 1e-8).unwrap();
    reports.extend(check_equivalence(&Dims { n: 12, l: 16, p: 2, q: 3 }, SEED, 1000, 1e-8).unwrap());
    let secs = start.elapsed().as_secs_f64();
    let worst = reports.iter().map(|r| r.max_relative_residual).fold(0.0, f64::max);
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.identity_id.as_str()).collect();
    let pass = failed.is_empty() && reports.iter().all(|r| r.instances >= 1000) && secs < 60.0;
    report(1, pass, &format!("{} identities, worst residual {worst:.2e} (< 1e-8), {secs:.1} s (< 60 s), failed {failed:?}", reports.len()));
    assert!(pass);
}

#[test]
fn criterion_2_detector_equivalence() {
    let mut worst = 0.0f64;
    for i in 0..1000u64 {
        let mut rng = stream(SEED, 0xE2, i);
        let r = random_covariance(&mut rng, 12).unwrap();
        let s = Scenario::builder(12, 16, 2, 3).covariance(r).subspace_seed(i).build().unwrap();
        let trial = s.synthesize_trial(db_to_linear(10.0), Hypothesis::H1, &mut rng).unwrap();
        let icbd = build_workspace(&trial, &Projection::from_scenario(&s)).unwrap().statistics();
        let conv = conventional_statistics(&trial.x, &trial.x_l, s.h(), s.j()).unwrap();
        for (a, b) in [(icbd.glrt, conv.glrt), (icbd.rao, conv.rao), (icbd.wald, conv.wald), (icbd.phe, conv.phe)] {
            worst = worst.max(relative_difference(a, b));
        }
    }
    let pass = worst < 1e-9;
    report(2, pass, &format!("1000 trials at N=12 L=16 p=2 q=3, worst relative difference {worst:.2e} (< 1e-9)"));
    assert!(pass);
}

#[test]
fn criterion_3_esnr_equality() {
    let mut worst = 0.0f64;
    for i in 0..1000u64 {
        let mut rng = stream(SEED, 0xE3, i);
        let r = random_covariance(&mut rng, 24).unwrap();
        let h = complex_gaussian_matrix(&mut rng, 24, 2);
        let j = complex_gaussian_matrix(&mut rng, 24, 6);
        let theta = complex_gaussian_vector(&mut rng, 2);
        let j_perp = orth_complement(&j).unwrap();
        let a = esnr_icbd(&theta, &h, &j_perp, &r).unwrap();
        let b = esnr_conventional(&theta, &h, &j, &r).unwrap();
        worst = worst.max(relative_difference(a, b));
    }
    let pass = worst < 1e-9;
    report(3, pass, &format!("1000 random (R, H, J, theta) at N=24 q=6, worst relative difference {worst:.2e} (< 1e-9)"));
    assert!(pass);
}

#[test]
fn criterion_4_distribution_laws() {
    let start = Instant::now();
    let s = Scenario::reference().training_interference(true).build().unwrap();
    let projection = Projection::from_scenario(&s);
    let n = 100_000;
    let mut glrt = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let mut rng = stream(SEED, 0xE4, i);
        let trial = s.synthesize_with_amplitude(0.0, Hypothesis::H0, &mut rng);
        let st = build_workspace(&trial, &projection).unwrap().statistics();
        glrt.push(st.glrt);
        beta.push(st.loss_factor);
    }
    let f = FDistSpec::central(2, 6).unwrap();
    let b = BetaDistSpec::new(8, 16).unwrap();
    let d_t = ks_statistic(&glrt, |x| cf_cdf(&f, x));
    let d_b = ks_statistic(&beta, |x| cb_cdf(&b, x));
    let (p_t, p_b) = (ks_pvalue(d_t, n), ks_pvalue(d_b, n));
    let secs = start.elapsed().as_secs_f64();
    let pass = p_t > 0.01 && p_b > 0.01 && secs < 300.0;
    report(
        4,
        pass,
        &format!("n={n}: GLRT vs CF(2,6) D={d_t:.5} p={p_t:.3}; beta vs Beta(8,16) D={d_b:.5} p={p_b:.3} (> 0.01), {secs:.1} s"),
    );
    assert!(pass);
}

#[test]
fn criterion_5_pfa_calibration_and_cfar() {
    let c = calibrated();
    let se = (PFA * (1.0 - PFA) / CALIBRATION_TRIALS as f64).sqrt();
    let fresh = measure_pfa(&c.scenario, &ICBD, &c.thresholds, SEED, CALIBRATION_TRIALS, 0).unwrap();
    let white = Scenario::reference().training_interference(true).covariance(ComplexMatrix::identity(24, 24)).build().unwrap();
    let cfar = measure_pfa(&white, &ICBD, &c.thresholds, SEED + 2, CALIBRATION_TRIALS, 0).unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    for (k, kind) in ICBD.iter().enumerate() {
        let z_fresh = (fresh[k] - PFA) / se;
        let z_cfar = (cfar[k] - PFA) / se;
        pass &= z_fresh.abs() <= 3.0 && z_cfar.abs() <= 3.0;
        lines.push(format!("{} {:.2e}/{:.2e} (z {z_fresh:+.2}/{z_cfar:+.2})", kind.name(), fresh[k], cfar[k]));
    }
    report(5, pass, &format!("fresh PFA at R(0.95) / at R=I, 3 SE = {:.1e}: {}", 3.0 * se, lines.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_6_theory_simulation_agreement() {
    let points = sweep();
    let misses: Vec<String> = points
        .iter()
        .filter(|p| {
            let t = p.pd_theory.unwrap();
            !(p.ci_low <= t && t <= p.ci_high)
        })
        .map(|p| format!("{} @ {} dB: theory {:.4} CI [{:.4}, {:.4}]", p.kind.name(), p.esnr_db, p.pd_theory.unwrap(), p.ci_low, p.ci_high))
        .collect();
    let pass = misses.is_empty() && points.len() == 64;
    report(6, pass, &format!("{} points, {} outside the 95% CI {misses:?}", points.len(), misses.len()));
    assert!(pass);
}

#[test]
fn criterion_7_qualitative_orderings() {
    let c = calibrated();
    let points = sweep();
    let bank = DetectorBank::new(&c.scenario, &ICBD).unwrap();
    let mut notes = Vec::new();

    // GLRT best: paired comparison on the very trials behind the sweep
    let mut glrt_best = true;
    for (g, &db) in grid().iter().enumerate() {
        let rho = db_to_linear(db);
        let stats = simulate_statistics(&c.scenario, &bank, SEED, PHASE_DETECTION + g as u64, PD_TRIALS, rho, Hypothesis::H1, 0)
            .unwrap();
        let hits: Vec<[bool; 4]> =
            stats.chunks_exact(4).map(|row| std::array::from_fn(|k| row[k] > c.thresholds[k])).collect();
        for other in 1..4 {
            let only_other = hits.iter().filter(|h| h[other] && !h[0]).count() as f64;
            let only_glrt = hits.iter().filter(|h| h[0] && !h[other]).count() as f64;
            let n = PD_TRIALS as f64;
            let diff = (only_other - only_glrt) / n;
            let var = ((only_other + only_glrt) / n - diff * diff) / n;
            if diff > 3.0 * var.max(0.0).sqrt() {
                glrt_best = false;
                notes.push(format!("{} above GLRT at {db} dB by {diff:.4} (paired 3 SE {:.4})", ICBD[other].name(), 3.0 * var.sqrt()));
            }
        }
    }

    // Rao markedly lowest wherever detection is under way
    let mut rao_lowest = true;
    for db in grid() {
        let pd: Vec<f64> = ICBD.iter().map(|&k| point(points, db, k).pd_mc).collect();
        if pd.iter().cloned().fold(0.0, f64::max) >= 0.5 {
            let min_other = pd[0].min(pd[2]).min(pd[3]);
            if pd[1] >= 0.5 * min_other {
                rao_lowest = false;
                notes.push(format!("Rao {:.3} not below half of {min_other:.3} at {db} dB", pd[1]));
            }
        }
    }

    // PHE against Wald on the analytic curves
    let dims = Dims::REFERENCE;
    let eta_wald = threshold_theoretical(DetectorKind::IcbdWaldHe, &dims, PFA).unwrap();
    let eta_phe = threshold_theoretical(DetectorKind::IcbdPhe, &dims, PFA).unwrap();
    let signs: Vec<(f64, f64)> = grid()
        .into_iter()
        .map(|db| {
            let rho = db_to_linear(db);
            let d = pd_theoretical(DetectorKind::IcbdPhe, &dims, rho, eta_phe).unwrap()
                - pd_theoretical(DetectorKind::IcbdWaldHe, &dims, rho, eta_wald).unwrap();
            (db, d)
        })
        .filter(|(_, d)| d.abs() >= 1e-6)
        .collect();
    let changes: Vec<(f64, bool)> =
        signs.windows(2).filter(|w| (w[0].1 > 0.0) != (w[1].1 > 0.0)).map(|w| (w[1].0, w[0].1 > 0.0)).collect();
    let crossing = changes.len() == 1 && changes[0].1;
    notes.push(format!("PHE/Wald sign changes at {:?}", changes.iter().map(|c| c.0).collect::<Vec<_>>()));

    let pass = glrt_best && rao_lowest && crossing;
    report(
        7,
        pass,
        &format!("GLRT best {glrt_best}, Rao markedly lowest {rao_lowest}, single PHE/Wald crossing {crossing}; {}", notes.join("; ")),
    );
    assert!(pass);
}

#[test]
fn criterion_8_training_interference_robustness() {
    let c = calibrated();
    let with = sweep();
    let clean = Scenario::reference().training_interference(false).build().unwrap();
    let without = estimate_pd_many(&clean, &ICBD, &c.thresholds, &grid(), &mc_config(SEED + 1)).unwrap();
    let n = PD_TRIALS as f64;
    let mut worst_z = 0.0f64;
    let mut outliers = Vec::new();
    for (a, b) in with.iter().zip(&without) {
        assert_eq!((a.esnr_db, a.kind), (b.esnr_db, b.kind));
        let sigma = ((a.pd_mc * (1.0 - a.pd_mc) + b.pd_mc * (1.0 - b.pd_mc)) / n).sqrt();
        let diff = (a.pd_mc - b.pd_mc).abs();
        if sigma > 0.0 {
            worst_z = worst_z.max(diff / sigma);
        }
        if diff > 3.0 * sigma {
            outliers.push(format!("{} @ {} dB: {:.4} vs {:.4}", a.kind.name(), a.esnr_db, a.pd_mc, b.pd_mc));
        }
    }
    let pass = outliers.is_empty();
    report(8, pass, &format!("{} points, worst |z| {worst_z:.2} (<= 3), outliers {outliers:?}", with.len()));
    assert!(pass);
}

#[test]
fn criterion_9_determinism_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("det.cfg");
    std::fs::write(
        &cfg,
        "[mc]\nseed = 99\npfa = 1e-3\ntrials_pfa = 20000\ntrials_pd = 1000\nesnr_db = 0:5:30\n\
         detectors = icbd-glrt-he, icbd-rao-he, icbd-wald-he, icbd-phe\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for workers in [1, 4, 8] {
        let out = dir.path().join(format!("w{workers}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_icbd"))
            .args(["--config", cfg.to_str().unwrap(), "--workers", &workers.to_string(), "--out", out.to_str().unwrap(), "simulate"])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        outputs.push(std::fs::read(&out).unwrap());
    }
    let pass = outputs[0] == outputs[1] && outputs[0] == outputs[2] && outputs[0].len() > 100;
    report(9, pass, &format!("CSV of {} bytes identical across 1, 4 and 8 workers: {pass}", outputs[0].len()));
    assert!(pass);
}
