//! Randomized residual checks for the algebraic identities the detectors
//! and the eSNR formula rest on.
//!
//! Each identity is evaluated on independent random instances; instance `i`
//! draws from `rng::stream(seed, phase, i)`, so a failure can be replayed
//! from `(seed, worst_instance)` alone.

use rayon::prelude::*;

use crate::detectors::{build_workspace, conventional_statistics, Projection, Statistics};
use crate::error::{Error, Result};
use crate::linalg::{
    cholesky, complement_projector, hermitian_inverse, hermitian_sqrt, hermitian_sqrt_inv, ensure_finite, orth_complement,
    polar_decompose, projector, quad_form, relative_difference, relative_residual, sample_covariance, symmetrize,
    C64, ComplexMatrix,
};
use crate::perf::Dims;
use crate::rng::{complex_gaussian_matrix, complex_gaussian_vector, stream, TrialRng};
use crate::scenario::{esnr_conventional, esnr_icbd, TrialData, Hypothesis};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
/// Eigenvalues of random covariances are clipped to at least max / this.
pub const MAX_CONDITION: f64 = 1e6;

const PHASE_CANCELLATION: u64 = 0xA1;
const PHASE_EQUIVALENCE: u64 = 0xB1;
const PHASE_RELATIONS: u64 = 0xC1;

/// Identity groups selectable from the command line.
pub const GROUPS: [&str; 3] = ["cancellation", "equivalence", "relations"];

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub identity_id: String,
    pub instances: usize,
    pub max_relative_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub seed: u64,
    /// Instance index attaining the maximum residual.
    pub worst_instance: usize,
}

impl IdentityReport {
    fn from_residuals(id: &str, seed: u64, tolerance: f64, residuals: &[f64]) -> Self {
        let (worst_instance, max) = residuals
            .iter()
            .copied()
            .enumerate()
            // NaN counts as the worst possible residual
            .map(|(i, r)| (i, if r.is_nan() { f64::INFINITY } else { r }))
            .fold((0, 0.0f64), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc });
        IdentityReport {
            identity_id: id.to_string(),
            instances: residuals.len(),
            max_relative_residual: max,
            tolerance,
            pass: max < tolerance,
            seed,
            worst_instance,
        }
    }
}

/// Random Hermitian positive definite matrix with condition number at most
/// [`MAX_CONDITION`].
pub fn random_covariance(rng: &mut TrialRng, n: usize) -> Result<ComplexMatrix> {
    let a = complex_gaussian_matrix(rng, n, n);
    let m = symmetrize(&(&a * a.adjoint()));
    ensure_finite(&m, "random covariance")?;
    let eig = m.symmetric_eigen();
    let top = eig.eigenvalues.max();
    let clipped = eig.eigenvalues.map(|v| C64::from(v.max(top / MAX_CONDITION)));
    let v = &eig.eigenvectors;
    Ok(symmetrize(&(v * ComplexMatrix::from_diagonal(&clipped) * v.adjoint())))
}

/// Runs `f` on `instances` independent streams and collects one residual
/// vector per instance (one entry per identity).
fn run_instances(
    seed: u64,
    phase: u64,
    instances: usize,
    width: usize,
    f: impl Fn(&mut TrialRng) -> Result<Vec<f64>> + Sync,
) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Result<Vec<f64>>> = (0..instances)
        .into_par_iter()
        .map(|i| f(&mut stream(seed, phase, i as u64)))
        .collect();
    let mut columns = vec![Vec::with_capacity(instances); width];
    for row in rows {
        for (c, r) in columns.iter_mut().zip(row?) {
            c.push(r);
        }
    }
    Ok(columns)
}

fn reports(ids: &[&str], seed: u64, tolerance: f64, columns: Vec<Vec<f64>>) -> Vec<IdentityReport> {
    ids.iter()
        .zip(columns)
        .map(|(id, col)| IdentityReport::from_residuals(id, seed, tolerance, &col))
        .collect()
}

const CANCELLATION_IDS: [&str; 3] = ["cancellation.whitened-complement", "cancellation.partitioned-inverse", "cancellation.esnr"];

/// Interference-cancellation identities for random R, J (and H, θ for eSNR):
/// - R⁻¹ − R⁻¹J_u(J_uᴴR⁻¹J_u)⁻¹J_uᴴR⁻¹ = J⊥(J⊥ᴴRJ⊥)⁻¹J⊥ᴴ
/// - the same identity rotated into the basis U = [J_u, J⊥], where the right
///   side is block-diagonal with zero leading block and inverse trailing block
/// - equality of the projected and whitened eSNR expressions.
pub fn check_cancellation(n: usize, q: usize, seed: u64, instances: usize, tolerance: f64) -> Result<Vec<IdentityReport>> {
    if q == 0 || q >= n {
        return Err(Error::SubspaceFillsSpace { n, q });
    }
    let p = (n - q).min(2);
    let columns = run_instances(seed, PHASE_CANCELLATION, instances, 3, |rng| {
        let r = random_covariance(rng, n)?;
        let j = complex_gaussian_matrix(rng, n, q);
        let h = complex_gaussian_matrix(rng, n, p);
        let theta = complex_gaussian_vector(rng, p);

        let (j_u, _) = polar_decompose(&j)?;
        let j_perp = orth_complement(&j)?;
        // the inner inverses are applied as Cholesky solves; explicit inverses
        // of the small blocks cost about three digits at cond(R) = 1e6
        let r_inv = hermitian_inverse(&r)?;
        let r_inv_j = cholesky(&r)?.solve(&j_u);
        let inner = cholesky(&(j_u.adjoint() * &r_inv_j))?;
        let lhs = &r_inv - &r_inv_j * inner.solve(&r_inv_j.adjoint());
        let r22_inv = hermitian_inverse(&(j_perp.adjoint() * &r * &j_perp))?;
        let rhs = &j_perp * &r22_inv * j_perp.adjoint();
        let whitened = relative_residual(&lhs, &rhs);

        let mut u = ComplexMatrix::zeros(n, n);
        u.columns_mut(0, q).copy_from(&j_u);
        u.columns_mut(q, n - q).copy_from(&j_perp);
        let g = hermitian_inverse(&(u.adjoint() * &r * &u))?;
        let lead = cholesky(&g.view((0, 0), (q, q)).into_owned())?;
        let left = g.columns(0, q).into_owned();
        let reduced = &g - &left * lead.solve(&left.adjoint());
        let mut block = ComplexMatrix::zeros(n, n);
        block.view_mut((q, q), (n - q, n - q)).copy_from(&r22_inv);
        let partitioned = relative_residual(&reduced, &block);

        let esnr = relative_difference(esnr_icbd(&theta, &h, &j_perp, &r)?, esnr_conventional(&theta, &h, &j, &r)?);
        Ok(vec![whitened, partitioned, esnr])
    })?;
    Ok(reports(&CANCELLATION_IDS, seed, tolerance, columns))
}

const EQUIVALENCE_IDS: [&str; 9] = [
    "equivalence.complement-projector",
    "equivalence.whitened-projector",
    "equivalence.signal-energy",
    "equivalence.total-energy",
    "equivalence.residual-energy",
    "equivalence.glrt",
    "equivalence.rao",
    "equivalence.wald",
    "equivalence.phe",
];

/// Equivalence of projected and full-dimension processing when L ≥ N, on
/// random x, X_L, H, J:
/// - P over S^{1/2}J⊥ equals the complement projector of S^{-1/2}J
/// - S^{-1/2}P_{P⊥_J̃H̃}S^{-1/2} = J⊥S_J⊥^{-1/2}P_H̃S_J⊥^{-1/2}J⊥ᴴ
/// - the three quadratic forms (signal, total and residual energy)
/// - each projected statistic equals its conventional counterpart.
pub fn check_equivalence(dims: &Dims, seed: u64, instances: usize, tolerance: f64) -> Result<Vec<IdentityReport>> {
    let Dims { n, l, p, q } = *dims;
    if l < n {
        return Err(Error::ConventionalNeedsInvertibleScm { n, l });
    }
    if p == 0 || q == 0 || p + q > n {
        return Err(Error::InvalidArgument(format!("need p, q >= 1 and p + q <= N, got p={p}, q={q}, N={n}")));
    }
    let columns = run_instances(seed, PHASE_EQUIVALENCE, instances, EQUIVALENCE_IDS.len(), |rng| {
        let h = complex_gaussian_matrix(rng, n, p);
        let j = complex_gaussian_matrix(rng, n, q);
        let x = complex_gaussian_vector(rng, n);
        let x_l = complex_gaussian_matrix(rng, n, l);

        let s = sample_covariance(&x_l);
        let s_half = hermitian_sqrt(&s)?;
        let s_inv_half = hermitian_sqrt_inv(&s)?;
        let j_perp = orth_complement(&j)?;
        let j_t = &s_inv_half * &j;
        let h_t = &s_inv_half * &h;
        let x_t = &s_inv_half * &x;

        let pj_perp = complement_projector(&j_t)?;
        let complement = relative_residual(&projector(&(&s_half * &j_perp))?, &pj_perp);

        let p_full = projector(&(&pj_perp * &h_t))?;
        let lhs = &s_inv_half * &p_full * &s_inv_half;
        let s_perp = j_perp.adjoint() * &s * &j_perp;
        let w = hermitian_sqrt_inv(&s_perp)?;
        let h_red = &w * j_perp.adjoint() * &h;
        let p_red = projector(&h_red)?;
        let rhs = &j_perp * &w * &p_red * &w * j_perp.adjoint();
        let whitened = relative_residual(&lhs, &rhs);

        let y_t = &w * j_perp.adjoint() * &x;
        let signal_red = quad_form(&p_red, &y_t);
        let signal_full = quad_form(&p_full, &x_t);
        let total_red = y_t.norm_squared();
        let total_full = quad_form(&pj_perp, &x_t);
        let resid_red = total_red - signal_red;
        let resid_full = total_full - signal_full;

        let trial = TrialData { x: x.clone(), x_l: x_l.clone(), hypothesis: Hypothesis::H1 };
        let icbd = build_workspace(&trial, &Projection::with_basis(&h, j_perp.clone())?)?.statistics();
        let conv = conventional_statistics(&x, &x_l, &h, &j)?;
        let stat = |f: fn(&Statistics) -> f64| relative_difference(f(&icbd), f(&conv));
        Ok(vec![
            complement,
            whitened,
            relative_difference(signal_red, signal_full),
            relative_difference(total_red, total_full),
            relative_difference(resid_red, resid_full),
            stat(|s| s.glrt),
            stat(|s| s.rao),
            stat(|s| s.wald),
            stat(|s| s.phe),
        ])
    })?;
    Ok(reports(&EQUIVALENCE_IDS, seed, tolerance, columns))
}

const RELATION_IDS: [&str; 3] = ["relations.rao", "relations.wald", "relations.phe"];

/// Rao, Wald and PHE statistics as functions of (GLRT, loss factor) on random
/// trials with N − q ≤ L.
pub fn check_relations(dims: &Dims, seed: u64, instances: usize, tolerance: f64) -> Result<Vec<IdentityReport>> {
    dims.validate()?;
    let Dims { n, l, p, q } = *dims;
    let columns = run_instances(seed, PHASE_RELATIONS, instances, 3, |rng| {
        let h = complex_gaussian_matrix(rng, n, p);
        let j = complex_gaussian_matrix(rng, n, q);
        let trial = TrialData {
            x: complex_gaussian_vector(rng, n),
            x_l: complex_gaussian_matrix(rng, n, l),
            hypothesis: Hypothesis::H1,
        };
        let s = build_workspace(&trial, &Projection::new(&h, &j)?)?.statistics();
        let (t, b) = (s.glrt, s.loss_factor);
        Ok(vec![
            relative_difference(s.rao, t * b / (1.0 + t)),
            relative_difference(s.wald, t / b),
            relative_difference(s.phe, t / (1.0 - b + t)),
        ])
    })?;
    Ok(reports(&RELATION_IDS, seed, tolerance, columns))
}
