//! Detector statistics.
//!
//! The projected (ICBD) detectors work on `y = J⊥ᴴx` and `Y_L = J⊥ᴴX_L`,
//! whitened by the projected sample covariance `S_J⊥ = Y_L·Y_Lᴴ`. The
//! conventional detectors whiten the full-dimension data by `S^{-1/2}` and
//! need L ≥ N.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{
    complement_projector, gram_factor, hermitian_sqrt_inv_with, hstack, whiten_by_factor, orth_complement_with, projector_with,
    quad_form, sample_covariance, ComplexMatrix, ComplexVector, NumericPolicy,
};
use crate::scenario::{Scenario, TrialData};

/// Algebraic shape of a statistic; the projected and conventional detectors
/// of the same form coincide when L ≥ N and the training is interference free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatisticForm {
    Glrt,
    Rao,
    Wald,
    /// GLRT, Rao and Wald coincide in the partially homogeneous environment.
    Phe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetectorKind {
    IcbdGlrtHe,
    IcbdRaoHe,
    IcbdWaldHe,
    IcbdPhe,
    ConvGlrtHe,
    ConvRaoHe,
    ConvWaldHe,
    ConvPhe,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 8] = [
        DetectorKind::IcbdGlrtHe,
        DetectorKind::IcbdRaoHe,
        DetectorKind::IcbdWaldHe,
        DetectorKind::IcbdPhe,
        DetectorKind::ConvGlrtHe,
        DetectorKind::ConvRaoHe,
        DetectorKind::ConvWaldHe,
        DetectorKind::ConvPhe,
    ];

    pub const ICBD: [DetectorKind; 4] = [
        DetectorKind::IcbdGlrtHe,
        DetectorKind::IcbdRaoHe,
        DetectorKind::IcbdWaldHe,
        DetectorKind::IcbdPhe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::IcbdGlrtHe => "icbd-glrt-he",
            DetectorKind::IcbdRaoHe => "icbd-rao-he",
            DetectorKind::IcbdWaldHe => "icbd-wald-he",
            DetectorKind::IcbdPhe => "icbd-phe",
            DetectorKind::ConvGlrtHe => "conv-glrt-he",
            DetectorKind::ConvRaoHe => "conv-rao-he",
            DetectorKind::ConvWaldHe => "conv-wald-he",
            DetectorKind::ConvPhe => "conv-phe",
        }
    }

    pub fn form(self) -> StatisticForm {
        match self {
            DetectorKind::IcbdGlrtHe | DetectorKind::ConvGlrtHe => StatisticForm::Glrt,
            DetectorKind::IcbdRaoHe | DetectorKind::ConvRaoHe => StatisticForm::Rao,
            DetectorKind::IcbdWaldHe | DetectorKind::ConvWaldHe => StatisticForm::Wald,
            DetectorKind::IcbdPhe | DetectorKind::ConvPhe => StatisticForm::Phe,
        }
    }

    pub fn is_icbd(self) -> bool {
        matches!(
            self,
            DetectorKind::IcbdGlrtHe | DetectorKind::IcbdRaoHe | DetectorKind::IcbdWaldHe | DetectorKind::IcbdPhe
        )
    }

    pub fn is_conventional(self) -> bool {
        !self.is_icbd()
    }

    /// The projected detector with the same form.
    pub fn icbd_counterpart(self) -> DetectorKind {
        match self.form() {
            StatisticForm::Glrt => DetectorKind::IcbdGlrtHe,
            StatisticForm::Rao => DetectorKind::IcbdRaoHe,
            StatisticForm::Wald => DetectorKind::IcbdWaldHe,
            StatisticForm::Phe => DetectorKind::IcbdPhe,
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_lowercase().replace('_', "-");
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.name() == wanted)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown detector `{}`", s.trim())))
    }
}

/// The four statistics of one family plus the loss factor (β is only
/// meaningful for the projected family).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Statistics {
    pub glrt: f64,
    pub rao: f64,
    pub wald: f64,
    pub phe: f64,
    pub loss_factor: f64,
}

impl Statistics {
    pub fn get(&self, form: StatisticForm) -> f64 {
        match form {
            StatisticForm::Glrt => self.glrt,
            StatisticForm::Rao => self.rao,
            StatisticForm::Wald => self.wald,
            StatisticForm::Phe => self.phe,
        }
    }
}

/// Per-scenario pieces of the projection: J⊥ and H_J⊥ = J⊥ᴴH.
#[derive(Debug, Clone)]
pub struct Projection {
    j_perp: ComplexMatrix,
    h_perp: ComplexMatrix,
}

impl Projection {
    pub fn new(h: &ComplexMatrix, j: &ComplexMatrix) -> Result<Self> {
        let j_perp = orth_complement_with(j, &NumericPolicy::default())?;
        Self::with_basis(h, j_perp)
    }

    /// Uses the supplied orthonormal complement basis as is.
    pub fn with_basis(h: &ComplexMatrix, j_perp: ComplexMatrix) -> Result<Self> {
        if h.nrows() != j_perp.nrows() {
            return Err(Error::Dimension(format!("H has {} rows, J_perp has {}", h.nrows(), j_perp.nrows())));
        }
        let h_perp = j_perp.adjoint() * h;
        Ok(Projection { j_perp, h_perp })
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        let j_perp = s.j_perp().clone();
        let h_perp = j_perp.adjoint() * s.h();
        Projection { j_perp, h_perp }
    }

    pub fn j_perp(&self) -> &ComplexMatrix {
        &self.j_perp
    }

    pub fn h_perp(&self) -> &ComplexMatrix {
        &self.h_perp
    }
}

/// How data are whitened against a sample covariance S = X·Xᴴ. Every
/// statistic depends on the data only through S^{-1}, so any factor W with
/// WᴴW = S^{-1} gives the same values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Whitening {
    /// W = T^{-ᴴ} with T the triangular factor of a QR of the training data.
    /// S is never formed, which keeps low-power directions accurate when the
    /// noise covariance is badly conditioned.
    #[default]
    TrainingQr,
    /// W = S^{-1/2} from an eigendecomposition of the explicit S.
    Hermitian,
}

/// Everything the projected statistics need for one trial.
#[derive(Debug, Clone)]
pub struct IcbdWorkspace {
    pub y: ComplexVector,
    pub y_l: ComplexMatrix,
    pub y_tilde: ComplexVector,
    pub h_tilde: ComplexMatrix,
    pub p_signal: ComplexMatrix,
    signal_energy: f64,
    residual_energy: f64,
    total_energy: f64,
    degenerate_norm: f64,
}

pub fn build_workspace(trial: &TrialData, projection: &Projection) -> Result<IcbdWorkspace> {
    build_workspace_with(trial, projection, Whitening::default(), &NumericPolicy::default())
}

pub fn build_workspace_with(
    trial: &TrialData,
    projection: &Projection,
    whitening: Whitening,
    policy: &NumericPolicy,
) -> Result<IcbdWorkspace> {
    let j_perp = &projection.j_perp;
    let (n, m) = j_perp.shape();
    if trial.x.len() != n || trial.x_l.nrows() != n {
        return Err(Error::Dimension(format!(
            "trial has dimension {} / {}, projection expects {n}",
            trial.x.len(),
            trial.x_l.nrows()
        )));
    }
    if trial.x_l.ncols() < m {
        return Err(Error::DegenerateTraining);
    }
    let j_adj = j_perp.adjoint();
    let y = &j_adj * &trial.x;
    let y_l = &j_adj * &trial.x_l;

    let (y_tilde, h_tilde) = match whitening {
        Whitening::Hermitian => {
            let w = hermitian_sqrt_inv_with(&sample_covariance(&y_l), policy).map_err(|_| Error::DegenerateTraining)?;
            (&w * &y, &w * &projection.h_perp)
        }
        Whitening::TrainingQr => {
            let t = gram_factor(&y_l).map_err(|_| Error::DegenerateTraining)?;
            let w = whiten_by_factor(&t, &hstack(&ComplexMatrix::from_column_slice(m, 1, y.as_slice()), &projection.h_perp)?)
                .map_err(|_| Error::DegenerateTraining)?;
            (w.column(0).into_owned(), w.columns(1, w.ncols() - 1).into_owned())
        }
    };
    if y_tilde.iter().chain(h_tilde.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::DegenerateTraining);
    }

    let p_signal = projector_with(&h_tilde, policy)?;
    let projected = &p_signal * &y_tilde;
    let signal_energy = y_tilde.dotc(&projected).re.max(0.0);
    let residual_energy = (&y_tilde - &projected).norm_squared();
    let total_energy = y_tilde.norm_squared();

    Ok(IcbdWorkspace {
        y,
        y_l,
        y_tilde,
        h_tilde,
        p_signal,
        signal_energy,
        residual_energy,
        total_energy,
        degenerate_norm: policy.degenerate_norm,
    })
}

impl IcbdWorkspace {
    /// Projected sample covariance S_J⊥ = Y_L·Y_Lᴴ.
    pub fn s_jperp(&self) -> ComplexMatrix {
        sample_covariance(&self.y_l)
    }

    /// ỹᴴPỹ
    pub fn signal_energy(&self) -> f64 {
        self.signal_energy
    }

    /// ỹᴴP⊥ỹ
    pub fn residual_energy(&self) -> f64 {
        self.residual_energy
    }

    /// ỹᴴỹ
    pub fn total_energy(&self) -> f64 {
        self.total_energy
    }

    /// All four statistics. PHE is NaN if the whitened test vector vanishes.
    pub fn statistics(&self) -> Statistics {
        Statistics {
            glrt: icbd_glrt_he(self),
            rao: icbd_rao_he(self),
            wald: icbd_wald_he(self),
            phe: icbd_phe(self).unwrap_or(f64::NAN),
            loss_factor: loss_factor(self),
        }
    }
}

pub fn icbd_glrt_he(w: &IcbdWorkspace) -> f64 {
    w.signal_energy / (1.0 + w.residual_energy)
}

pub fn icbd_rao_he(w: &IcbdWorkspace) -> f64 {
    w.signal_energy / ((1.0 + w.total_energy) * (1.0 + w.residual_energy))
}

pub fn icbd_wald_he(w: &IcbdWorkspace) -> f64 {
    w.signal_energy
}

/// Rayleigh quotient ỹᴴPỹ / ỹᴴỹ; scale invariant in the test data.
pub fn icbd_phe(w: &IcbdWorkspace) -> Result<f64> {
    if w.total_energy.sqrt() < w.degenerate_norm {
        return Err(Error::DegenerateTestVector);
    }
    Ok((w.signal_energy / w.total_energy).min(1.0))
}

pub fn loss_factor(w: &IcbdWorkspace) -> f64 {
    1.0 / (1.0 + w.residual_energy)
}

/// Conventional statistics from the full-dimension whitened quantities
/// x̃ = Wx, J̃ = WJ, H̃ = WH and B = [H, J]. `loss_factor` carries
/// 1/(1 + x̃ᴴP⊥_B̃x̃).
pub fn conventional_statistics(
    x: &ComplexVector,
    x_l: &ComplexMatrix,
    h: &ComplexMatrix,
    j: &ComplexMatrix,
) -> Result<Statistics> {
    conventional_statistics_with(x, x_l, h, j, Whitening::default())
}

pub fn conventional_statistics_with(
    x: &ComplexVector,
    x_l: &ComplexMatrix,
    h: &ComplexMatrix,
    j: &ComplexMatrix,
    whitening: Whitening,
) -> Result<Statistics> {
    let (n, l) = x_l.shape();
    if l < n {
        return Err(Error::ConventionalNeedsInvertibleScm { n, l });
    }
    if x.len() != n || h.nrows() != n || j.nrows() != n {
        return Err(Error::Dimension("conventional detector inputs disagree on N".into()));
    }
    let policy = NumericPolicy::default();
    let singular = |_| Error::ConventionalNeedsInvertibleScm { n, l };
    let (x_t, h_t, j_t) = match whitening {
        Whitening::Hermitian => {
            let w = hermitian_sqrt_inv_with(&sample_covariance(x_l), &policy).map_err(singular)?;
            (&w * x, &w * h, &w * j)
        }
        Whitening::TrainingQr => {
            let t = gram_factor(x_l).map_err(singular)?;
            let (p, q) = (h.ncols(), j.ncols());
            let all = hstack(&hstack(&ComplexMatrix::from_column_slice(n, 1, x.as_slice()), h)?, j)?;
            let w = whiten_by_factor(&t, &all).map_err(singular)?;
            (w.column(0).into_owned(), w.columns(1, p).into_owned(), w.columns(1 + p, q).into_owned())
        }
    };
    let b_t = hstack(&h_t, &j_t)?;

    let pj_perp = complement_projector(&j_t)?;
    let p_signal = projector_with(&(&pj_perp * &h_t), &policy)?;
    let pb_perp = complement_projector(&b_t)?;

    let signal = quad_form(&p_signal, &x_t);
    let outside_j = quad_form(&pj_perp, &x_t).max(0.0);
    let outside_b = quad_form(&pb_perp, &x_t).max(0.0);

    let phe = if outside_j.sqrt() < policy.degenerate_norm {
        f64::NAN
    } else {
        signal / outside_j
    };
    Ok(Statistics {
        glrt: signal / (1.0 + outside_j - signal),
        rao: signal / ((1.0 + outside_j) * (1.0 + outside_b)),
        wald: signal,
        phe,
        loss_factor: 1.0 / (1.0 + outside_b),
    })
}

pub fn conv_glrt_he(x: &ComplexVector, x_l: &ComplexMatrix, h: &ComplexMatrix, j: &ComplexMatrix) -> Result<f64> {
    conventional_statistics(x, x_l, h, j).map(|s| s.glrt)
}

pub fn conv_rao_he(x: &ComplexVector, x_l: &ComplexMatrix, h: &ComplexMatrix, j: &ComplexMatrix) -> Result<f64> {
    conventional_statistics(x, x_l, h, j).map(|s| s.rao)
}

pub fn conv_wald_he(x: &ComplexVector, x_l: &ComplexMatrix, h: &ComplexMatrix, j: &ComplexMatrix) -> Result<f64> {
    conventional_statistics(x, x_l, h, j).map(|s| s.wald)
}

pub fn conv_phe(x: &ComplexVector, x_l: &ComplexMatrix, h: &ComplexMatrix, j: &ComplexMatrix) -> Result<f64> {
    let s = conventional_statistics(x, x_l, h, j)?;
    if s.phe.is_nan() {
        Err(Error::DegenerateTestVector)
    } else {
        Ok(s.phe)
    }
}

/// Evaluates a fixed set of detectors on trials of one scenario, sharing one
/// projected workspace and one conventional whitening per trial.
#[derive(Debug, Clone)]
pub struct DetectorBank {
    kinds: Vec<DetectorKind>,
    projection: Projection,
    h: ComplexMatrix,
    j: ComplexMatrix,
    policy: NumericPolicy,
    whitening: Whitening,
}

impl DetectorBank {
    pub fn new(scenario: &Scenario, kinds: &[DetectorKind]) -> Result<Self> {
        if kinds.iter().any(|k| k.is_conventional()) && scenario.l() < scenario.n() {
            return Err(Error::ConventionalNeedsInvertibleScm { n: scenario.n(), l: scenario.l() });
        }
        Ok(DetectorBank {
            kinds: kinds.to_vec(),
            projection: Projection::from_scenario(scenario),
            h: scenario.h().clone(),
            j: scenario.j().clone(),
            policy: *scenario.policy(),
            whitening: Whitening::default(),
        })
    }

    pub fn with_whitening(mut self, whitening: Whitening) -> Self {
        self.whitening = whitening;
        self
    }

    pub fn kinds(&self) -> &[DetectorKind] {
        &self.kinds
    }

    /// Statistic values in the order of [`DetectorBank::kinds`].
    pub fn evaluate(&self, trial: &TrialData) -> Result<Vec<f64>> {
        let icbd = if self.kinds.iter().any(|k| k.is_icbd()) {
            let ws = build_workspace_with(trial, &self.projection, self.whitening, &self.policy)?;
            Some(ws.statistics())
        } else {
            None
        };
        let conv = if self.kinds.iter().any(|k| k.is_conventional()) {
            Some(conventional_statistics_with(&trial.x, &trial.x_l, &self.h, &self.j, self.whitening)?)
        } else {
            None
        };
        self.kinds
            .iter()
            .map(|k| {
                let stats = if k.is_icbd() { icbd } else { conv }.expect("family evaluated above");
                let v = stats.get(k.form());
                if v.is_nan() {
                    Err(Error::DegenerateTestVector)
                } else {
                    Ok(v)
                }
            })
            .collect()
    }
}
