//! Detection problems: covariance model, subspaces, data synthesis and eSNR.
//!
//! Test data under H1 is `x = H·θ + J·φ + n` with `n ~ CN(0, σ²R)`; each
//! training column is `x_l = J·φ_l + n_l` (or just `n_l`) with
//! `n_l ~ CN(0, R)`. Under H0 the signal term is absent.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    c64, ensure_finite, ensure_finite_vector, gram_inverse_quad_form, hermitian_sqrt_inv, hermitian_sqrt_with,
    orth_complement_with, projector_with, ComplexMatrix, ComplexVector, NumericPolicy,
};
use crate::perf::Dims;
use crate::rng::{complex_gaussian_matrix, complex_gaussian_vector, stream};

/// Seed for the frozen H, J, θ₀ and φ draws when none is configured.
pub const DEFAULT_SUBSPACE_SEED: u64 = 0x1CBD_2023;

/// Default training interference-to-noise ratio, per column.
pub const DEFAULT_TRAINING_INR_DB: f64 = 10.0;

const PHASE_SUBSPACE: u64 = 0x5u64 << 56;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Environment {
    /// Test and training noise share the covariance R.
    Homogeneous,
    /// Test noise covariance is σ²R with σ² unknown.
    PartiallyHomogeneous,
}

impl Environment {
    pub fn as_str(self) -> &'static str {
        match self {
            Environment::Homogeneous => "he",
            Environment::PartiallyHomogeneous => "phe",
        }
    }
}

impl std::str::FromStr for Environment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "he" => Ok(Environment::Homogeneous),
            "phe" => Ok(Environment::PartiallyHomogeneous),
            other => Err(Error::InvalidArgument(format!("unknown environment `{other}` (expected he or phe)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    H0,
    H1,
}

/// One test vector and its training set.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub x: ComplexVector,
    pub x_l: ComplexMatrix,
    pub hypothesis: Hypothesis,
}

/// R(i, j) = ε^{|i−j|²}.
pub fn build_covariance(n: usize, epsilon: f64) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("covariance dimension must be at least 1".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    Ok(ComplexMatrix::from_fn(n, n, |i, j| {
        let d = i.abs_diff(j) as i32;
        c64(epsilon.powi(d * d), 0.0)
    }))
}

/// n = R^{1/2}·z with z ~ CN(0, I).
pub fn sample_complex_gaussian<R: Rng + ?Sized>(r: &ComplexMatrix, rng: &mut R) -> Result<ComplexVector> {
    let root = hermitian_sqrt_with(r, &NumericPolicy::default())?;
    Ok(&root * complex_gaussian_vector(rng, r.nrows()))
}

/// θᴴHᴴJ⊥(J⊥ᴴRJ⊥)^{-1}J⊥ᴴHθ.
pub fn esnr_icbd(
    theta: &ComplexVector,
    h: &ComplexMatrix,
    j_perp: &ComplexMatrix,
    r: &ComplexMatrix,
) -> Result<f64> {
    check_dims(theta, h, r)?;
    let root = hermitian_sqrt_with(r, &NumericPolicy::default())?;
    esnr_from_root(theta, h, j_perp, &root)
}

/// [`esnr_icbd`] with R given through a factor F, R = F·Fᴴ. The projected
/// covariance J⊥ᴴFFᴴJ⊥ is never formed; its inverse quadratic form comes
/// from a QR of FᴴJ⊥.
pub fn esnr_from_root(
    theta: &ComplexVector,
    h: &ComplexMatrix,
    j_perp: &ComplexMatrix,
    root: &ComplexMatrix,
) -> Result<f64> {
    check_dims(theta, h, root)?;
    if j_perp.nrows() != root.nrows() {
        return Err(Error::Dimension("J_perp rows must match R".into()));
    }
    let v = j_perp.adjoint() * (h * theta);
    gram_inverse_quad_form(&(root.adjoint() * j_perp), &v)
}

/// θᴴH̄ᴴP⊥_J̄H̄θ with H̄ = R^{-1/2}H and J̄ = R^{-1/2}J.
pub fn esnr_conventional(
    theta: &ComplexVector,
    h: &ComplexMatrix,
    j: &ComplexMatrix,
    r: &ComplexMatrix,
) -> Result<f64> {
    check_dims(theta, h, r)?;
    let whiten = hermitian_sqrt_inv(r)?;
    let h_bar = &whiten * h;
    let j_bar = &whiten * j;
    let v = &h_bar * theta;
    let p = projector_with(&j_bar, &NumericPolicy::default())?;
    let resid = &v - &p * &v;
    Ok(resid.norm_squared())
}

fn check_dims(theta: &ComplexVector, h: &ComplexMatrix, r: &ComplexMatrix) -> Result<()> {
    if h.ncols() != theta.len() || h.nrows() != r.nrows() || r.nrows() != r.ncols() {
        return Err(Error::Dimension(format!(
            "theta {} / H {}x{} / R {}x{}",
            theta.len(),
            h.nrows(),
            h.ncols(),
            r.nrows(),
            r.ncols()
        )));
    }
    Ok(())
}

/// An immutable, validated detection problem.
#[derive(Debug, Clone)]
pub struct Scenario {
    n: usize,
    l: usize,
    p: usize,
    q: usize,
    h: ComplexMatrix,
    j: ComplexMatrix,
    r: ComplexMatrix,
    sigma2: f64,
    environment: Environment,
    training_has_interference: bool,
    training_inr_db: f64,
    theta0: ComplexVector,
    phi: ComplexVector,
    policy: NumericPolicy,
    // derived
    noise_root: ComplexMatrix,
    j_perp: ComplexMatrix,
    base_esnr: f64,
    training_phi_std: f64,
}

impl Scenario {
    pub fn builder(n: usize, l: usize, p: usize, q: usize) -> ScenarioBuilder {
        ScenarioBuilder::new(n, l, p, q)
    }

    /// N = 24, L = 23, p = 2, q = 6, ε = 0.95, homogeneous, clean training.
    pub fn reference() -> ScenarioBuilder {
        ScenarioBuilder::new(24, 23, 2, 6)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn l(&self) -> usize {
        self.l
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn dims(&self) -> Dims {
        Dims { n: self.n, l: self.l, p: self.p, q: self.q }
    }
    pub fn h(&self) -> &ComplexMatrix {
        &self.h
    }
    pub fn j(&self) -> &ComplexMatrix {
        &self.j
    }
    pub fn r(&self) -> &ComplexMatrix {
        &self.r
    }
    pub fn j_perp(&self) -> &ComplexMatrix {
        &self.j_perp
    }
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
    pub fn environment(&self) -> Environment {
        self.environment
    }
    pub fn training_has_interference(&self) -> bool {
        self.training_has_interference
    }
    pub fn training_inr_db(&self) -> f64 {
        self.training_inr_db
    }
    pub fn theta0(&self) -> &ComplexVector {
        &self.theta0
    }
    pub fn phi(&self) -> &ComplexVector {
        &self.phi
    }
    pub fn policy(&self) -> &NumericPolicy {
        &self.policy
    }
    /// eSNR of the unscaled coordinates θ₀.
    pub fn base_esnr(&self) -> f64 {
        self.base_esnr
    }

    /// Amplitude a with esnr_icbd(a·θ₀) = target.
    pub fn scale_to_esnr(&self, target_esnr: f64) -> Result<f64> {
        if !(target_esnr >= 0.0) || !target_esnr.is_finite() {
            return Err(Error::InvalidArgument(format!("eSNR must be finite and nonnegative, got {target_esnr}")));
        }
        if !(self.base_esnr > 0.0) {
            return Err(Error::ZeroBaseEsnr);
        }
        Ok((target_esnr / self.base_esnr).sqrt())
    }

    /// Draws one trial with the signal scaled to `esnr` (linear, not dB).
    pub fn synthesize_trial<R: Rng + ?Sized>(&self, esnr: f64, hypothesis: Hypothesis, rng: &mut R) -> Result<TrialData> {
        let amplitude = match hypothesis {
            Hypothesis::H0 => {
                if !(esnr >= 0.0) {
                    return Err(Error::InvalidArgument(format!("eSNR must be nonnegative, got {esnr}")));
                }
                0.0
            }
            Hypothesis::H1 => self.scale_to_esnr(esnr)?,
        };
        Ok(self.synthesize_with_amplitude(amplitude, hypothesis, rng))
    }

    /// Draw order: test noise, training noise column by column, then the
    /// training interference coordinates when enabled.
    pub fn synthesize_with_amplitude<R: Rng + ?Sized>(&self, amplitude: f64, hypothesis: Hypothesis, rng: &mut R) -> TrialData {
        let z = complex_gaussian_matrix(rng, self.n, self.l + 1);
        let colored = &self.noise_root * z;

        let mut x = colored.column(0).into_owned();
        if self.sigma2 != 1.0 {
            x.scale_mut(self.sigma2.sqrt());
        }
        x += &self.j * &self.phi;
        if hypothesis == Hypothesis::H1 && amplitude != 0.0 {
            x += (&self.h * &self.theta0).scale(amplitude);
        }

        let mut x_l = colored.columns(1, self.l).into_owned();
        if self.training_has_interference {
            let coords = complex_gaussian_matrix(rng, self.q, self.l).scale(self.training_phi_std);
            x_l += &self.j * coords;
        }
        TrialData { x, x_l, hypothesis }
    }
}

/// Builder for [`Scenario`]; unset subspaces are drawn from the subspace seed.
#[derive(Debug, Clone)]
pub struct ScenarioBuilder {
    n: usize,
    l: usize,
    p: usize,
    q: usize,
    epsilon: f64,
    covariance: Option<ComplexMatrix>,
    h: Option<ComplexMatrix>,
    j: Option<ComplexMatrix>,
    theta0: Option<ComplexVector>,
    phi: Option<ComplexVector>,
    sigma2: f64,
    environment: Environment,
    training_has_interference: bool,
    training_inr_db: f64,
    subspace_seed: u64,
    policy: NumericPolicy,
}

impl ScenarioBuilder {
    pub fn new(n: usize, l: usize, p: usize, q: usize) -> Self {
        ScenarioBuilder {
            n,
            l,
            p,
            q,
            epsilon: 0.95,
            covariance: None,
            h: None,
            j: None,
            theta0: None,
            phi: None,
            sigma2: 1.0,
            environment: Environment::Homogeneous,
            training_has_interference: false,
            training_inr_db: DEFAULT_TRAINING_INR_DB,
            subspace_seed: DEFAULT_SUBSPACE_SEED,
            policy: NumericPolicy::default(),
        }
    }

    pub fn l(mut self, l: usize) -> Self {
        self.l = l;
        self
    }
    /// Use R(i,j) = ε^{|i−j|²}; ignored when an explicit covariance is set.
    pub fn epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
    pub fn covariance(mut self, r: ComplexMatrix) -> Self {
        self.covariance = Some(r);
        self
    }
    pub fn signal_subspace(mut self, h: ComplexMatrix) -> Self {
        self.h = Some(h);
        self
    }
    pub fn interference_subspace(mut self, j: ComplexMatrix) -> Self {
        self.j = Some(j);
        self
    }
    pub fn theta0(mut self, theta0: ComplexVector) -> Self {
        self.theta0 = Some(theta0);
        self
    }
    pub fn phi(mut self, phi: ComplexVector) -> Self {
        self.phi = Some(phi);
        self
    }
    pub fn sigma2(mut self, sigma2: f64) -> Self {
        self.sigma2 = sigma2;
        self
    }
    pub fn environment(mut self, environment: Environment) -> Self {
        self.environment = environment;
        self
    }
    pub fn training_interference(mut self, enabled: bool) -> Self {
        self.training_has_interference = enabled;
        self
    }
    pub fn training_inr_db(mut self, inr_db: f64) -> Self {
        self.training_inr_db = inr_db;
        self
    }
    pub fn subspace_seed(mut self, seed: u64) -> Self {
        self.subspace_seed = seed;
        self
    }
    pub fn policy(mut self, policy: NumericPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn build(self) -> Result<Scenario> {
        let ScenarioBuilder { n, l, p, q, .. } = self;
        if n == 0 || p == 0 || q == 0 {
            return Err(Error::InvalidArgument("N, p and q must all be at least 1".into()));
        }
        if p + q > n {
            return Err(Error::InvalidArgument(format!("p + q = {} exceeds N = {n}", p + q)));
        }
        if l < n - q {
            return Err(Error::InvalidArgument(format!("training size L = {l} is below N - q = {}", n - q)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if self.environment == Environment::Homogeneous && self.sigma2 != 1.0 {
            return Err(Error::InvalidArgument("homogeneous environment requires sigma2 = 1".into()));
        }
        if !self.training_inr_db.is_finite() {
            return Err(Error::InvalidArgument("training INR must be finite".into()));
        }

        let seed = self.subspace_seed;
        let h = match self.h {
            Some(h) => h,
            None => complex_gaussian_matrix(&mut stream(seed, PHASE_SUBSPACE, 0), n, p),
        };
        let j = match self.j {
            Some(j) => j,
            None => complex_gaussian_matrix(&mut stream(seed, PHASE_SUBSPACE, 1), n, q),
        };
        let theta0 = match self.theta0 {
            Some(t) => t,
            None => complex_gaussian_vector(&mut stream(seed, PHASE_SUBSPACE, 2), p),
        };
        let phi = match self.phi {
            Some(f) => f,
            None => complex_gaussian_vector(&mut stream(seed, PHASE_SUBSPACE, 3), q),
        };
        let r = match self.covariance {
            Some(r) => r,
            None => build_covariance(n, self.epsilon)?,
        };

        ensure_finite(&h, "signal subspace H")?;
        ensure_finite(&j, "interference subspace J")?;
        ensure_finite(&r, "covariance R")?;
        ensure_finite_vector(&theta0, "theta0")?;
        ensure_finite_vector(&phi, "phi")?;
        if h.shape() != (n, p) || j.shape() != (n, q) || r.shape() != (n, n) || theta0.len() != p || phi.len() != q {
            return Err(Error::Dimension(format!(
                "expected H {n}x{p}, J {n}x{q}, R {n}x{n}, theta0 {p}, phi {q}; got H {}x{}, J {}x{}, R {}x{}, theta0 {}, phi {}",
                h.nrows(), h.ncols(), j.nrows(), j.ncols(), r.nrows(), r.ncols(), theta0.len(), phi.len()
            )));
        }

        let policy = self.policy;
        let noise_root = hermitian_sqrt_with(&r, &policy)?;
        projector_with(&h, &policy)?;
        let j_perp = orth_complement_with(&j, &policy)?;
        // the signal subspace must keep full rank after interference rejection
        let h_perp = j_perp.adjoint() * &h;
        if !(h_perp.norm() > policy.rank_ratio * h.norm()) {
            return Err(Error::RankDeficient { rows: n - q, cols: p });
        }
        projector_with(&h_perp, &policy)?;
        // computed from the same factor that colors the noise, so the
        // amplitude scaling matches the simulated covariance exactly
        let base_esnr = esnr_from_root(&theta0, &h, &j_perp, &noise_root)?;

        let inr = 10f64.powf(self.training_inr_db / 10.0);
        let noise_power = r.trace().re;
        let interference_gain = (j.adjoint() * &j).trace().re;
        let training_phi_std = (inr * noise_power / interference_gain).sqrt();

        Ok(Scenario {
            n,
            l,
            p,
            q,
            h,
            j,
            r,
            sigma2: self.sigma2,
            environment: self.environment,
            training_has_interference: self.training_has_interference,
            training_inr_db: self.training_inr_db,
            theta0,
            phi,
            policy,
            noise_root,
            j_perp,
            base_esnr,
            training_phi_std,
        })
    }
}
