//! Analytic performance of the projected detectors.
//!
//! Conditioned on the loss factor β, the GLRT statistic T follows a complex
//! F law with `p` and `L − N + q + 1` complex degrees of freedom and
//! noncentrality ρβ; β itself is Beta(L − N + p + q + 1, N − p − q). The
//! Rao, Wald and PHE statistics are monotone in T at fixed β, so each
//! probability is an integral over β of a complex-F survival function.
//!
//! Convention: with `a` complex DOFs, X = Σ|z_i|² for z_i ~ CN(μ_i, 1), so X is
//! Gamma(a) shaped when central and a Poisson(δ) mixture of Gamma(a + k)
//! otherwise, δ = Σ|μ_i|². T = X / Y with Y an independent central variate
//! with `b` complex DOFs, so T/(1 + T) given k is Beta(a + k, b).

use std::sync::OnceLock;

use statrs::function::beta::{beta_reg, ln_beta};

use crate::detectors::{DetectorKind, StatisticForm};
use crate::error::{Error, Result};

/// Remaining Poisson mass at which the noncentral series stops.
const POISSON_TAIL: f64 = 1e-12;
const QUADRATURE_ORDER: usize = 96;
/// Uniform panels the β-interval is split into before applying Gauss–Legendre.
const QUADRATURE_PANELS: usize = 8;

/// Problem dimensions relevant to the distribution theory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub l: usize,
    pub p: usize,
    pub q: usize,
}

impl Dims {
    pub const REFERENCE: Dims = Dims { n: 24, l: 23, p: 2, q: 6 };

    pub fn validate(&self) -> Result<()> {
        let Dims { n, l, p, q } = *self;
        if p == 0 || q == 0 || p + q > n {
            return Err(Error::InvalidArgument(format!("need p, q >= 1 and p + q <= N (N={n}, p={p}, q={q})")));
        }
        if l + q < n {
            return Err(Error::InvalidArgument(format!("need L >= N - q (N={n}, L={l}, q={q})")));
        }
        Ok(())
    }

    /// Complex DOFs (numerator, denominator) of the GLRT statistic.
    pub fn f_dofs(&self) -> (usize, usize) {
        (self.p, self.l + self.q + 1 - self.n)
    }

    /// Parameters (a, b) of the loss-factor law. `b == 0` when p + q = N,
    /// in which case β ≡ 1.
    pub fn beta_params(&self) -> (usize, usize) {
        (self.l + self.p + self.q + 1 - self.n, self.n - self.p - self.q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FDistSpec {
    pub a: usize,
    pub b: usize,
    pub delta: f64,
}

impl FDistSpec {
    pub fn new(a: usize, b: usize, delta: f64) -> Result<Self> {
        if a == 0 || b == 0 {
            return Err(Error::InvalidArgument(format!("complex F needs a, b >= 1 (a={a}, b={b})")));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("noncentrality must be finite and >= 0, got {delta}")));
        }
        Ok(FDistSpec { a, b, delta })
    }

    pub fn central(a: usize, b: usize) -> Result<Self> {
        Self::new(a, b, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaDistSpec {
    pub a: usize,
    pub b: usize,
}

impl BetaDistSpec {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == 0 || b == 0 {
            return Err(Error::InvalidArgument(format!("complex Beta needs a, b >= 1 (a={a}, b={b})")));
        }
        Ok(BetaDistSpec { a, b })
    }

    pub fn mean(&self) -> f64 {
        self.a as f64 / (self.a + self.b) as f64
    }
}

/// P(T > eta) for T ~ CF_{a,b}(delta).
pub fn cf_survival(spec: &FDistSpec, eta: f64) -> f64 {
    if !(eta > 0.0) {
        return 1.0;
    }
    if eta.is_infinite() {
        return 0.0;
    }
    let (a, b) = (spec.a as f64, spec.b as f64);
    // x = eta/(1+eta); 1 - x computed directly to keep the upper tail accurate
    let one_minus_x = 1.0 / (1.0 + eta);
    let x = eta * one_minus_x;
    let delta = spec.delta;
    if delta == 0.0 {
        return beta_reg(b, a, one_minus_x);
    }

    // Poisson weights below k_lo carry negligible mass (< 1e-25).
    let spread = delta.sqrt();
    let k_lo = (delta - 11.0 * spread - 10.0).max(0.0).floor() as usize;
    let k_cap = (delta + 12.0 * spread + 60.0).ceil() as usize;

    let ln_x = x.ln();
    let ln_delta = delta.ln();
    let mut k = k_lo;
    let mut ak = a + k as f64;
    // Q_k = P(Beta(a+k, b) > x), increasing in k by d_k
    let mut q_k = beta_reg(b, ak, one_minus_x);
    let mut ln_d = ak * ln_x + b * one_minus_x.ln() - ak.ln() - ln_beta(ak, b);
    let mut ln_w = -delta + k as f64 * ln_delta - statrs::function::gamma::ln_gamma(k as f64 + 1.0);
    let mut mass = 0.0;
    let mut sum = 0.0;
    loop {
        let w = ln_w.exp();
        mass += w;
        sum += w * q_k;
        if (k as f64 > delta && 1.0 - mass < POISSON_TAIL) || k >= k_cap {
            break;
        }
        q_k += ln_d.exp();
        ln_d += ln_x + (ak + b).ln() - (ak + 1.0).ln();
        k += 1;
        ak += 1.0;
        ln_w += ln_delta - (k as f64).ln();
    }
    sum.clamp(0.0, 1.0)
}

/// P(T <= eta).
pub fn cf_cdf(spec: &FDistSpec, eta: f64) -> f64 {
    if spec.delta == 0.0 && eta > 0.0 && eta.is_finite() {
        return beta_reg(spec.a as f64, spec.b as f64, eta / (1.0 + eta));
    }
    1.0 - cf_survival(spec, eta)
}

pub fn cb_pdf(spec: &BetaDistSpec, beta: f64) -> f64 {
    if !(beta > 0.0 && beta < 1.0) {
        return 0.0;
    }
    let (a, b) = (spec.a as f64, spec.b as f64);
    ((a - 1.0) * beta.ln() + (b - 1.0) * (1.0 - beta).ln() - ln_beta(a, b)).exp()
}

pub fn cb_cdf(spec: &BetaDistSpec, beta: f64) -> f64 {
    if beta <= 0.0 {
        0.0
    } else if beta >= 1.0 {
        1.0
    } else {
        beta_reg(spec.a as f64, spec.b as f64, beta)
    }
}

/// Gauss–Legendre rule on [-1, 1].
#[derive(Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, 0.0);
                for j in 0..order {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
                }
                dp = n * (z * p0 - p1) / (z * z - 1.0);
                let dz = p0 / dp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[order - 1 - i] = z;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }
}

fn rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(QUADRATURE_ORDER))
}

/// GLRT threshold on T that the statistic `form` exceeds `eta` at loss factor
/// `beta`. `None` means the event is impossible at this β.
fn glrt_threshold(form: StatisticForm, eta: f64, beta: f64) -> Option<f64> {
    match form {
        StatisticForm::Glrt => Some(eta),
        StatisticForm::Wald => Some(eta * beta),
        StatisticForm::Rao => (beta > eta).then(|| eta / (beta - eta)),
        StatisticForm::Phe => (eta < 1.0).then(|| eta * (1.0 - beta) / (1.0 - eta)),
    }
}

/// E_β[ f(β) ] over the loss-factor law restricted to (lo, 1), on uniform
/// Gauss–Legendre panels.
fn integrate_loss(dims: &Dims, lo: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (a, b) = dims.beta_params();
    if b == 0 {
        return if lo < 1.0 { f(1.0) } else { 0.0 };
    }
    let spec = BetaDistSpec { a, b };
    let gl = rule();
    let width = (1.0 - lo) / QUADRATURE_PANELS as f64;
    (0..QUADRATURE_PANELS)
        .map(|i| {
            let p0 = lo + i as f64 * width;
            gl.integrate(p0, p0 + width, |beta| f(beta) * cb_pdf(&spec, beta))
        })
        .sum()
}

/// PD of `kind` at eSNR `rho` (linear) and threshold `eta`. Conventional kinds
/// use the law of their projected counterpart.
pub fn pd_theoretical(kind: DetectorKind, dims: &Dims, rho: f64, eta: f64) -> Result<f64> {
    dims.validate()?;
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("eSNR must be finite and >= 0, got {rho}")));
    }
    let form = kind.form();
    if !(eta > 0.0) {
        return Ok(1.0);
    }
    if matches!(form, StatisticForm::Rao | StatisticForm::Phe) && eta >= 1.0 {
        return Ok(0.0);
    }
    let (fa, fb) = dims.f_dofs();
    if form == StatisticForm::Glrt && rho == 0.0 {
        return Ok(cf_survival(&FDistSpec { a: fa, b: fb, delta: 0.0 }, eta));
    }
    let lo = if form == StatisticForm::Rao { eta } else { 0.0 };
    let value = integrate_loss(dims, lo, |beta| match glrt_threshold(form, eta, beta) {
        Some(t) => cf_survival(&FDistSpec { a: fa, b: fb, delta: rho * beta }, t),
        None => 0.0,
    });
    Ok(value.clamp(0.0, 1.0))
}

pub fn pfa_theoretical(kind: DetectorKind, dims: &Dims, eta: f64) -> Result<f64> {
    pd_theoretical(kind, dims, 0.0, eta)
}

/// η with pfa_theoretical(η) = pfa, by bisection to relative tolerance 1e-8.
pub fn threshold_theoretical(kind: DetectorKind, dims: &Dims, pfa: f64) -> Result<f64> {
    dims.validate()?;
    if !(pfa > 0.0 && pfa <= 1.0) {
        return Err(Error::InvalidArgument(format!("PFA must lie in (0, 1], got {pfa}")));
    }
    if pfa == 1.0 {
        return Ok(0.0);
    }
    let f = |eta: f64| pfa_theoretical(kind, dims, eta).map(|v| v - pfa);
    let (mut lo, mut hi) = (0.0, 1.0);
    match kind.form() {
        StatisticForm::Rao | StatisticForm::Phe => {}
        StatisticForm::Glrt | StatisticForm::Wald => {
            while f(hi)? > 0.0 {
                lo = hi;
                hi *= 2.0;
                if hi > 1e300 {
                    return Err(Error::InvalidArgument(format!("no threshold reaches PFA {pfa}")));
                }
            }
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-8 * hi * 0.5 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic `d` over `n` samples (Stephens'
/// small-sample correction).
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}
