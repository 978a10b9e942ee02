//! Inequality-level quantities for `μ = f π_T`.
//!
//! With `Ent_{π_T}[f] = Σ f log f π_T − (Σ f π_T) log(Σ f π_T)`, Wu's
//! inequality reads
//!
//! ```text
//! Ent_{π_T}[f] ≤ T Σ_k f(k) φ(f(k+1)/f(k)) π_T(k)
//! ```
//!
//! and the deficit `δ(f)` is the gap. Equality holds exactly for
//! `f(k) = exp(a·k + b)`. For ultra-log-concave `f` the deficit is bounded
//! below by `(T²/2) Θ_{f(0)/f(1)}(E[μ]/T)`.

use crate::density::DensityFunction;
use crate::error::{Error, Result};
use crate::poisson::{log_pmf, phi_unchecked, sum_weighted, theta, SeriesSum, WeightedTerm};
use crate::semigroup::{ProblemSpec, SpecOptions};

/// Slack for inequality assertions on quantities of order ≤ 10.
pub const INEQUALITY_SLACK: f64 = 1e-10;

/// Log-space slack for the ultra-log-concavity comparison.
pub const ULC_LOG_SLACK: f64 = 1e-12;

/// `Σ_k factor(k) f̂(k) π_T(k)` with the density's ratio bound driving the tail.
pub(crate) fn mu_sum<F>(spec: &ProblemSpec, mut factor: F) -> Result<SeriesSum>
where
    F: FnMut(usize) -> f64,
{
    let t = spec.horizon();
    let density = spec.density();
    sum_weighted(spec.tol(), |k| {
        Ok(WeightedTerm {
            log_weight: spec.log_f(k) + log_pmf(t, k),
            factor: factor(k),
            ratio_bound: density.log_ratio_bound(k).exp() * t / (k as f64 + 1.0),
        })
    })
}

/// `Ent_{π_T}[f̂]`; equals `H(μ | π_T)` for a normalized spec.
pub fn entropy_functional(spec: &ProblemSpec) -> Result<f64> {
    let mass = mu_sum(spec, |_| 1.0)?.value;
    let f_log_f = mu_sum(spec, |k| spec.log_f(k))?.value;
    Ok(f_log_f - mass * mass.ln())
}

/// Right-hand side of Wu's inequality, `T Σ_k f̂(k) φ(f̂(k+1)/f̂(k)) π_T(k)`.
pub fn wu_rhs(spec: &ProblemSpec) -> Result<f64> {
    let sum = mu_sum(spec, |k| phi_unchecked((spec.log_f(k + 1) - spec.log_f(k)).exp()))?;
    Ok(spec.horizon() * sum.value)
}

/// `δ(f) = wu_rhs − Ent`.
pub fn deficit(spec: &ProblemSpec) -> Result<f64> {
    Ok(wu_rhs(spec)? - entropy_functional(spec)?)
}

/// `E[μ] = Σ k f π_T / Σ f π_T`.
pub fn mean_of_mu(spec: &ProblemSpec) -> Result<f64> {
    let mass = mu_sum(spec, |_| 1.0)?.value;
    let first = mu_sum(spec, |k| k as f64)?.value;
    Ok(first / mass)
}

/// Outcome of an ultra-log-concavity scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UlcCheck {
    pub is_ulc: bool,
    /// First `k` with `k f(k)² < (k+1) f(k+1) f(k−1)`.
    pub violation: Option<usize>,
}

/// Checks `k g(k)² ≥ (k+1) g(k+1) g(k−1)` for `1 ≤ k ≤ k_check`, given `log g`.
pub fn ulc_scan<L: Fn(usize) -> f64>(log_g: L, k_check: usize) -> UlcCheck {
    for k in 1..=k_check {
        let lhs = (k as f64).ln() + 2.0 * log_g(k);
        let rhs = ((k + 1) as f64).ln() + log_g(k + 1) + log_g(k - 1);
        if lhs < rhs - ULC_LOG_SLACK {
            return UlcCheck {
                is_ulc: false,
                violation: Some(k),
            };
        }
    }
    UlcCheck {
        is_ulc: true,
        violation: None,
    }
}

/// Ultra-log-concavity of `f` on `1 ≤ k ≤ k_check` (`k = 0` holds with `f(−1) = 0`).
///
/// ```
/// use poisson_mlsi::DensityFunction;
/// use poisson_mlsi::functionals::is_ultra_log_concave;
/// let geo = DensityFunction::geometric(0.3, 0.0).unwrap();
/// assert_eq!(is_ultra_log_concave(&geo, 50).violation, Some(1));
/// ```
pub fn is_ultra_log_concave(f: &DensityFunction, k_check: usize) -> UlcCheck {
    ulc_scan(|k| f.log_value(k), k_check.max(1))
}

/// Default scan range: `max(50, k_max)`.
pub fn default_k_check(f: &DensityFunction) -> usize {
    f.k_max().map_or(50, |k| k.max(50))
}

/// `min_{0 ≤ k ≤ k_check} (μ(k+1)² − μ(k+2)μ(k)) / (μ(k+1)μ(k+2))`.
pub fn beta_log_concavity(spec: &ProblemSpec, k_check: usize) -> f64 {
    let t = spec.horizon();
    let log_mu = |k: usize| spec.log_f(k) + log_pmf(t, k);
    let mut beta = f64::INFINITY;
    for k in 0..=k_check {
        let (m0, m1, m2) = (log_mu(k), log_mu(k + 1), log_mu(k + 2));
        let value = (m1 - m2).exp() - (m0 - m1).exp();
        if !value.is_nan() {
            beta = beta.min(value);
        }
    }
    beta
}

/// `(T²/2) Θ_c(mean/T)`; zero when `mean = 0`.
pub fn stability_bound(horizon: f64, c: f64, mean: f64) -> Result<f64> {
    Ok(horizon * horizon / 2.0 * theta(c, mean / horizon)?)
}

/// The ultra-log-concave stability bound `(T²/2) Θ_{f(0)/f(1)}(E[μ]/T)`.
///
/// Only claimed for ULC `f` and a normalized spec; anything else is a
/// precondition error.
pub fn stability_lower_bound(spec: &ProblemSpec) -> Result<f64> {
    let k_check = default_k_check(spec.density());
    stability_lower_bound_checked(spec, k_check)
}

fn stability_lower_bound_checked(spec: &ProblemSpec, k_check: usize) -> Result<f64> {
    if !spec.is_normalized() {
        return Err(Error::Precondition(
            "the stability bound is stated for normalized μ = f π_T".into(),
        ));
    }
    let ulc = is_ultra_log_concave(spec.density(), k_check);
    if let Some(k) = ulc.violation {
        return Err(Error::Precondition(format!(
            "f is not ultra-log-concave (first violation at k = {k})"
        )));
    }
    let c = (spec.log_f(0) - spec.log_f(1)).exp();
    stability_bound(spec.horizon(), c, mean_of_mu(spec)?)
}

/// Every inequality-level quantity for one spec.
#[derive(Debug, Clone, PartialEq)]
pub struct DeficitReport {
    pub entropy: f64,
    pub wu_rhs: f64,
    pub deficit: f64,
    pub is_ulc: bool,
    pub ulc_violation_index: Option<usize>,
    /// β-log-concavity constant of `μ`, when `f` is ULC.
    pub beta: Option<f64>,
    pub mean_mu: f64,
    /// Zero when `f` is not ULC (no bound is claimed).
    pub stability_bound: f64,
    /// `deficit − stability_bound`.
    pub margin: f64,
    pub k_check: usize,
    /// Largest index used by the μ-weighted sums.
    pub max_index_used: usize,
    pub tail_bound: f64,
    /// Share of `Σ f π_T` carried by a table's extension (tables only).
    pub extension_mass: Option<f64>,
}

impl DeficitReport {
    /// Wu's inequality up to [`INEQUALITY_SLACK`].
    pub fn wu_holds(&self) -> bool {
        self.deficit >= -INEQUALITY_SLACK
    }

    /// The stability bound up to [`INEQUALITY_SLACK`] (vacuous for non-ULC `f`).
    pub fn stability_holds(&self) -> bool {
        !self.is_ulc || self.margin >= -INEQUALITY_SLACK
    }
}

pub fn deficit_report(spec: &ProblemSpec, k_check: Option<usize>) -> Result<DeficitReport> {
    let k_check = k_check.unwrap_or_else(|| default_k_check(spec.density()));
    let entropy = entropy_functional(spec)?;
    let wu = wu_rhs(spec)?;
    let deficit = wu - entropy;
    let ulc = is_ultra_log_concave(spec.density(), k_check);
    let mean_mu = mean_of_mu(spec)?;
    let (beta, stability_bound) = if ulc.is_ulc && spec.is_normalized() {
        (
            Some(beta_log_concavity(spec, k_check)),
            stability_lower_bound_checked(spec, k_check)?,
        )
    } else {
        (None, 0.0)
    };
    let provenance = mu_sum(spec, |_| 1.0)?;
    let extension_mass = match spec.density().k_max() {
        Some(k_max) => {
            let tail = mu_sum(spec, |k| if k > k_max { 1.0 } else { 0.0 })?.value;
            Some(tail / provenance.value)
        }
        None => None,
    };
    Ok(DeficitReport {
        entropy,
        wu_rhs: wu,
        deficit,
        is_ulc: ulc.is_ulc,
        ulc_violation_index: ulc.violation,
        beta,
        mean_mu,
        stability_bound,
        margin: deficit - stability_bound,
        k_check,
        max_index_used: provenance.terms.saturating_sub(1),
        tail_bound: provenance.tail_bound,
        extension_mass,
    })
}

/// One row of the counterexample table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexampleRow {
    pub a: f64,
    pub deficit: f64,
    pub beta: f64,
    /// `(1 − log 2)/(4β²) = (T²/2) Θ_{Tβ}(1/(Tβ))`.
    pub conjectured_bound: f64,
    /// `conjectured_bound − deficit`; positive means the conjecture fails.
    pub violation: f64,
}

/// For each `a`, the equality case `f(k) = e^{ak}` has zero deficit while
/// the conjectured β-log-concave bound `(1 − log 2)/(4β²)` stays positive and
/// grows as `β = 1/(T e^a) ↓ 0`.
pub fn counterexample_demo(a_grid: &[f64], horizon: f64) -> Result<Vec<CounterexampleRow>> {
    a_grid
        .iter()
        .map(|&a| {
            let spec = ProblemSpec::new(horizon, DensityFunction::geometric(a, 0.0)?, SpecOptions::default())?;
            let deficit = deficit(&spec)?;
            let beta = beta_log_concavity(&spec, 50);
            let conjectured_bound = (1.0 - std::f64::consts::LN_2) / (4.0 * beta * beta);
            Ok(CounterexampleRow {
                a,
                deficit,
                beta,
                conjectured_bound,
                violation: conjectured_bound - deficit,
            })
        })
        .collect()
}
