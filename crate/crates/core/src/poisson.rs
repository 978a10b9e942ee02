//! Scalar primitives on the Poisson space.
//!
//! Everything here is a pure function: the Poisson pmf in log space, the
//! rate function `φ(x) = x log x − x + 1`, relative entropy between two
//! Poisson laws, the Bregman divergence of `φ`, the stability modulus `Θ_c`,
//! and the adaptive series summation used by every `Σ_k (·) π_t(k)` in the
//! crate.

use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// A Poisson mean parameter. Always finite and nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Intensity(f64);

impl Intensity {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Intensity(value))
        } else {
            Err(Error::domain(format!("intensity must be finite and >= 0, got {value}")))
        }
    }

    /// Like [`Intensity::new`] but rejects zero.
    pub fn positive(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Intensity(value))
        } else {
            Err(Error::domain(format!("intensity must be finite and > 0, got {value}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<Intensity> for f64 {
    fn from(t: Intensity) -> f64 {
        t.0
    }
}

/// Stopping policy for infinite sums against Poisson weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesTolerance {
    /// Relative tail-mass cutoff.
    pub rel_tail: f64,
    /// Absolute cutoff used when the partial sum is (close to) zero.
    pub abs_floor: f64,
    /// Hard cap on the number of summed terms.
    pub max_terms: usize,
}

impl Default for SeriesTolerance {
    fn default() -> Self {
        SeriesTolerance {
            rel_tail: 1e-14,
            abs_floor: 1e-300,
            max_terms: 100_000,
        }
    }
}

impl SeriesTolerance {
    pub fn new(rel_tail: f64, abs_floor: f64) -> Result<Self> {
        let tol = SeriesTolerance {
            rel_tail,
            abs_floor,
            ..Default::default()
        };
        tol.validate()?;
        Ok(tol)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tail > 0.0 && self.rel_tail <= 1e-6) {
            return Err(Error::domain(format!(
                "rel_tail must lie in (0, 1e-6], got {}",
                self.rel_tail
            )));
        }
        if !(self.abs_floor > 0.0 && self.abs_floor.is_finite()) {
            return Err(Error::domain(format!(
                "abs_floor must be positive, got {}",
                self.abs_floor
            )));
        }
        if self.max_terms == 0 {
            return Err(Error::domain("max_terms must be positive"));
        }
        Ok(())
    }
}

const FACTORIAL_TABLE_LEN: usize = 171;

fn log_factorial_table() -> &'static [f64; FACTORIAL_TABLE_LEN] {
    static TABLE: OnceLock<[f64; FACTORIAL_TABLE_LEN]> = OnceLock::new();
    TABLE.get_or_init(|| {
        // k! is exact in f64 up to 22! and correctly rounded-ish up to 170!.
        let mut table = [0.0; FACTORIAL_TABLE_LEN];
        let mut fact = 1.0f64;
        for (k, slot) in table.iter_mut().enumerate().skip(1) {
            fact *= k as f64;
            *slot = fact.ln();
        }
        table
    })
}

/// `log k!`.
#[inline]
pub fn log_factorial(k: usize) -> f64 {
    if k < FACTORIAL_TABLE_LEN {
        log_factorial_table()[k]
    } else {
        ln_gamma(k as f64 + 1.0)
    }
}

/// `log π_t(k)` without domain checks. `t = 0` is the point mass at zero.
#[inline]
pub(crate) fn log_pmf(t: f64, k: usize) -> f64 {
    if t == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if k == 0 {
        return -t;
    }
    k as f64 * t.ln() - t - log_factorial(k)
}

/// `log π_t(k) = k log t − t − log k!`.
///
/// `t = 0` is the point mass at zero: the result is `0` for `k = 0` and
/// `-∞` otherwise.
///
/// ```
/// use poisson_mlsi::poisson::poisson_log_pmf;
/// assert_eq!(poisson_log_pmf(1.0, 0).unwrap(), -1.0);
/// assert!(poisson_log_pmf(-1.0, 0).is_err());
/// ```
pub fn poisson_log_pmf(t: f64, k: i64) -> Result<f64> {
    let t = Intensity::new(t)?.get();
    if k < 0 {
        return Err(Error::domain(format!("pmf index must be >= 0, got {k}")));
    }
    Ok(log_pmf(t, k as usize))
}

/// `φ(x) = x log x − x + 1`, with `φ(0) = 1`. Panics-free; NaN for `x < 0`.
#[inline]
pub(crate) fn phi_unchecked(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let u = x - 1.0;
    if u.abs() < 0.05 {
        // φ(1+u) = Σ_{n≥2} (−1)^n uⁿ / (n(n−1)); avoids the cancellation near 1.
        let mut acc = 0.0;
        let mut pow = u * u;
        for n in 2..40u32 {
            let term = pow / f64::from(n * (n - 1));
            acc += if n % 2 == 0 { term } else { -term };
            if term.abs() < 1e-18 * acc.abs() {
                break;
            }
            pow *= u;
        }
        return acc;
    }
    x * x.ln() - x + 1.0
}

/// The rate function `φ(x) = x log x − x + 1` on `[0, ∞)`.
///
/// `φ ≥ 0` with equality only at `x = 1`.
pub fn phi(x: f64) -> Result<f64> {
    if !(x >= 0.0) || x.is_infinite() {
        return Err(Error::domain(format!("phi needs a finite x >= 0, got {x}")));
    }
    Ok(phi_unchecked(x))
}

/// `H(π_α | π_β) = β − α + α log(α/β)`.
pub fn relent_poisson(alpha: f64, beta: f64) -> Result<f64> {
    check_positive("alpha", alpha)?;
    check_positive("beta", beta)?;
    Ok(beta - alpha + alpha * (alpha / beta).ln())
}

/// Bregman divergence of `φ`: `φ(y) − φ(x) − φ'(x)(y − x)` with `φ'(x) = log x`.
///
/// Agrees with [`relent_poisson`]`(y, x)`.
pub fn bregman_phi(y: f64, x: f64) -> Result<f64> {
    check_positive("y", y)?;
    check_positive("x", x)?;
    Ok(phi_unchecked(y) - phi_unchecked(x) - x.ln() * (y - x))
}

/// The stability modulus
/// `Θ_c(z) = z²/(1+cz) · log(1/(1+cz)) − z²/(1+cz) + z²`.
///
/// Nonnegative, increasing and convex in `z`; `Θ_{rc}(z/r) = Θ_c(z)/r²`.
///
/// ```
/// use poisson_mlsi::poisson::theta;
/// let v = theta(1.0, 1.0).unwrap();
/// assert!((v - (1.0 - 2f64.ln()) / 2.0).abs() < 1e-15);
/// ```
pub fn theta(c: f64, z: f64) -> Result<f64> {
    check_positive("c", c)?;
    if !(z >= 0.0) || z.is_infinite() {
        return Err(Error::domain(format!("theta needs a finite z >= 0, got {z}")));
    }
    let z2 = z * z;
    let d = 1.0 + c * z;
    Ok(z2 / d * (1.0 / d).ln() - z2 / d + z2)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite and > 0, got {v}")))
    }
}

/// Numerically stable running `log Σ exp(x_i)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl LogSumExp {
    pub(crate) fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.scaled += (x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// One summand of a weighted series: `factor · exp(log_weight)`.
///
/// `ratio_bound` must bound `w_{j+1}/w_j` for every `j ≥ k` (it is what makes
/// the tail estimate rigorous for the weights).
#[derive(Debug, Clone, Copy)]
pub(crate) struct WeightedTerm {
    pub log_weight: f64,
    pub factor: f64,
    pub ratio_bound: f64,
}

/// Result of a truncated series together with its truncation provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSum {
    pub value: f64,
    /// Number of summed terms (largest index used is `terms - 1`).
    pub terms: usize,
    /// Estimated bound on the neglected tail.
    pub tail_bound: f64,
}

/// Sums `Σ_k factor_k · w_k` for `k = 0, 1, …`.
///
/// Stops once the weight ratio bound (inflated by the observed growth of
/// `|factor|`) is at most 1/2 and the geometric tail estimate, scaled by the
/// largest factor seen so far, is below `rel_tail·|S|` or `abs_floor`.
pub(crate) fn sum_weighted<F>(tol: &SeriesTolerance, mut term: F) -> Result<SeriesSum>
where
    F: FnMut(usize) -> Result<WeightedTerm>,
{
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut max_factor = 1.0f64;
    let mut prev_factor = f64::NAN;
    for k in 0..tol.max_terms {
        let WeightedTerm {
            log_weight,
            factor,
            ratio_bound,
        } = term(k)?;
        if !factor.is_finite() || log_weight.is_nan() || log_weight == f64::INFINITY {
            return Err(Error::Truncation {
                terms: k,
                detail: format!("non-finite summand at k={k} (factor={factor}, log weight={log_weight})"),
            });
        }
        let w = log_weight.exp();
        if !w.is_finite() {
            return Err(Error::Truncation {
                terms: k,
                detail: format!("weight overflow at k={k} (log weight={log_weight})"),
            });
        }
        // Kahan summation keeps 1e-15 relative accuracy over long tails.
        let summand = factor * w;
        let y = summand - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;

        let abs_factor = factor.abs();
        let growth = if prev_factor.is_finite() && prev_factor != 0.0 && abs_factor > 0.0 {
            (abs_factor / prev_factor.abs()).max(1.0)
        } else {
            1.0
        };
        prev_factor = factor;
        max_factor = max_factor.max(abs_factor);

        let rho = ratio_bound * growth;
        if rho <= 0.5 {
            let tail = 2.0 * max_factor * w * rho / (1.0 - rho);
            if tail <= tol.rel_tail * sum.abs() || tail <= tol.abs_floor {
                return Ok(SeriesSum {
                    value: sum,
                    terms: k + 1,
                    tail_bound: tail,
                });
            }
        }
    }
    Err(Error::Truncation {
        terms: tol.max_terms,
        detail: "summands did not decay; the function grows too fast against the Poisson weights"
            .to_string(),
    })
}

/// `Σ_k term(k) · π_t(k)` with adaptive truncation.
///
/// ```
/// use poisson_mlsi::poisson::{weighted_series_sum, SeriesTolerance};
/// let mean = weighted_series_sum(|k| k as f64, 2.0, &SeriesTolerance::default()).unwrap();
/// assert!((mean - 2.0).abs() < 1e-13);
/// ```
pub fn weighted_series_sum<F>(mut term: F, t: f64, tol: &SeriesTolerance) -> Result<f64>
where
    F: FnMut(usize) -> f64,
{
    weighted_series_sum_with_provenance(&mut term, t, tol).map(|s| s.value)
}

/// Like [`weighted_series_sum`] but also reports how far the sum went.
pub fn weighted_series_sum_with_provenance<F>(
    mut term: F,
    t: f64,
    tol: &SeriesTolerance,
) -> Result<SeriesSum>
where
    F: FnMut(usize) -> f64,
{
    let t = Intensity::new(t)?.get();
    sum_weighted(tol, |k| {
        Ok(WeightedTerm {
            log_weight: log_pmf(t, k),
            factor: term(k),
            ratio_bound: t / (k as f64 + 1.0),
        })
    })
}

/// Smallest `K` with `P(Poisson(t) > K) ≤ rel_tail`, using the ratio-test
/// bound `P(Poisson(t) > K) ≤ 2·π_t(K+1)` valid for `K + 1 ≥ 2t`.
pub fn poisson_upper_quantile(t: f64, rel_tail: f64) -> usize {
    let mut k = (2.0 * t).ceil() as usize;
    let log_target = rel_tail.ln() - std::f64::consts::LN_2;
    while log_pmf(t, k + 1) > log_target {
        k += 1;
    }
    k
}
