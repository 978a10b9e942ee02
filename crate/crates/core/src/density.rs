//! Strictly positive functions `f: ℕ → (0, ∞)` evaluated in log space.

use crate::error::{Error, Result};
use crate::poisson::log_factorial;

/// How a finite table is continued past its last entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TableExtension {
    /// Geometric continuation with ratio `f(k_max)/f(k_max−1)` (ratio 1 for a
    /// single-entry table).
    Geometric,
    /// Geometric continuation with an explicit positive ratio.
    Ratio(f64),
    /// `f(k+1)/f(k) = c/(k+1)` past the end with `c = k_max·f(k_max)/f(k_max−1)`
    /// (`c = 1` for a single entry). Continues an ultra-log-concave table
    /// without breaking ultra-log-concavity, which a geometric tail always does.
    PoissonTail,
}

/// The closed-form families and the tabulated kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `exp(a·k + b)`: the equality cases of Wu's inequality.
    Geometric { a: f64, b: f64 },
    /// `q^(k²) · s^k` with `0 < q < 1`, `s > 0`.
    GaussianLike { q: f64, s: f64 },
    /// `c^k / k!` with `c > 0`.
    PoissonKernel { c: f64 },
    /// Explicit positive values on `0..=k_max` plus a continuation rule.
    Table {
        values: Vec<f64>,
        extension: TableExtension,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Geometric { a: f64, b: f64 },
    GaussianLike { ln_q: f64, ln_s: f64 },
    PoissonKernel { ln_c: f64 },
    Table {
        log_values: Vec<f64>,
        log_ext_ratio: f64,
        poisson_tail: bool,
        // suffix_max[k] = max over j ≥ k of log(f(j+1)/f(j)).
        suffix_max: Vec<f64>,
    },
}

/// A strictly positive function on the nonnegative integers.
///
/// Besides the base family it carries an exponential tilt
/// `exp(log_slope·k + log_scale)`, which is how scaled copies `c·f` and
/// reweightings `f·π_T/π_t` are represented.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFunction {
    family: Family,
    repr: Repr,
    log_slope: f64,
    log_scale: f64,
}

impl DensityFunction {
    pub fn new(family: Family) -> Result<Self> {
        let repr = match &family {
            &Family::Geometric { a, b } => {
                finite("a", a)?;
                finite("b", b)?;
                Repr::Geometric { a, b }
            }
            &Family::GaussianLike { q, s } => {
                if !(q > 0.0 && q < 1.0) {
                    return Err(Error::domain(format!("gaussian_like needs 0 < q < 1, got {q}")));
                }
                positive("s", s)?;
                Repr::GaussianLike {
                    ln_q: q.ln(),
                    ln_s: s.ln(),
                }
            }
            &Family::PoissonKernel { c } => {
                positive("c", c)?;
                Repr::PoissonKernel { ln_c: c.ln() }
            }
            Family::Table { values, extension } => table_repr(values, *extension)?,
        };
        Ok(DensityFunction {
            family,
            repr,
            log_slope: 0.0,
            log_scale: 0.0,
        })
    }

    pub fn geometric(a: f64, b: f64) -> Result<Self> {
        Self::new(Family::Geometric { a, b })
    }

    pub fn gaussian_like(q: f64, s: f64) -> Result<Self> {
        Self::new(Family::GaussianLike { q, s })
    }

    pub fn poisson_kernel(c: f64) -> Result<Self> {
        Self::new(Family::PoissonKernel { c })
    }

    pub fn table(values: Vec<f64>, extension: TableExtension) -> Result<Self> {
        Self::new(Family::Table { values, extension })
    }

    /// `f ≡ 1`.
    pub fn constant() -> Self {
        Self::table(vec![1.0], TableExtension::Geometric).expect("valid table")
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Largest tabulated index, for the table kind.
    pub fn k_max(&self) -> Option<usize> {
        match &self.family {
            Family::Table { values, .. } => Some(values.len() - 1),
            _ => None,
        }
    }

    /// The tilt `(log_slope, log_scale)` applied on top of the family.
    pub fn tilt(&self) -> (f64, f64) {
        (self.log_slope, self.log_scale)
    }

    /// `c · f`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        positive("scale", c)?;
        self.tilted(0.0, c.ln())
    }

    /// `f(k) · exp(a·k + b)`.
    pub fn tilted(&self, a: f64, b: f64) -> Result<Self> {
        finite("tilt slope", a)?;
        finite("tilt offset", b)?;
        let mut out = self.clone();
        out.log_slope += a;
        out.log_scale += b;
        Ok(out)
    }

    /// `log f(k)`.
    #[inline]
    pub fn log_value(&self, k: usize) -> f64 {
        let kf = k as f64;
        let base = match &self.repr {
            Repr::Geometric { a, b } => a * kf + b,
            Repr::GaussianLike { ln_q, ln_s } => kf * kf * ln_q + kf * ln_s,
            Repr::PoissonKernel { ln_c } => kf * ln_c - log_factorial(k),
            Repr::Table {
                log_values,
                log_ext_ratio,
                poisson_tail,
                ..
            } => {
                let last = log_values.len() - 1;
                if k <= last {
                    log_values[k]
                } else if *poisson_tail {
                    log_values[last] + (k - last) as f64 * log_ext_ratio - log_factorial(k)
                        + log_factorial(last)
                } else {
                    log_values[last] + (k - last) as f64 * log_ext_ratio
                }
            }
        };
        base + self.log_slope * kf + self.log_scale
    }

    #[inline]
    pub fn value(&self, k: usize) -> f64 {
        self.log_value(k).exp()
    }

    /// `log sup_{j ≥ k} f(j+1)/f(j)`; nonincreasing in `k`.
    ///
    /// This bounds the semigroup ratio `P_t f(k+1)/P_t f(k)` for every `t`,
    /// which makes the series tails and the reach bound rigorous.
    pub fn log_ratio_bound(&self, k: usize) -> f64 {
        let kf = k as f64;
        let base = match &self.repr {
            Repr::Geometric { a, .. } => *a,
            Repr::GaussianLike { ln_q, ln_s } => (2.0 * kf + 1.0) * ln_q + ln_s,
            Repr::PoissonKernel { ln_c } => ln_c - (kf + 1.0).ln(),
            Repr::Table {
                log_ext_ratio,
                poisson_tail,
                suffix_max,
                ..
            } => match suffix_max.get(k) {
                Some(&m) => m,
                None if *poisson_tail => log_ext_ratio - (kf + 1.0).ln(),
                None => *log_ext_ratio,
            },
        };
        base + self.log_slope
    }

    /// Log of the first ratio `f(k_max+1)/f(k_max)` past the end of a table.
    pub fn log_extension_ratio(&self) -> Option<f64> {
        match &self.repr {
            Repr::Table {
                log_values,
                log_ext_ratio,
                poisson_tail,
                ..
            } => {
                let first = if *poisson_tail {
                    log_ext_ratio - (log_values.len() as f64).ln()
                } else {
                    *log_ext_ratio
                };
                Some(first + self.log_slope)
            }
            _ => None,
        }
    }
}

fn table_repr(values: &[f64], extension: TableExtension) -> Result<Repr> {
    if values.is_empty() {
        return Err(Error::domain("table needs at least one value"));
    }
    for (k, &v) in values.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!(
                "table values must be finite and > 0, got f({k}) = {v}"
            )));
        }
    }
    let log_values: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = log_values.len();
    let log_ext_ratio = match extension {
        TableExtension::Geometric if n >= 2 => log_values[n - 1] - log_values[n - 2],
        TableExtension::Geometric => 0.0,
        TableExtension::Ratio(r) => {
            positive("extension ratio", r)?;
            r.ln()
        }
        TableExtension::PoissonTail if n >= 2 => {
            ((n - 1) as f64).ln() + log_values[n - 1] - log_values[n - 2]
        }
        TableExtension::PoissonTail => 0.0,
    };
    let poisson_tail = extension == TableExtension::PoissonTail;
    let first_ext = if poisson_tail {
        log_ext_ratio - (n as f64).ln()
    } else {
        log_ext_ratio
    };
    let mut suffix_max = vec![first_ext; n];
    for k in (0..n.saturating_sub(1)).rev() {
        let step = log_values[k + 1] - log_values[k];
        suffix_max[k] = step.max(suffix_max[k + 1]);
    }
    Ok(Repr::Table {
        log_values,
        log_ext_ratio,
        poisson_tail,
        suffix_max,
    })
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite and > 0, got {v}")))
    }
}
