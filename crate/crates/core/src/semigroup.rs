//! The Poisson semigroup `P_t f(k) = Σ_n f(k+n) π_t(n)` and the quantities
//! derived from it along the flow towards the horizon `T`:
//!
//! * `F(t,k) = log P_{T−t} f(k)`,
//! * `G(t,k) = exp(D F(t,k)) = P_{T−t} f(k+1) / P_{T−t} f(k)`, the
//!   Poisson–Föllmer intensity at state `k` and time `t`,
//! * `exp(D²F(t,k))`, the second-difference exponent,
//! * `η(s) = P_{T−s} f(0) / P_{T−s} f(1)`.
//!
//! Every semigroup value is computed as a log-sum-exp over `n` and truncated
//! with the ratio bound of the density, so the neglected tail is bounded
//! rigorously rather than estimated.

use crate::density::DensityFunction;
use crate::error::{Error, Result};
use crate::poisson::{log_pmf, poisson_upper_quantile, Intensity, LogSumExp, SeriesTolerance};

/// Construction options for a [`ProblemSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecOptions {
    /// Divide `f` by `Z = Σ_k f(k) π_T(k)` so that `μ = f π_T` is a probability.
    pub normalize: bool,
    pub tol: SeriesTolerance,
    /// Overrides the computed state-space reach bound.
    pub k_reach: Option<usize>,
}

impl Default for SpecOptions {
    fn default() -> Self {
        SpecOptions {
            normalize: true,
            tol: SeriesTolerance::default(),
            k_reach: None,
        }
    }
}

/// A horizon `T`, a density `f` and the numerical policy: the unit of work
/// for every functional, simulation and verification.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    horizon: Intensity,
    density: DensityFunction,
    normalize: bool,
    tol: SeriesTolerance,
    k_reach: usize,
    log_norm: f64,
}

impl ProblemSpec {
    pub fn new(horizon: f64, density: DensityFunction, options: SpecOptions) -> Result<Self> {
        let horizon = Intensity::positive(horizon)?;
        options.tol.validate()?;
        let log_norm = log_series(
            |n| density.log_value(n),
            |n| density.log_ratio_bound(n),
            horizon.get(),
            &options.tol,
        )?;
        // X_T is dominated by a Poisson variable with intensity T·sup G ≤ T·sup f(j+1)/f(j).
        let dominating = horizon.get() * density.log_ratio_bound(0).exp();
        let k_reach = match options.k_reach {
            Some(k) => k,
            None => {
                if !dominating.is_finite() {
                    return Err(Error::domain("density ratio bound is not finite"));
                }
                poisson_upper_quantile(dominating, options.tol.rel_tail)
            }
        };
        Ok(ProblemSpec {
            horizon,
            density,
            normalize: options.normalize,
            tol: options.tol,
            k_reach,
            log_norm,
        })
    }

    /// Normalized spec with default tolerances.
    pub fn normalized(horizon: f64, density: DensityFunction) -> Result<Self> {
        Self::new(horizon, density, SpecOptions::default())
    }

    /// Unnormalized spec with default tolerances.
    pub fn raw(horizon: f64, density: DensityFunction) -> Result<Self> {
        Self::new(
            horizon,
            density,
            SpecOptions {
                normalize: false,
                ..Default::default()
            },
        )
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon.get()
    }

    pub fn density(&self) -> &DensityFunction {
        &self.density
    }

    pub fn is_normalized(&self) -> bool {
        self.normalize
    }

    pub fn tol(&self) -> &SeriesTolerance {
        &self.tol
    }

    pub fn k_reach(&self) -> usize {
        self.k_reach
    }

    /// `log Z` with `Z = Σ_k f(k) π_T(k)` for the unnormalized `f`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    /// `log f̂(k)` where `f̂` is `f/Z` for normalized specs and `f` otherwise.
    #[inline]
    pub fn log_f(&self, k: usize) -> f64 {
        let shift = if self.normalize { self.log_norm } else { 0.0 };
        self.density.log_value(k) - shift
    }

    #[inline]
    pub fn f(&self, k: usize) -> f64 {
        self.log_f(k).exp()
    }

    /// `log P_t f̂(k)`.
    pub fn log_semigroup(&self, t: f64, k: usize) -> Result<f64> {
        let shift = if self.normalize { self.log_norm } else { 0.0 };
        let raw = log_series(
            |n| self.density.log_value(k + n),
            |n| self.density.log_ratio_bound(k + n),
            t,
            &self.tol,
        )?;
        Ok(raw - shift)
    }

    /// `(log P_t f̂(k), log P_t f̂(k+1))` from one pass over the Poisson weights.
    pub(crate) fn log_semigroup_pair(&self, t: f64, k: usize) -> Result<(f64, f64)> {
        let shift = if self.normalize { self.log_norm } else { 0.0 };
        let d = &self.density;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::domain(format!("semigroup time must be finite and >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok((d.log_value(k) - shift, d.log_value(k + 1) - shift));
        }
        let ln_t = t.ln();
        let log_rel = self.tol.rel_tail.ln();
        let (mut acc0, mut acc1) = (LogSumExp::new(), LogSumExp::new());
        let mut lv = d.log_value(k);
        for n in 0..self.tol.max_terms {
            let lv_next = d.log_value(k + n + 1);
            let lp = log_pmf(t, n);
            let (lw0, lw1) = (lv + lp, lv_next + lp);
            if lw0.is_nan() || lw1.is_nan() || lw0 == f64::INFINITY || lw1 == f64::INFINITY {
                return Err(Error::Truncation {
                    terms: n,
                    detail: format!("non-finite semigroup summand at n={n}"),
                });
            }
            acc0.push(lw0);
            acc1.push(lw1);
            // The ratio bound at k+n also covers the shifted series.
            let log_rho = d.log_ratio_bound(k + n) + ln_t - ((n + 1) as f64).ln();
            if log_rho < -std::f64::consts::LN_2 {
                let slack = log_rho + std::f64::consts::LN_2 - log_rel;
                if lw0 + slack <= acc0.value() && lw1 + slack <= acc1.value() {
                    return Ok((acc0.value() - shift, acc1.value() - shift));
                }
            }
            lv = lv_next;
        }
        Err(Error::Truncation {
            terms: self.tol.max_terms,
            detail: format!("semigroup series at t={t} did not converge"),
        })
    }

    fn check_flow_time(&self, t: f64) -> Result<()> {
        if t >= 0.0 && t <= self.horizon() {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "time {t} outside [0, T] with T = {}",
                self.horizon()
            )))
        }
    }

    /// `F(t,k)` for `k = 0..=k_last` at one time, sharing the validation.
    pub fn log_semigroup_row(&self, t: f64, k_last: usize) -> Result<Vec<f64>> {
        self.check_flow_time(t)?;
        let u = (self.horizon() - t).max(0.0);
        (0..=k_last).map(|k| self.log_semigroup(u, k)).collect()
    }
}

/// `log Σ_n exp(log_term(n)) π_t(n)` with a rigorous tail cut.
///
/// `log_ratio(n)` must bound `log(term(j+1)/term(j))` for all `j ≥ n`.
pub(crate) fn log_series<L, R>(log_term: L, log_ratio: R, t: f64, tol: &SeriesTolerance) -> Result<f64>
where
    L: Fn(usize) -> f64,
    R: Fn(usize) -> f64,
{
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("semigroup time must be finite and >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(log_term(0));
    }
    let ln_t = t.ln();
    let log_rel = tol.rel_tail.ln();
    let mut acc = LogSumExp::new();
    for n in 0..tol.max_terms {
        let lw = log_term(n) + log_pmf(t, n);
        if lw.is_nan() || lw == f64::INFINITY {
            return Err(Error::Truncation {
                terms: n,
                detail: format!("non-finite semigroup summand at n={n}"),
            });
        }
        acc.push(lw);
        // Bound on w_{j+1}/w_j for all j ≥ n.
        let log_rho = log_ratio(n) + ln_t - ((n + 1) as f64).ln();
        if log_rho < -std::f64::consts::LN_2 {
            // Σ_{j>n} w_j ≤ w_n ρ/(1−ρ) ≤ 2 w_n ρ.
            let log_tail = lw + log_rho + std::f64::consts::LN_2;
            if log_tail <= log_rel + acc.value() {
                return Ok(acc.value());
            }
        }
    }
    Err(Error::Truncation {
        terms: tol.max_terms,
        detail: format!("semigroup series at t={t} did not converge"),
    })
}

/// `P_t f̂(k)`; `P_0 f̂ = f̂` exactly.
///
/// ```
/// use poisson_mlsi::{DensityFunction, ProblemSpec};
/// use poisson_mlsi::semigroup::apply_semigroup;
/// // P_t of exp(a·k) is exp(a·k + t(e^a − 1)).
/// let spec = ProblemSpec::raw(1.0, DensityFunction::geometric(2f64.ln(), 0.0).unwrap()).unwrap();
/// let v = apply_semigroup(&spec, 1.0, 0).unwrap();
/// assert!((v - std::f64::consts::E).abs() < 1e-13);
/// ```
pub fn apply_semigroup(spec: &ProblemSpec, t: f64, k: usize) -> Result<f64> {
    Ok(spec.log_semigroup(t, k)?.exp())
}

/// Forward difference `D g(k) = g(k+1) − g(k)`.
pub fn difference<G: Fn(usize) -> f64>(g: G, k: usize) -> f64 {
    g(k + 1) - g(k)
}

/// `F(t,k) = log P_{T−t} f̂(k)` for `t ∈ [0, T]`.
pub fn log_semigroup_f(spec: &ProblemSpec, t: f64, k: usize) -> Result<f64> {
    spec.check_flow_time(t)?;
    spec.log_semigroup((spec.horizon() - t).max(0.0), k)
}

/// `G(t,k) = P_{T−t} f(k+1) / P_{T−t} f(k)`, the Poisson–Föllmer intensity.
pub fn ratio_g(spec: &ProblemSpec, t: f64, k: usize) -> Result<f64> {
    spec.check_flow_time(t)?;
    let (f0, f1) = spec.log_semigroup_pair((spec.horizon() - t).max(0.0), k)?;
    Ok((f1 - f0).exp())
}

/// `exp(D²F(t,k)) = P f(k+2) P f(k) / P f(k+1)²` with `P = P_{T−t}`.
pub fn second_difference_exponent(spec: &ProblemSpec, t: f64, k: usize) -> Result<f64> {
    let f0 = log_semigroup_f(spec, t, k)?;
    let f1 = log_semigroup_f(spec, t, k + 1)?;
    let f2 = log_semigroup_f(spec, t, k + 2)?;
    Ok((f2 - 2.0 * f1 + f0).exp())
}

/// `η(s) = P_{T−s} f(0) / P_{T−s} f(1) = 1 / G(s, 0)`.
pub fn eta_ratio(spec: &ProblemSpec, s: f64) -> Result<f64> {
    let f0 = log_semigroup_f(spec, s, 0)?;
    let f1 = log_semigroup_f(spec, s, 1)?;
    Ok((f0 - f1).exp())
}

/// `|(P_{t+h} f(k) − P_t f(k))/h − D(P_t f)(k)|`, the forward-difference
/// residual of the heat equation `∂_t P_t f = D P_t f`.
pub fn heat_residual(spec: &ProblemSpec, t: f64, k: usize, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::domain(format!("step must be positive, got {h}")));
    }
    let p_t = apply_semigroup(spec, t, k)?;
    let p_th = apply_semigroup(spec, t + h, k)?;
    let p_t1 = apply_semigroup(spec, t, k + 1)?;
    Ok(((p_th - p_t) / h - (p_t1 - p_t)).abs())
}

/// Central-difference residual of `∂_t F(t,k) = 1 − G(t,k)`.
pub fn f_equation_residual(spec: &ProblemSpec, t: f64, k: usize, h: f64) -> Result<f64> {
    check_central_step(spec, t, h)?;
    let dt = (log_semigroup_f(spec, t + h, k)? - log_semigroup_f(spec, t - h, k)?) / (2.0 * h);
    Ok((dt - (1.0 - ratio_g(spec, t, k)?)).abs())
}

/// Central-difference residual of `∂_t G(t,k) = −G(t,k) · D G(t,k)`.
pub fn g_equation_residual(spec: &ProblemSpec, t: f64, k: usize, h: f64) -> Result<f64> {
    check_central_step(spec, t, h)?;
    let dt = (ratio_g(spec, t + h, k)? - ratio_g(spec, t - h, k)?) / (2.0 * h);
    let g0 = ratio_g(spec, t, k)?;
    let g1 = ratio_g(spec, t, k + 1)?;
    Ok((dt + g0 * (g1 - g0)).abs())
}

fn check_central_step(spec: &ProblemSpec, t: f64, h: f64) -> Result<()> {
    if !(h > 0.0) || t - h < 0.0 || t + h > spec.horizon() {
        return Err(Error::domain(format!(
            "central step h={h} at t={t} leaves [0, {}]",
            spec.horizon()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::TableExtension;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn gaussian() -> DensityFunction {
        DensityFunction::gaussian_like(0.7, 1.0).unwrap()
    }

    #[test]
    fn constant_function_is_fixed() {
        let spec = ProblemSpec::raw(2.0, DensityFunction::constant()).unwrap();
        for &t in &[0.0, 0.3, 2.0, 7.5] {
            for k in [0usize, 3, 20] {
                assert_relative_eq!(apply_semigroup(&spec, t, k).unwrap(), 1.0, max_relative = 1e-14);
            }
        }
        assert_relative_eq!(ratio_g(&spec, 0.5, 4).unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(log_semigroup_f(&spec, 0.5, 4).unwrap(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(second_difference_exponent(&spec, 0.5, 4).unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(eta_ratio(&spec, 1.0).unwrap(), 1.0, max_relative = 1e-14);
        assert!(heat_residual(&spec, 0.2, 1, 1e-3).unwrap() < 1e-10);
    }

    #[test]
    fn geometric_closed_form() {
        let a = LN_2;
        let spec = ProblemSpec::raw(1.0, DensityFunction::geometric(a, 0.0).unwrap()).unwrap();
        assert_relative_eq!(apply_semigroup(&spec, 1.0, 0).unwrap(), std::f64::consts::E, max_relative = 1e-14);
        assert_relative_eq!(log_semigroup_f(&spec, 0.0, 0).unwrap(), 1.0, max_relative = 1e-14);
        for &t in &[0.0, 0.4, 1.0] {
            for k in [0usize, 2, 9] {
                let expected = a * k as f64 + t * (a.exp() - 1.0);
                assert_relative_eq!(spec.log_semigroup(t, k).unwrap(), expected, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn geometric_ratio_is_constant() {
        for (a, b, t_h) in [(LN_2, 0.0, 1.0), (-0.7, 0.3, 2.0), (0.9, -1.0, 0.5)] {
            let spec = ProblemSpec::normalized(t_h, DensityFunction::geometric(a, b).unwrap()).unwrap();
            for i in 0..20 {
                let t = t_h * (i % 5) as f64 / 4.0;
                let k = i / 2;
                assert_relative_eq!(ratio_g(&spec, t, k).unwrap(), a.exp(), max_relative = 1e-12);
                assert_relative_eq!(second_difference_exponent(&spec, t, k).unwrap(), 1.0, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_like_pinned_values() {
        // mpmath oracle: Σ_{n<80} 0.7^{n²} π_{0.5}(n) at 40 digits.
        let spec = ProblemSpec::raw(1.0, gaussian()).unwrap();
        assert_relative_eq!(apply_semigroup(&spec, 0.5, 0).unwrap(), 0.837_535_072_832_354_5, max_relative = 1e-14);
        // Brute-force check of the same value to n = 60.
        let brute: f64 = (0..=60)
            .map(|n: usize| 0.7f64.powi((n * n) as i32) * log_pmf(0.5, n).exp())
            .sum();
        assert_relative_eq!(apply_semigroup(&spec, 0.5, 0).unwrap(), brute, max_relative = 1e-14);
        // F(0.3, 2) with T = 1, mpmath oracle.
        assert_relative_eq!(log_semigroup_f(&spec, 0.3, 2).unwrap(), -2.012_414_266_021_686_3, max_relative = 1e-13);
    }

    #[test]
    fn values_at_horizon_are_f() {
        let spec = ProblemSpec::raw(1.0, gaussian()).unwrap();
        assert_relative_eq!(ratio_g(&spec, 1.0, 0).unwrap(), 0.7, max_relative = 1e-14);
        assert_relative_eq!(second_difference_exponent(&spec, 1.0, 0).unwrap(), 0.49, max_relative = 1e-14);
        assert_relative_eq!(eta_ratio(&spec, 1.0).unwrap(), 1.0 / 0.7, max_relative = 1e-14);
        let table = DensityFunction::table(vec![1.0, 2.0, 1.0, 0.5], TableExtension::Geometric).unwrap();
        let spec = ProblemSpec::raw(1.0, table.clone()).unwrap();
        for k in 0..8 {
            assert_eq!(apply_semigroup(&spec, 0.0, k).unwrap(), table.value(k));
        }
    }

    #[test]
    fn eta_is_nonincreasing_for_gaussian_like() {
        let spec = ProblemSpec::normalized(1.0, gaussian()).unwrap();
        let eta0 = eta_ratio(&spec, 0.0).unwrap();
        let eta1 = eta_ratio(&spec, 1.0).unwrap();
        // mpmath oracle for η(0).
        assert_relative_eq!(eta0, 1.901_380_288_536_666, max_relative = 1e-13);
        assert!(eta0 >= eta1);
        let mut prev = f64::INFINITY;
        for i in 0..=20 {
            let eta = eta_ratio(&spec, i as f64 / 20.0).unwrap();
            assert!(eta <= prev + 1e-12);
            prev = eta;
        }
    }

    #[test]
    fn difference_examples() {
        assert_eq!(difference(|_| 4.0, 7), 0.0);
        assert_eq!(difference(|k| k as f64, 7), 1.0);
        assert_eq!(difference(|k| (k * k) as f64, 3), 7.0);
    }

    #[test]
    fn paired_evaluation_matches_single() {
        for f in [
            DensityFunction::gaussian_like(0.7, 1.0).unwrap(),
            DensityFunction::constant(),
            DensityFunction::poisson_kernel(2.0).unwrap(),
        ] {
            let spec = ProblemSpec::normalized(1.0, f).unwrap();
            for (t, k) in [(0.0, 0), (0.3, 2), (1.0, 5), (0.9, 0)] {
                let (a, b) = spec.log_semigroup_pair(t, k).unwrap();
                assert!((a - spec.log_semigroup(t, k).unwrap()).abs() < 1e-13);
                assert!((b - spec.log_semigroup(t, k + 1).unwrap()).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn semigroup_law() {
        let fams = [
            gaussian(),
            DensityFunction::geometric(0.4, 0.1).unwrap(),
            DensityFunction::poisson_kernel(2.0).unwrap(),
            DensityFunction::table(vec![1.0, 2.0, 1.0, 0.5], TableExtension::Geometric).unwrap(),
        ];
        let tol = SeriesTolerance::default();
        for f in fams {
            let spec = ProblemSpec::raw(1.0, f).unwrap();
            for &s in &[0.25, 0.5] {
                for &t in &[0.25, 0.5] {
                    for k in 0..=20 {
                        let direct = apply_semigroup(&spec, s + t, k).unwrap();
                        let composed = crate::poisson::weighted_series_sum(
                            |n| apply_semigroup(&spec, t, k + n).unwrap(),
                            s,
                            &tol,
                        )
                        .unwrap();
                        assert!((direct - composed).abs() <= 1e-10 * direct, "k={k} {direct} {composed}");
                    }
                }
            }
        }
    }

    #[test]
    fn heat_equation_is_first_order() {
        let geo = ProblemSpec::raw(1.0, DensityFunction::geometric(LN_2, 0.0).unwrap()).unwrap();
        let r3 = heat_residual(&geo, 0.5, 0, 1e-3).unwrap();
        let r4 = heat_residual(&geo, 0.5, 0, 1e-4).unwrap();
        // Closed form: residual/h → |∂²_t P_t f(0)|/2 = e^{t}/2 with e^a − 1 = 1.
        let limit = 0.5f64.exp() / 2.0;
        assert_relative_eq!(r3 / 1e-3, limit, max_relative = 2e-3);
        assert_relative_eq!(r4 / 1e-4, limit, max_relative = 2e-4);

        let table = DensityFunction::table(vec![1.0, 2.0, 1.0, 0.5], TableExtension::Geometric).unwrap();
        let spec = ProblemSpec::raw(1.0, table).unwrap();
        let r3 = heat_residual(&spec, 0.2, 1, 1e-3).unwrap();
        let r4 = heat_residual(&spec, 0.2, 1, 1e-4).unwrap();
        let c = r4 / 1e-4;
        assert!(r3 <= 1.1 * c * 1e-3 && r3 >= 0.9 * c * 1e-3, "{r3} {r4}");
    }

    #[test]
    fn f_and_g_equations_are_second_order() {
        let spec = ProblemSpec::normalized(1.0, gaussian()).unwrap();
        for k in 0..3 {
            let f3 = f_equation_residual(&spec, 0.5, k, 1e-3).unwrap();
            let f4 = f_equation_residual(&spec, 0.5, k, 1e-4).unwrap();
            assert!(f4 <= f3 / 50.0 || f4 < 1e-10, "k={k} {f3} {f4}");
            let g3 = g_equation_residual(&spec, 0.5, k, 1e-3).unwrap();
            let g4 = g_equation_residual(&spec, 0.5, k, 1e-4).unwrap();
            assert!(g4 <= g3 / 50.0 || g4 < 1e-10, "k={k} {g3} {g4}");
        }
        assert!(f_equation_residual(&spec, 0.5, 0, 0.6).is_err());
    }

    #[test]
    fn flow_time_is_checked() {
        let spec = ProblemSpec::normalized(1.0, gaussian()).unwrap();
        assert!(matches!(ratio_g(&spec, 1.5, 0), Err(Error::Domain(_))));
        assert!(matches!(eta_ratio(&spec, -0.1), Err(Error::Domain(_))));
        assert!(ProblemSpec::normalized(0.0, gaussian()).is_err());
    }

    #[test]
    fn positivity_of_ratios() {
        let spec = ProblemSpec::normalized(2.0, DensityFunction::poisson_kernel(2.0).unwrap()).unwrap();
        for i in 0..=10 {
            let t = 0.2 * i as f64;
            for k in 0..30 {
                assert!(ratio_g(&spec, t, k).unwrap() > 0.0);
                assert!(second_difference_exponent(&spec, t, k).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn reach_bound_covers_law_of_x_t() {
        let spec = ProblemSpec::normalized(1.0, gaussian()).unwrap();
        let k = spec.k_reach();
        let tail: f64 = (k + 1..k + 200).map(|j| spec.f(j) * log_pmf(1.0, j).exp()).sum();
        assert!(tail <= spec.tol().rel_tail);
        let normalized_mass: f64 = (0..=k).map(|j| spec.f(j) * log_pmf(1.0, j).exp()).sum();
        assert_relative_eq!(normalized_mass, 1.0, max_relative = 1e-13);
    }
}
