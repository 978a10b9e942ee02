//! Monte Carlo for the Poisson–Föllmer process.
//!
//! `X` starts at 0 and jumps by one with intensity `λ_t = G(t, X_{t−})`; at
//! time `T` it has law `μ = f̂ π_T`. Paths are drawn by thinning: each slice
//! of length `slice_len` gets a dominating rate `M = safety · max G` over nine
//! points of the slice, and every intensity evaluated afterwards is checked
//! against `M`.
//!
//! Path `i` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `i`, so
//! results do not depend on how paths are spread across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::poisson::phi_unchecked;
use crate::quadrature::{trapezoid, MarginalLaw, QuadratureConfig};
use crate::semigroup::{ratio_g, ProblemSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Thinning refresh interval.
    pub slice_len: f64,
    /// Margin of the dominating rate over the sampled slice maximum.
    pub safety: f64,
    /// Sorted diagnostic times; must contain `0` and `T`.
    pub diag_grid: Vec<f64>,
}

impl SimConfig {
    /// Defaults: `slice_len = T/64`, `safety = 1.5`, nine uniform grid times.
    pub fn new(horizon: f64, n_paths: usize, seed: u64) -> Self {
        SimConfig {
            n_paths,
            seed,
            slice_len: horizon / 64.0,
            safety: 1.5,
            diag_grid: uniform_grid(horizon, 9),
        }
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        if !(self.slice_len > 0.0 && self.slice_len <= horizon) {
            return Err(Error::domain(format!(
                "slice_len must be in (0, T = {horizon}], got {}",
                self.slice_len
            )));
        }
        if !(self.safety >= 1.2) || !self.safety.is_finite() {
            return Err(Error::domain(format!("safety must be >= 1.2, got {}", self.safety)));
        }
        let g = &self.diag_grid;
        if g.len() < 2 || g[0] != 0.0 || g[g.len() - 1] != horizon || g.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain(format!(
                "diag_grid must be strictly increasing from 0 to T = {horizon}"
            )));
        }
        Ok(())
    }
}

/// `m ≥ 2` equally spaced times from `0` to `horizon`, endpoints exact.
pub fn uniform_grid(horizon: f64, m: usize) -> Vec<f64> {
    let m = m.max(2);
    (0..m)
        .map(|i| if i + 1 == m { horizon } else { horizon * i as f64 / (m - 1) as f64 })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    /// Strictly increasing, in `(0, T]`.
    pub jump_times: Vec<f64>,
    /// `X` right after each jump: `1, 2, 3, …`.
    pub states: Vec<usize>,
    /// `λ_t = G(t, X_t)` on the diagnostic grid.
    pub lambda_at_grid: Vec<f64>,
    /// `∫₀^t λ_s ds` on the diagnostic grid.
    pub compensator_at_grid: Vec<f64>,
}

impl PathRecord {
    /// `X_t`, counting jumps at times `≤ t`.
    pub fn state_at(&self, t: f64) -> usize {
        self.jump_times.partition_point(|&s| s <= t)
    }

    /// `X_t − ∫₀^t λ_s ds` at grid index `i`, given the grid.
    pub fn compensated(&self, grid: &[f64], i: usize) -> f64 {
        self.state_at(grid[i]) as f64 - self.compensator_at_grid[i]
    }
}

/// One path of the Föllmer process driven by `rng`.
pub fn simulate_path<R: Rng>(spec: &ProblemSpec, cfg: &SimConfig, rng: &mut R) -> Result<PathRecord> {
    let horizon = spec.horizon();
    let k_reach = spec.k_reach();
    let mut jump_times = Vec::new();
    let mut states = Vec::new();
    let mut t = 0.0;
    let mut x = 0usize;
    while t < horizon {
        let end = (t + cfg.slice_len).min(horizon);
        let mut peak = 0.0f64;
        for i in 0..9 {
            let s = if i == 8 { end } else { t + (end - t) * i as f64 / 8.0 };
            peak = peak.max(ratio_g(spec, s, x)?);
        }
        let bound = cfg.safety * peak;
        loop {
            let u: f64 = rng.random();
            let tau = t - (1.0 - u).ln() / bound;
            if tau >= end {
                t = end;
                break;
            }
            let g = ratio_g(spec, tau, x)?;
            if g > bound {
                return Err(Error::Domination {
                    time: tau,
                    intensity: g,
                    bound,
                });
            }
            t = tau;
            if rng.random::<f64>() * bound < g {
                x += 1;
                if x > k_reach {
                    return Err(Error::Reach { state: x, k_reach });
                }
                jump_times.push(tau);
                states.push(x);
                break;
            }
        }
    }

    let grid = &cfg.diag_grid;
    let mut lambda_at_grid = Vec::with_capacity(grid.len());
    let mut compensator_at_grid = Vec::with_capacity(grid.len());
    let mut integral = 0.0;
    let mut prev = 0.0;
    for &g_t in grid {
        // Constant-state pieces between consecutive breakpoints in (prev, g_t].
        let mut a = prev;
        let lo = jump_times.partition_point(|&s| s <= prev);
        let hi = jump_times.partition_point(|&s| s <= g_t);
        for (j, &jt) in jump_times[lo..hi].iter().enumerate() {
            integral += simpson_intensity(spec, a, jt, lo + j)?;
            a = jt;
        }
        integral += simpson_intensity(spec, a, g_t, hi)?;
        prev = g_t;
        lambda_at_grid.push(ratio_g(spec, g_t, hi)?);
        compensator_at_grid.push(integral);
    }
    Ok(PathRecord {
        jump_times,
        states,
        lambda_at_grid,
        compensator_at_grid,
    })
}

/// Composite Simpson (8 panels) of `s ↦ G(s, x)` on `[a, b]`.
fn simpson_intensity(spec: &ProblemSpec, a: f64, b: f64, x: usize) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    const PANELS: usize = 8;
    let h = (b - a) / PANELS as f64;
    let mut sum = ratio_g(spec, a, x)? + ratio_g(spec, b, x)?;
    for i in 1..PANELS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * ratio_g(spec, a + h * i as f64, x)?;
    }
    Ok(sum * h / 3.0)
}

/// The random stream of path `index`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `cfg.n_paths` paths on `workers` threads, in path order.
pub fn simulate(spec: &ProblemSpec, cfg: &SimConfig, workers: usize) -> Result<Vec<PathRecord>> {
    if !spec.is_normalized() {
        return Err(Error::Precondition("simulation needs a normalized spec".into()));
    }
    cfg.validate(spec.horizon())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Precondition(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        (0..cfg.n_paths)
            .into_par_iter()
            .map(|i| simulate_path(spec, cfg, &mut path_rng(cfg.seed, i as u64)))
            .collect()
    })
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

impl McEstimate {
    pub fn from_samples<I: IntoIterator<Item = f64>>(samples: I) -> Self {
        // Welford, in sample order.
        let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
        for x in samples {
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
        let std_error = if n > 1 { (m2 / (n - 1) as f64 / n as f64).sqrt() } else { 0.0 };
        McEstimate {
            value: mean,
            std_error,
            n,
        }
    }

    /// `|value − target| ≤ 3 SE + allowance`.
    pub fn covers(&self, target: f64, allowance: f64) -> bool {
        (self.value - target).abs() <= 3.0 * self.std_error + allowance
    }
}

/// One row of the diagnostics table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticRow {
    pub t: f64,
    pub lambda: McEstimate,
    pub xtilde: McEstimate,
    pub phi_lambda: McEstimate,
}

/// Means of `λ_t`, `X̃_t` and `φ(λ_t)` on the grid.
pub fn martingale_diagnostics(paths: &[PathRecord], diag_grid: &[f64]) -> Vec<DiagnosticRow> {
    (0..diag_grid.len())
        .map(|i| DiagnosticRow {
            t: diag_grid[i],
            lambda: McEstimate::from_samples(paths.iter().map(|p| p.lambda_at_grid[i])),
            xtilde: McEstimate::from_samples(paths.iter().map(|p| p.compensated(diag_grid, i))),
            phi_lambda: McEstimate::from_samples(paths.iter().map(|p| phi_unchecked(p.lambda_at_grid[i]))),
        })
        .collect()
}

/// `∫₀^T E[φ(λ_t)] dt` by the trapezoid rule on the grid, path by path.
pub fn mc_entropy_estimate(paths: &[PathRecord], diag_grid: &[f64]) -> McEstimate {
    McEstimate::from_samples(paths.iter().map(|p| {
        let values: Vec<f64> = p.lambda_at_grid.iter().map(|&l| phi_unchecked(l)).collect();
        trapezoid(diag_grid, &values)
    }))
}

/// Mean of `φ(λ_t)` along the grid and its worst step down, in units of the
/// standard error of the pathwise increment.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmartingaleReport {
    pub means: Vec<McEstimate>,
    /// `min_i (mean_{i+1} − mean_i) / SE_i`; `+∞` when every increment is exact.
    pub worst_z: f64,
    pub non_decreasing: bool,
}

/// `t ↦ E[φ(λ_t)]` should be non-decreasing; a step down beyond 3 SE fails.
pub fn submartingale_check(paths: &[PathRecord], diag_grid: &[f64]) -> SubmartingaleReport {
    let means: Vec<McEstimate> = (0..diag_grid.len())
        .map(|i| McEstimate::from_samples(paths.iter().map(|p| phi_unchecked(p.lambda_at_grid[i]))))
        .collect();
    let mut worst_z = f64::INFINITY;
    let mut non_decreasing = true;
    for i in 0..diag_grid.len().saturating_sub(1) {
        let step = McEstimate::from_samples(
            paths
                .iter()
                .map(|p| phi_unchecked(p.lambda_at_grid[i + 1]) - phi_unchecked(p.lambda_at_grid[i])),
        );
        if step.value < -(3.0 * step.std_error + 1e-12) {
            non_decreasing = false;
        }
        if step.std_error > 0.0 {
            worst_z = worst_z.min(step.value / step.std_error);
        }
    }
    SubmartingaleReport {
        means,
        worst_z,
        non_decreasing,
    }
}

/// Empirical law of `X_t` against `(P_{T−t} f̂) π_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LawTest {
    pub tv_distance: f64,
    pub chi_square: f64,
    /// Number of pooled bins minus one.
    pub degrees_of_freedom: usize,
}

/// Total variation and a chi-square statistic over bins with expected count
/// `≥ 5`; states past the law's support share the last bin.
pub fn marginal_law_test(paths: &[PathRecord], spec: &ProblemSpec, t: f64) -> Result<LawTest> {
    let n = paths.len();
    if n == 0 {
        return Err(Error::InsufficientData("no paths".into()));
    }
    let law = MarginalLaw::new(spec, t, QuadratureConfig::for_spec(spec).k_cap)?;
    let support = law.len();
    let mut counts = vec![0usize; support + 1];
    for p in paths {
        counts[p.state_at(t).min(support)] += 1;
    }
    let mut expected: Vec<f64> = law.weights().to_vec();
    expected.push((1.0 - law.weight_sum()).max(0.0));
    let nf = n as f64;
    let tv_distance = 0.5
        * counts
            .iter()
            .zip(&expected)
            .map(|(&c, &p)| (c as f64 / nf - p).abs())
            .sum::<f64>();

    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(&expected) {
        obs += c as f64;
        exp += p * nf;
        if exp >= 5.0 {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if let Some(last) = bins.last_mut() {
        last.0 += obs;
        last.1 += exp;
    }
    if bins.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} bin(s) with expected count >= 5 at t={t}",
            bins.len()
        )));
    }
    let chi_square = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    Ok(LawTest {
        tv_distance,
        chi_square,
        degrees_of_freedom: bins.len() - 1,
    })
}

/// Gaps between consecutive jumps (the first measured from 0) that start at
/// or before `max_start`. With `max_start` well below `T` the gaps are not
/// censored by the horizon.
pub fn inter_jump_times(paths: &[PathRecord], max_start: f64) -> Vec<f64> {
    let mut gaps = Vec::new();
    for p in paths {
        let mut start = 0.0;
        for &tau in &p.jump_times {
            if start > max_start {
                break;
            }
            gaps.push(tau - start);
            start = tau;
        }
    }
    gaps
}

/// One-sample Kolmogorov–Smirnov test against `Exp(rate)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

pub fn ks_test_exponential(samples: &[f64], rate: f64) -> KsTest {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = 1.0 - (-rate * x).exp();
        d = d.max(cdf - i as f64 / nf).max((i + 1) as f64 / nf - cdf);
    }
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    KsTest {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
        n,
    }
}

/// `P(K > λ)` for the Kolmogorov distribution.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityFunction;
    use std::f64::consts::LN_2;

    fn spec(f: DensityFunction) -> ProblemSpec {
        ProblemSpec::normalized(1.0, f).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig::new(1.0, 10, 1);
        assert!(cfg.validate(1.0).is_ok());
        assert_eq!(cfg.diag_grid.len(), 9);
        assert_eq!(cfg.diag_grid[8], 1.0);
        cfg.safety = 1.1;
        assert!(cfg.validate(1.0).is_err());
        cfg.safety = 1.5;
        cfg.slice_len = 2.0;
        assert!(cfg.validate(1.0).is_err());
        cfg.slice_len = 0.1;
        cfg.diag_grid = vec![0.0, 0.5];
        assert!(cfg.validate(1.0).is_err());
    }

    #[test]
    fn paths_are_counting_paths() {
        let s = spec(DensityFunction::gaussian_like(0.7, 1.0).unwrap());
        let cfg = SimConfig::new(1.0, 200, 9);
        for p in simulate(&s, &cfg, 2).unwrap() {
            assert!(p.jump_times.windows(2).all(|w| w[0] < w[1]));
            assert!(p.jump_times.iter().all(|&t| t > 0.0 && t <= 1.0));
            assert_eq!(p.states, (1..=p.jump_times.len()).collect::<Vec<_>>());
            assert!(p.compensator_at_grid.iter().all(|c| c.is_finite()));
            assert_eq!(p.compensator_at_grid[0], 0.0);
        }
    }

    #[test]
    fn constant_intensity_compensator_is_exact() {
        let s = spec(DensityFunction::geometric(LN_2, 0.0).unwrap());
        let cfg = SimConfig::new(1.0, 20, 3);
        for p in simulate(&s, &cfg, 1).unwrap() {
            for (c, t) in p.compensator_at_grid.iter().zip(&cfg.diag_grid) {
                assert!((c - 2.0 * t).abs() < 1e-12);
            }
            assert!(p.lambda_at_grid.iter().all(|l| (l - 2.0).abs() < 1e-12));
        }
    }

    #[test]
    fn worker_count_does_not_change_paths() {
        let s = spec(DensityFunction::gaussian_like(0.7, 1.0).unwrap());
        let cfg = SimConfig::new(1.0, 300, 42);
        assert_eq!(simulate(&s, &cfg, 1).unwrap(), simulate(&s, &cfg, 4).unwrap());
    }

    #[test]
    fn reach_is_enforced() {
        let f = DensityFunction::geometric(LN_2, 0.0).unwrap();
        let s = ProblemSpec::new(
            1.0,
            f,
            crate::semigroup::SpecOptions {
                k_reach: Some(0),
                ..Default::default()
            },
        )
        .unwrap();
        let cfg = SimConfig::new(1.0, 50, 1);
        assert!(matches!(simulate(&s, &cfg, 1), Err(Error::Reach { .. })));
    }

    #[test]
    fn estimates_and_ks() {
        let e = McEstimate::from_samples([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.value, 2.5);
        assert!((e.std_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(McEstimate::from_samples([0.0; 5]).std_error, 0.0);
        // Exact exponential quantiles give a tiny statistic.
        let n = 1000;
        let q: Vec<f64> = (0..n).map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln()).collect();
        let ks = ks_test_exponential(&q, 1.0);
        assert!(ks.statistic <= 0.5 / n as f64 + 1e-12 && ks.p_value > 0.99);
        assert!(ks_test_exponential(&q, 2.0).p_value < 1e-6);
        assert!((kolmogorov_survival(1.358) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn inter_jump_times_respect_start_cutoff() {
        let p = PathRecord {
            jump_times: vec![0.5, 1.0, 4.0],
            states: vec![1, 2, 3],
            lambda_at_grid: vec![],
            compensator_at_grid: vec![],
        };
        assert_eq!(inter_jump_times(&[p.clone()], 0.7), vec![0.5, 0.5]);
        assert_eq!(inter_jump_times(&[p], 10.0), vec![0.5, 0.5, 3.0]);
    }
}
