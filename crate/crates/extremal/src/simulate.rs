//! Seedable generators for the dependent study processes, exact samplers
//! for the limiting models, and the Monte Carlo benchmark harness.
//!
//! Every generator is a deterministic function of its seed: the base
//! uniform generator is ChaCha12 (see [`GENERATOR_NAME`]), seeded with
//! `seed_from_u64`. Monte Carlo replicate `r` of a batch draws from a
//! fresh generator seeded with `master_seed + r`, so batches are
//! reproducible and order-independent under parallel evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Open01, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::gpd::gpd_quantile;
use crate::kgaps::{intervals_estimator, mle};
use crate::series::{
    exceedances, inter_exceedance_times, k_gaps, sorted_quantile, KGapSample, TimeSeries,
};

/// Name of the base uniform generator, pinned in output metadata so results
/// can be reproduced across builds.
pub const GENERATOR_NAME: &str = "chacha12";

/// Samples discarded before recording an autoregressive recursion.
pub const BURN_IN: usize = 1000;

/// Truncation lag of the fractional-differencing moving-average expansion.
pub const FARIMA_TRUNCATION: usize = 5000;

/// The crate's seeded generator.
pub fn seeded_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Run `reps` independent replicates, the `r`-th seeded with
/// `master_seed + r`. Evaluates in parallel when the `parallel` feature is
/// enabled; results keep replicate order either way.
pub fn replicate<R, F>(reps: usize, master_seed: u64, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64) -> R + Sync + Send,
{
    exec::map_collect(
        (0..reps)
            .map(|r| master_seed.wrapping_add(r as u64))
            .collect(),
        f,
    )
}

fn open01(rng: &mut ChaCha12Rng) -> f64 {
    rng.sample(Open01)
}

fn standard_cauchy(rng: &mut ChaCha12Rng) -> f64 {
    (std::f64::consts::PI * (open01(rng) - 0.5)).tan()
}

fn gumbel(rng: &mut ChaCha12Rng) -> f64 {
    -(-open01(rng).ln()).ln()
}

/// AR(1) with standard Cauchy innovations:
/// `Y_i = phi Y_{i-1} + Z_i`, burn-in of [`BURN_IN`] samples discarded.
///
/// With `phi = 0.7` the extremal index is 0.3 and `K = 1` is a suitable
/// run parameter.
pub fn ar1_cauchy(n: usize, phi: f64, seed: u64) -> Result<TimeSeries> {
    if !(phi.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "ar1 needs |phi| < 1, got {phi}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut x = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..BURN_IN + n {
        x = phi * x + standard_cauchy(&mut rng);
        if i >= BURN_IN {
            out.push(x);
        }
    }
    TimeSeries::new(out)
}

/// AR(2) with unit-scale Pareto innovations of tail index `alpha`
/// (`Z = U^{-1/alpha}` on `[1, inf)`):
/// `Y_i = phi1 Y_{i-1} + phi2 Y_{i-2} + Z_i`, burn-in [`BURN_IN`].
///
/// With `phi1 = 0.95`, `phi2 = -0.89`, `alpha = 2` the extremal index is
/// 0.25; run parameters 5-6 suit the roughly 6-step oscillation.
pub fn ar2_pareto(n: usize, phi1: f64, phi2: f64, alpha: f64, seed: u64) -> Result<TimeSeries> {
    let stationary = phi2 + phi1 < 1.0 && phi2 - phi1 < 1.0 && phi2.abs() < 1.0;
    if !stationary {
        return Err(Error::InvalidParameter(format!(
            "ar2 parameters ({phi1}, {phi2}) outside the stationarity triangle"
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "pareto tail index must be positive, got {alpha}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let (mut prev, mut prev2) = (0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for i in 0..BURN_IN + n {
        let z = open01(&mut rng).powf(-1.0 / alpha);
        let x = phi1 * prev + phi2 * prev2 + z;
        prev2 = prev;
        prev = x;
        if i >= BURN_IN {
            out.push(x);
        }
    }
    TimeSeries::new(out)
}

fn logaddexp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Conditional CDF of the next state given the current one under the
/// symmetric logistic bivariate distribution with Gumbel margins,
/// `F(x, y) = exp{-(e^{-rx} + e^{-ry})^{1/r}}`:
///
/// `C(y | x) = exp(a^{1/r} - s^{1/r}) (a/s)^{(r-1)/r}` with
/// `a = e^{-rx}`, `s = a + e^{-ry}`, evaluated in log scale.
fn logistic_cond_cdf(x: f64, y: f64, r: f64) -> f64 {
    let la = -r * x;
    let lb = -r * y;
    let ls = logaddexp(la, lb);
    ((la / r).exp() - (ls / r).exp() + (la - ls) * (r - 1.0) / r).exp()
}

fn logistic_next(x: f64, u: f64, r: f64) -> Result<f64> {
    // Bracket in Gumbel scale, widened if the draw is extreme.
    let mut lo = x - 40.0;
    let mut hi = x + 40.0;
    let mut widenings = 0;
    while logistic_cond_cdf(x, lo, r) > u {
        lo -= 40.0;
        widenings += 1;
        if widenings > 50 {
            return Err(Error::NonConvergence(
                "logistic transition bracket (lower)".into(),
            ));
        }
    }
    while logistic_cond_cdf(x, hi, r) < u {
        hi += 40.0;
        widenings += 1;
        if widenings > 50 {
            return Err(Error::NonConvergence(
                "logistic transition bracket (upper)".into(),
            ));
        }
    }
    for _ in 0..500 {
        if hi - lo <= 1e-10 {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        if logistic_cond_cdf(x, mid, r) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence("logistic transition bisection".into()))
}

/// First-order Markov chain with stationary Gumbel margins whose
/// consecutive pairs follow the symmetric logistic model with dependence
/// `r >= 1`. `r = 1` factorizes into independence. Transitions are sampled
/// by numerical inversion of the conditional CDF (bisection to 1e-10).
///
/// The chain starts from an exact Gumbel draw, so no burn-in is needed.
/// With `r = 2` the extremal index is 0.33; `K = 5` is a suitable run
/// parameter.
pub fn logistic_markov(n: usize, r: f64, seed: u64) -> Result<TimeSeries> {
    if !(r >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "logistic dependence must satisfy r >= 1, got {r}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut x = gumbel(&mut rng);
    let mut out = Vec::with_capacity(n);
    out.push(x);
    while out.len() < n {
        let u = open01(&mut rng);
        x = logistic_next(x, u, r)?;
        out.push(x);
    }
    TimeSeries::new(out)
}

/// Moving-average weights of the fractional difference `(1-B)^{-d}`:
/// `psi_0 = 1`, `psi_j = psi_{j-1} (j - 1 + d) / j`, truncated at lag `m`.
pub(crate) fn fractional_ma_weights(d: f64, m: usize) -> Vec<f64> {
    let mut psi = Vec::with_capacity(m + 1);
    psi.push(1.0);
    for j in 1..=m {
        let prev = psi[j - 1];
        psi.push(prev * (j as f64 - 1.0 + d) / j as f64);
    }
    psi
}

/// Fractionally differenced ARIMA(1, 0, d) with Gaussian innovations:
/// white noise is filtered by the truncated MA expansion of `(1-B)^{-d}`
/// (lag [`FARIMA_TRUNCATION`]), then fed through an AR(1) recursion with
/// parameter `phi`. Burn-in is the truncation lag plus [`BURN_IN`].
///
/// `d = 0` collapses the filter to identity and reproduces a Gaussian
/// AR(1), whose extremal index is 1; `d` in (0, 0.5) induces long memory.
pub fn farima(n: usize, phi: f64, d: f64, seed: u64) -> Result<TimeSeries> {
    if !(0.0..0.5).contains(&d) {
        return Err(Error::InvalidParameter(format!(
            "fractional difference parameter must lie in [0, 0.5), got {d}"
        )));
    }
    if !(phi.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "farima needs |phi| < 1, got {phi}"
        )));
    }
    let m = FARIMA_TRUNCATION;
    let burn = m + BURN_IN;
    let total = n + burn;
    let mut rng = seeded_rng(seed);
    let eps: Vec<f64> = (0..total).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();

    let psi = fractional_ma_weights(d, m);
    let mut x = 0.0;
    let mut out = Vec::with_capacity(n);
    for t in 0..total {
        let w = if d == 0.0 {
            eps[t]
        } else {
            let lags = t.min(m);
            (0..=lags).map(|j| psi[j] * eps[t - j]).sum()
        };
        x = phi * x + w;
        if t >= burn {
            out.push(x);
        }
    }
    TimeSeries::new(out)
}

/// Exact draws from the limiting K-gap mixture: a gap is zero with
/// probability `1 - theta` and exponential with rate `theta` otherwise.
/// Produces the `n_exceedances - 1` gaps of a hypothetical record, with
/// unit tail probability and `K = 0`.
pub fn exact_mixture_gaps(n_exceedances: usize, theta: f64, seed: u64) -> Result<KGapSample> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "theta must lie in (0, 1], got {theta}"
        )));
    }
    if n_exceedances < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 exceedances, got {n_exceedances}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let c: Vec<f64> = (0..n_exceedances - 1)
        .map(|_| {
            if open01(&mut rng) <= theta {
                -open01(&mut rng).ln() / theta
            } else {
                0.0
            }
        })
        .collect();
    KGapSample::from_gaps(c, 0, 1.0)
}

/// Exact generalized Pareto draws by inverse CDF; all strictly positive.
pub fn exact_gpd_sample(n: usize, xi: f64, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "scale must be positive, got {sigma}"
        )));
    }
    let mut rng = seeded_rng(seed);
    (0..n)
        .map(|_| gpd_quantile(xi, sigma, open01(&mut rng)))
        .collect()
}

/// Series whose exceedance structure realizes exact mixture gaps at run
/// parameter `k >= 1`: draws `n_exceedances - 1` mixture gaps, converts
/// them to integer inter-exceedance times (`T = k + round(c / tail_prob)`
/// for positive gaps, `T = 1` for zero gaps, so the K-gap is truncated to
/// zero exactly), and plants exceedances (`1 +` an exponential excess) on
/// a zero background.
///
/// Any threshold quantile that lands on the background (for example
/// `1 - tail_prob`) recovers exactly the planted exceedances, so the full
/// estimation pipeline at the same `k` can be exercised against the known
/// `theta`.
pub fn mixture_series(
    n_exceedances: usize,
    theta: f64,
    tail_prob: f64,
    k: u64,
    seed: u64,
) -> Result<TimeSeries> {
    if !(tail_prob > 0.0 && tail_prob < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tail probability must lie in (0, 1), got {tail_prob}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidParameter(
            "mixture series needs k >= 1: integer times cannot carry exact zero gaps at k = 0"
                .into(),
        ));
    }
    let gaps = exact_mixture_gaps(n_exceedances, theta, seed)?;
    let mut rng = seeded_rng(seed.wrapping_add(0x9e3779b97f4a7c15));
    let mut positions = vec![1usize];
    for &c in gaps.gaps() {
        let t = if c > 0.0 {
            k as usize + (c / tail_prob).round().max(1.0) as usize
        } else {
            1
        };
        positions.push(positions.last().unwrap() + t);
    }
    let len = positions.last().unwrap() + 1;
    let mut values = vec![0.0; len];
    for &p in &positions {
        values[p - 1] = 1.0 - open01(&mut rng).ln();
    }
    TimeSeries::new(values)
}

// ---------------------------------------------------------------------------
// Benchmark harness
// ---------------------------------------------------------------------------

/// Study process of the estimator benchmark, with its known extremal index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchProcess {
    /// AR(1), Cauchy innovations, `phi = 0.7`; `theta = 0.3`.
    Ar1Cauchy,
    /// AR(2), Pareto(2) innovations, `phi = (0.95, -0.89)`; `theta = 0.25`.
    Ar2Pareto,
    /// Logistic Markov chain, `r = 2`; `theta = 0.33`.
    LogisticMarkov,
}

impl BenchProcess {
    pub fn name(self) -> &'static str {
        match self {
            BenchProcess::Ar1Cauchy => "ar1",
            BenchProcess::Ar2Pareto => "ar2",
            BenchProcess::LogisticMarkov => "markov",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "ar1" => Some(BenchProcess::Ar1Cauchy),
            "ar2" => Some(BenchProcess::Ar2Pareto),
            "markov" => Some(BenchProcess::LogisticMarkov),
            _ => None,
        }
    }

    pub fn true_theta(self) -> f64 {
        match self {
            BenchProcess::Ar1Cauchy => 0.3,
            BenchProcess::Ar2Pareto => 0.25,
            BenchProcess::LogisticMarkov => 0.33,
        }
    }

    /// Run parameter suggested by the misspecification tests.
    pub fn default_k(self) -> u64 {
        match self {
            BenchProcess::Ar1Cauchy => 1,
            BenchProcess::Ar2Pareto => 6,
            BenchProcess::LogisticMarkov => 5,
        }
    }

    pub fn simulate(self, n: usize, seed: u64) -> Result<TimeSeries> {
        match self {
            BenchProcess::Ar1Cauchy => ar1_cauchy(n, 0.7, seed),
            BenchProcess::Ar2Pareto => ar2_pareto(n, 0.95, -0.89, 2.0, seed),
            BenchProcess::LogisticMarkov => logistic_markov(n, 2.0, seed),
        }
    }
}

/// Estimator compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchEstimator {
    KgapsMle,
    Intervals,
}

impl BenchEstimator {
    pub fn name(self) -> &'static str {
        match self {
            BenchEstimator::KgapsMle => "kgaps_mle",
            BenchEstimator::Intervals => "intervals",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "kgaps_mle" => Some(BenchEstimator::KgapsMle),
            "intervals" => Some(BenchEstimator::Intervals),
            _ => None,
        }
    }
}

/// Benchmark configuration: processes with their run parameters, the
/// estimators to compare, replication count, series length, and the
/// threshold quantile grid.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub processes: Vec<(BenchProcess, u64)>,
    pub estimators: Vec<BenchEstimator>,
    pub reps: usize,
    pub n: usize,
    pub p_grid: Vec<f64>,
    pub seed: u64,
}

/// One row of the benchmark table.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub process: &'static str,
    pub estimator: &'static str,
    pub quantile: f64,
    pub k: u64,
    pub n: usize,
    pub reps: usize,
    /// `median(theta_hat) / theta - 1`.
    pub median_rel_bias: f64,
    /// Root mean squared error against the known extremal index.
    pub rmse: f64,
    pub seed: u64,
}

/// Monte Carlo comparison of the K-gaps MLE and the intervals estimator on
/// processes with known extremal index: median relative bias and RMSE per
/// (process, estimator, quantile).
///
/// Replicate `r` of process block `i` is seeded with
/// `seed + (i << 32) + r`, so the table is deterministic given `seed`.
pub fn benchmark(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.reps < 10 {
        return Err(Error::InvalidParameter(format!(
            "benchmark needs at least 10 replications, got {}",
            cfg.reps
        )));
    }
    if cfg.processes.is_empty() || cfg.estimators.is_empty() || cfg.p_grid.is_empty() {
        return Err(Error::InvalidParameter(
            "benchmark needs at least one process, estimator and quantile".into(),
        ));
    }
    for &p in &cfg.p_grid {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "quantile {p} outside (0, 1)"
            )));
        }
    }

    let mut rows = Vec::new();
    for (block, &(process, k)) in cfg.processes.iter().enumerate() {
        let block_seed = cfg.seed.wrapping_add((block as u64) << 32);
        // theta_hat[rep][quantile][estimator]
        let estimates: Vec<Result<Vec<Vec<f64>>>> =
            replicate(cfg.reps, block_seed, |rep_seed| {
                let series = process.simulate(cfg.n, rep_seed)?;
                let mut sorted = series.values().to_vec();
                sorted.sort_unstable_by(f64::total_cmp);
                cfg.p_grid
                    .iter()
                    .map(|&p| {
                        let u = sorted_quantile(&sorted, p)?;
                        let record = exceedances(&series, u)?;
                        let times = inter_exceedance_times(&record)?;
                        cfg.estimators
                            .iter()
                            .map(|est| match est {
                                BenchEstimator::KgapsMle => {
                                    let sample = k_gaps(&times, k, record.tail_prob())?;
                                    Ok(mle(&sample)?.theta)
                                }
                                BenchEstimator::Intervals => intervals_estimator(&times),
                            })
                            .collect()
                    })
                    .collect()
            });
        let estimates: Vec<Vec<Vec<f64>>> = estimates.into_iter().collect::<Result<_>>()?;

        let theta = process.true_theta();
        for (pi, &p) in cfg.p_grid.iter().enumerate() {
            for (ei, est) in cfg.estimators.iter().enumerate() {
                let mut thetas: Vec<f64> =
                    estimates.iter().map(|rep| rep[pi][ei]).collect();
                thetas.sort_unstable_by(f64::total_cmp);
                let median = {
                    let n = thetas.len();
                    if n % 2 == 1 {
                        thetas[n / 2]
                    } else {
                        0.5 * (thetas[n / 2 - 1] + thetas[n / 2])
                    }
                };
                let mse = thetas
                    .iter()
                    .map(|t| (t - theta) * (t - theta))
                    .sum::<f64>()
                    / thetas.len() as f64;
                rows.push(BenchRow {
                    process: process.name(),
                    estimator: est.name(),
                    quantile: p,
                    k,
                    n: cfg.n,
                    reps: cfg.reps,
                    median_rel_bias: median / theta - 1.0,
                    rmse: mse.sqrt(),
                    seed: cfg.seed,
                });
            }
        }
    }
    Ok(rows)
}
