//! The K-gaps likelihood and its closed-form maximum-likelihood estimator
//! of the extremal index.
//!
//! In the limit, a normalized K-gap is zero with probability `1 - theta`
//! and exponential with rate `theta` otherwise, which gives the
//! log-likelihood
//!
//! ```text
//! l(theta) = (N - 1 - N_C) log(1 - theta) + 2 N_C log(theta) - theta sum(c_i)
//! ```
//!
//! over the `N - 1` gaps, where `N_C` counts the positive gaps. The score
//! equation is a quadratic in `theta` whose smaller root is the MLE.
//! Standard errors come from the information sandwich, which stays valid
//! when the mixture model is misspecified.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::series::{inter_exceedance_times, k_gaps, ExceedanceRecord, KGapSample};
use crate::simulate::seeded_rng;

use rand::Rng;

/// Extremal-index estimate with likelihood value and standard errors.
///
/// Standard errors are absent when the estimate sits on the boundary of
/// `[0, 1]`, where the likelihood is not regular.
#[derive(Debug, Clone, Serialize)]
pub struct ThetaEstimate {
    /// The estimate, clipped to `[0, 1]`.
    pub theta: f64,
    /// Log-likelihood at `theta` (boundary limits use the convention
    /// `0 * log 0 = 0`).
    pub loglik: f64,
    /// Misspecification-robust sandwich standard error.
    pub se_sandwich: Option<f64>,
    /// Inverse observed information standard error.
    pub se_naive: Option<f64>,
    /// Number of gaps in the sample (`N - 1` for a record-derived sample).
    pub n_gaps: usize,
    /// Effective sample size `(sum w)^2 / sum w^2`; equals `n_gaps` when
    /// unweighted. Used in place of the gap count in standard errors.
    pub effective_gaps: f64,
    /// Run parameter of the sample.
    pub k: u64,
    /// Tail probability used to normalize the gaps.
    pub threshold_prob: f64,
    /// True when the estimate was clipped to 0 or 1.
    pub boundary: bool,
}

/// Log-likelihood of the K-gaps mixture at `theta` strictly inside (0, 1).
///
/// With weights, each gap's contribution is multiplied by its weight.
pub fn log_likelihood(theta: f64, sample: &KGapSample) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::ThetaOutOfDomain(theta));
    }
    Ok(loglik_unchecked(theta, sample))
}

/// Log-likelihood with boundary limits: coefficients of `log 0` terms are
/// zero exactly when the value stays finite.
fn loglik_unchecked(theta: f64, sample: &KGapSample) -> f64 {
    let (m, nc, s) = sample.suff_stats();
    let zero_coef = m - nc;
    let mut ll = -theta * s;
    if zero_coef > 0.0 {
        ll += zero_coef * (1.0 - theta).ln();
    }
    if nc > 0.0 {
        ll += 2.0 * nc * theta.ln();
    }
    ll
}

/// Closed-form maximum-likelihood estimate of the extremal index.
///
/// With `m = sum(w)`, `NC = sum(w I(c > 0))` and `S = sum(w c)`, the score
/// equation is `S theta^2 - (S + m + NC) theta + 2 NC = 0`; the smaller
/// root, computed through the product-of-roots identity so large `S` does
/// not cancel, is the estimate. `S = 0` gives 0 and an all-positive sample
/// whose root exceeds 1 gives 1, both flagged as boundary.
pub fn mle(sample: &KGapSample) -> Result<ThetaEstimate> {
    if sample.n_gaps() == 0 {
        return Err(Error::EmptySample);
    }
    let (m, nc, s) = sample.suff_stats();
    let (theta, boundary) = if s == 0.0 {
        // Every gap is zero: all mass at the point component.
        (0.0, true)
    } else if nc >= m {
        // No zero gaps: l(theta) = 2 m log(theta) - theta S.
        let cand = 2.0 * m / s;
        if cand < 1.0 {
            (cand, false)
        } else {
            (1.0, true)
        }
    } else {
        let b = s + m + nc;
        let disc = (b * b - 8.0 * nc * s).max(0.0);
        let root = 4.0 * nc / (b + disc.sqrt());
        (root.min(1.0), false)
    };

    let loglik = loglik_unchecked(theta, sample);
    let (se_sandwich, se_naive) = if boundary {
        (None, None)
    } else {
        let (sw, nv) = sandwich_se(theta, sample)?;
        (Some(sw), Some(nv))
    };
    Ok(ThetaEstimate {
        theta,
        loglik,
        se_sandwich,
        se_naive,
        n_gaps: sample.n_gaps(),
        effective_gaps: sample.effective_size(),
        k: sample.k(),
        threshold_prob: sample.tail_prob(),
        boundary,
    })
}

/// Per-gap score of the K-gaps log-likelihood,
/// `-I(c = 0)/(1 - theta) + 2 I(c > 0)/theta - c`.
pub(crate) fn score_term(theta: f64, c: f64) -> f64 {
    if c > 0.0 {
        2.0 / theta - c
    } else {
        -1.0 / (1.0 - theta)
    }
}

/// Per-gap negative second derivative,
/// `I(c = 0)/(1 - theta)^2 + 2 I(c > 0)/theta^2`.
pub(crate) fn info_term(theta: f64, c: f64) -> f64 {
    if c > 0.0 {
        2.0 / (theta * theta)
    } else {
        1.0 / ((1.0 - theta) * (1.0 - theta))
    }
}

/// Sandwich and naive standard errors at `theta` strictly inside (0, 1).
///
/// `I-bar` is the mean observed information per gap and `J-bar` the mean
/// squared score; the sandwich variance is `J / (n I^2)` and the naive one
/// `1 / (n I)`, with `n` the effective gap count.
pub fn sandwich_se(theta: f64, sample: &KGapSample) -> Result<(f64, f64)> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::ThetaOutOfDomain(theta));
    }
    let (ibar, jbar) = info_means(theta, sample);
    let eff = sample.effective_size();
    let se_sandwich = (jbar / (eff * ibar * ibar)).sqrt();
    let se_naive = 1.0 / (eff * ibar).sqrt();
    Ok((se_sandwich, se_naive))
}

/// Weighted means of the observed information and the squared score.
pub(crate) fn info_means(theta: f64, sample: &KGapSample) -> (f64, f64) {
    let mut ibar = 0.0;
    let mut jbar = 0.0;
    let mut total = 0.0;
    let weight_of = |i: usize| sample.weights().map_or(1.0, |w| w[i]);
    for (i, &c) in sample.gaps().iter().enumerate() {
        let w = weight_of(i);
        let sc = score_term(theta, c);
        ibar += w * info_term(theta, c);
        jbar += w * sc * sc;
        total += w;
    }
    (ibar / total, jbar / total)
}

/// The intervals estimator of the extremal index, computed from raw
/// inter-exceedance times. The most common comparator for the K-gaps MLE.
pub fn intervals_estimator(times: &[u64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::TooFewObservations {
            context: "intervals estimator",
            need: 2,
            found: times.len(),
        });
    }
    let l = times.len() as f64;
    let max = *times.iter().max().expect("nonempty");
    let theta = if max <= 2 {
        let sum: f64 = times.iter().map(|&t| t as f64).sum();
        let sum_sq: f64 = times.iter().map(|&t| (t * t) as f64).sum();
        2.0 * sum * sum / (l * sum_sq)
    } else {
        let sum: f64 = times.iter().map(|&t| (t - 1) as f64).sum();
        let cross: f64 = times
            .iter()
            .map(|&t| (t as f64 - 1.0) * (t as f64 - 2.0))
            .sum();
        2.0 * sum * sum / (l * cross)
    };
    Ok(theta.min(1.0))
}

/// Smoothing kernel for locally-weighted estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// Indicator of `|z| <= 1`: a locally constant fit over a window.
    Uniform,
    /// `(15/16) (1 - z^2)^2` on `|z| <= 1`.
    Biweight,
}

impl Kernel {
    fn eval(self, z: f64) -> f64 {
        let a = z.abs();
        match self {
            Kernel::Uniform => {
                if a <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Kernel::Biweight => {
                if a <= 1.0 {
                    let t = 1.0 - z * z;
                    15.0 / 16.0 * t * t
                } else {
                    0.0
                }
            }
        }
    }
}

/// Locally-weighted estimate at `center`: gap `i` at time `gap_times[i]`
/// receives weight `kernel((t_i - center)/bandwidth)` and the weighted MLE
/// is returned, with the effective sample size driving the standard errors.
pub fn local_theta(
    sample: &KGapSample,
    gap_times: &[f64],
    center: f64,
    bandwidth: f64,
    kernel: Kernel,
) -> Result<ThetaEstimate> {
    if gap_times.len() != sample.n_gaps() {
        return Err(Error::InvalidParameter(format!(
            "{} gap times for {} gaps",
            gap_times.len(),
            sample.n_gaps()
        )));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    let weights: Vec<f64> = gap_times
        .iter()
        .map(|&t| kernel.eval((t - center) / bandwidth))
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidParameter(
            "no gap has positive kernel weight at this center".into(),
        ));
    }
    let weighted = KGapSample::from_gaps(sample.gaps().to_vec(), sample.k(), sample.tail_prob())?
        .with_weights(weights)?;
    mle(&weighted)
}

/// Percentile bootstrap confidence interval for the extremal index.
#[derive(Debug, Clone, Serialize)]
pub struct BootstrapInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub replicates: usize,
    /// True when every replicate estimate was a boundary value.
    pub degenerate: bool,
}

/// Nonparametric bootstrap: resample the inter-exceedance times with
/// replacement `b` times, re-derive K-gaps with the record's tail
/// probability, and take the percentile interval of the re-estimated
/// extremal indices. Replicate `r` draws from a generator seeded with
/// `seed + r`, so the interval is deterministic given `seed`.
pub fn bootstrap_ci(
    record: &ExceedanceRecord,
    k: u64,
    b: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapInterval> {
    if b < 100 {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs at least 100 replicates, got {b}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let times = inter_exceedance_times(record)?;
    let tail_prob = record.tail_prob();

    let draws: Vec<(f64, bool)> = exec::map_collect(
        (0..b).map(|r| seed.wrapping_add(r as u64)).collect(),
        |rep_seed| {
            let mut rng = seeded_rng(rep_seed);
            let resampled: Vec<u64> = (0..times.len())
                .map(|_| times[rng.random_range(0..times.len())])
                .collect();
            let sample = k_gaps(&resampled, k, tail_prob).expect("resample nonempty");
            let est = mle(&sample).expect("nonempty sample");
            (est.theta, est.boundary)
        },
    );

    let mut thetas: Vec<f64> = draws.iter().map(|(t, _)| *t).collect();
    thetas.sort_unstable_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let lower = percentile_sorted(&thetas, alpha);
    let upper = percentile_sorted(&thetas, 1.0 - alpha);
    Ok(BootstrapInterval {
        lower,
        upper,
        level,
        replicates: b,
        degenerate: draws.iter().all(|(_, boundary)| *boundary),
    })
}

/// Type-1 percentile of a sorted sample, matching the crate's quantile
/// convention.
fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let t = p * sorted.len() as f64;
    let rank = if (t - t.round()).abs() < 1e-8 {
        t.round() as usize
    } else {
        t.ceil() as usize
    };
    sorted[rank.clamp(1, sorted.len()) - 1]
}
