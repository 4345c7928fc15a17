//! Information-matrix misspecification test for the K-gaps model.
//!
//! For a well-specified regular model the Fisher information equals the
//! variance of the score, so `D(theta) = J(theta) - I(theta)` is zero. The
//! empirical counterpart `D_n`, studentized by its estimated variance
//! `V_n`, gives the statistic `T = (N-1) D_n^2 / V_n`, asymptotically
//! chi-squared with one degree of freedom under correct specification.
//! Large `T` indicates a bad threshold, a bad run parameter, or failure of
//! the underlying point-process assumptions (for example nonstationarity).
//!
//! The per-gap difference `d` uses the squared-gap convention
//! `d = 2 I(c>0)/theta^2 + c^2 - 4c/theta`, which is the literal square of
//! the score minus the information and makes `E[d] = 0` under the limiting
//! mixture; the variant with a linear `c` term is available through
//! [`DConvention::LinearC`] for comparison and demonstrably fails the
//! zero-mean property.

use std::fmt;

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::kgaps::{info_term, mle, score_term, ThetaEstimate};
use crate::series::{exceedances, inter_exceedance_times, k_gaps, sorted_quantile, TimeSeries};

/// 0.95 quantile of the chi-squared distribution with one degree of
/// freedom; the test's conventional 5% critical value.
pub const CHI2_1_CRIT_95: f64 = 3.841458820694124;

/// Exceedance counts below this make the chi-squared approximation
/// conservative; such cells are flagged unreliable.
pub const RELIABLE_N: usize = 80;

/// Chi-squared(1) distribution function.
pub fn chi_squared_1_cdf(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        statrs::function::erf::erf((t / 2.0).sqrt())
    }
}

/// Upper-tail chi-squared(1) probability, the test's p-value.
pub fn chi_squared_1_sf(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else {
        statrs::function::erf::erfc((t / 2.0).sqrt())
    }
}

/// Convention for the `c`-term of the per-gap difference `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DConvention {
    /// `c^2`: the square of the score; zero-mean under the true mixture.
    #[default]
    SquaredC,
    /// Linear `c` as printed in some write-ups; kept for comparison only.
    LinearC,
}

/// Per-gap score of the K-gaps log-likelihood at `theta` in (0, 1):
/// `-I(c = 0)/(1 - theta) + 2 I(c > 0)/theta - c`.
pub fn score_contribution(theta: f64, c: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::ThetaOutOfDomain(theta));
    }
    Ok(score_term(theta, c))
}

/// Per-gap difference between squared score and information.
pub(crate) fn d_term(theta: f64, c: f64, convention: DConvention) -> f64 {
    if c > 0.0 {
        let c_part = match convention {
            DConvention::SquaredC => c * c,
            DConvention::LinearC => c,
        };
        2.0 / (theta * theta) + c_part - 4.0 * c / theta
    } else {
        0.0
    }
}

/// Derivative of `d` with respect to theta.
pub(crate) fn dprime_term(theta: f64, c: f64) -> f64 {
    if c > 0.0 {
        -4.0 / (theta * theta * theta) + 4.0 * c / (theta * theta)
    } else {
        0.0
    }
}

/// Information-matrix test result.
#[derive(Debug, Clone, Serialize)]
pub struct ImtResult {
    /// The estimate the test was evaluated at.
    pub theta: f64,
    /// Mean per-gap difference between squared score and information.
    pub d_n: f64,
    /// Mean derivative of the difference.
    pub dprime_n: f64,
    /// Estimated variance of `D_n`.
    pub v_n: f64,
    /// The statistic `(N-1) D_n^2 / V_n`.
    pub t: f64,
    /// Upper-tail chi-squared(1) probability of `t`.
    pub p_value: f64,
    pub n_gaps: usize,
    /// False when the exceedance count is below [`RELIABLE_N`].
    pub reliable: bool,
}

/// The information-matrix test at `theta_hat`, normally the K-gaps MLE.
///
/// Undefined (an error) at a boundary estimate, or when the variance
/// estimate degenerates to zero. Weights attached to the sample are not
/// used; the test is defined for unweighted gaps.
pub fn imt_statistic(sample: &crate::series::KGapSample, theta_hat: f64) -> Result<ImtResult> {
    imt_statistic_with(sample, theta_hat, DConvention::SquaredC)
}

/// [`imt_statistic`] with an explicit `d`-term convention.
pub fn imt_statistic_with(
    sample: &crate::series::KGapSample,
    theta_hat: f64,
    convention: DConvention,
) -> Result<ImtResult> {
    if !(theta_hat > 0.0 && theta_hat < 1.0) {
        return Err(Error::UndefinedTest(format!(
            "boundary theta {theta_hat}"
        )));
    }
    let gaps = sample.gaps();
    let m = gaps.len();
    if m < 2 {
        return Err(Error::UndefinedTest(format!(
            "need at least 2 gaps, got {m}"
        )));
    }
    let mf = m as f64;
    let mut d_n = 0.0;
    let mut dprime_n = 0.0;
    let mut ibar = 0.0;
    for &c in gaps {
        d_n += d_term(theta_hat, c, convention);
        dprime_n += dprime_term(theta_hat, c);
        ibar += info_term(theta_hat, c);
    }
    d_n /= mf;
    dprime_n /= mf;
    ibar /= mf;

    let slope = dprime_n / ibar;
    let mut v_n = 0.0;
    for &c in gaps {
        let adj = d_term(theta_hat, c, convention) - slope * score_term(theta_hat, c);
        v_n += adj * adj;
    }
    v_n /= mf;
    if !(v_n > 0.0) {
        return Err(Error::UndefinedTest("zero variance estimate".into()));
    }

    let t = mf * d_n * d_n / v_n;
    Ok(ImtResult {
        theta: theta_hat,
        d_n,
        dprime_n,
        v_n,
        t,
        p_value: chi_squared_1_sf(t),
        n_gaps: m,
        reliable: m + 1 >= RELIABLE_N,
    })
}

// ---------------------------------------------------------------------------
// Grids and sliding windows
// ---------------------------------------------------------------------------

/// Why a grid cell carries no (complete) test result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellFlag {
    /// No observation exceeds the cell's threshold.
    NoExceedances,
    /// Too few exceedances or gaps for estimation or testing.
    InsufficientData,
    /// The extremal-index estimate sits on the boundary of [0, 1].
    BoundaryTheta,
    /// The test's variance estimate degenerated.
    DegenerateTest,
}

impl CellFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            CellFlag::NoExceedances => "no_exceedances",
            CellFlag::InsufficientData => "insufficient_data",
            CellFlag::BoundaryTheta => "boundary_theta",
            CellFlag::DegenerateTest => "degenerate_test",
        }
    }
}

/// Outcome of one grid cell.
#[derive(Debug, Clone)]
pub enum CellOutcome {
    /// Estimate and test both available.
    Complete {
        estimate: ThetaEstimate,
        imt: ImtResult,
    },
    /// Estimate available, test undefined.
    ThetaOnly {
        estimate: ThetaEstimate,
        flag: CellFlag,
    },
    /// Nothing computable at this cell.
    Missing { flag: CellFlag },
}

/// One (threshold, run parameter) cell of a diagnostic surface.
#[derive(Debug, Clone)]
pub struct GridCell {
    /// Threshold quantile probability.
    pub p: f64,
    /// Run parameter.
    pub k: u64,
    /// Threshold in observation units.
    pub threshold: f64,
    /// Exceedance count at this threshold.
    pub n_exceedances: usize,
    pub outcome: CellOutcome,
}

/// Center of a sliding window: a calendar date for dated series, otherwise
/// an observation offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowCenter {
    Date(NaiveDate),
    Offset(f64),
}

impl fmt::Display for WindowCenter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowCenter::Date(d) => write!(f, "{d}"),
            WindowCenter::Offset(x) => write!(f, "{x}"),
        }
    }
}

/// Information-matrix test and extremal-index estimates over a
/// (threshold quantile, run parameter) grid, optionally tied to a sliding
/// window center.
#[derive(Debug, Clone)]
pub struct GridSurface {
    pub p_grid: Vec<f64>,
    pub k_grid: Vec<u64>,
    /// Row-major: index `pi * k_grid.len() + ki`.
    pub cells: Vec<GridCell>,
    pub window_center: Option<WindowCenter>,
}

impl GridSurface {
    pub fn cell(&self, pi: usize, ki: usize) -> &GridCell {
        &self.cells[pi * self.k_grid.len() + ki]
    }

    /// Flat export rows in the long format
    /// `window_center,p,K,N,theta,se,T,pvalue,reliable,flag`.
    pub fn rows(&self) -> Vec<SurfaceRow> {
        let center = self.window_center.map(|c| c.to_string());
        self.cells
            .iter()
            .map(|cell| {
                let (theta, se, t, pvalue, reliable, flag) = match &cell.outcome {
                    CellOutcome::Complete { estimate, imt } => (
                        Some(estimate.theta),
                        estimate.se_sandwich,
                        Some(imt.t),
                        Some(imt.p_value),
                        Some(imt.reliable),
                        "ok",
                    ),
                    CellOutcome::ThetaOnly { estimate, flag } => (
                        Some(estimate.theta),
                        estimate.se_sandwich,
                        None,
                        None,
                        None,
                        flag.as_str(),
                    ),
                    CellOutcome::Missing { flag } => {
                        (None, None, None, None, None, flag.as_str())
                    }
                };
                SurfaceRow {
                    window_center: center.clone(),
                    p: cell.p,
                    k: cell.k,
                    n: cell.n_exceedances,
                    theta,
                    se,
                    t,
                    pvalue,
                    reliable,
                    flag: flag.to_string(),
                }
            })
            .collect()
    }
}

/// Long-format export row of a surface.
#[derive(Debug, Clone, Serialize)]
pub struct SurfaceRow {
    pub window_center: Option<String>,
    pub p: f64,
    pub k: u64,
    pub n: usize,
    pub theta: Option<f64>,
    /// Sandwich standard error of theta.
    pub se: Option<f64>,
    pub t: Option<f64>,
    pub pvalue: Option<f64>,
    pub reliable: Option<bool>,
    pub flag: String,
}

fn validate_grids(p_grid: &[f64], k_grid: &[u64]) -> Result<()> {
    if p_grid.is_empty() || k_grid.is_empty() {
        return Err(Error::InvalidParameter("empty threshold or K grid".into()));
    }
    for &p in p_grid {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "grid quantile {p} outside (0, 1)"
            )));
        }
    }
    Ok(())
}

/// Evaluate the full pipeline (threshold, exceedances, K-gaps, MLE, IMT)
/// on every cell of the grid. Cells are independent and evaluated in
/// parallel under the `parallel` feature.
pub fn imt_grid(series: &TimeSeries, p_grid: &[f64], k_grid: &[u64]) -> Result<GridSurface> {
    if series.len() < 100 {
        return Err(Error::TooFewObservations {
            context: "imt grid",
            need: 100,
            found: series.len(),
        });
    }
    validate_grids(p_grid, k_grid)?;
    let cells = grid_cells(series.values(), p_grid, k_grid);
    Ok(GridSurface {
        p_grid: p_grid.to_vec(),
        k_grid: k_grid.to_vec(),
        cells,
        window_center: None,
    })
}

fn grid_cells(values: &[f64], p_grid: &[f64], k_grid: &[u64]) -> Vec<GridCell> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let series = TimeSeries::new(values.to_vec()).expect("validated by caller");
    let k_grid_owned = k_grid.to_vec();

    let per_p: Vec<Vec<GridCell>> = exec::map_collect(p_grid.to_vec(), |p| {
        let threshold = sorted_quantile(&sorted, p).expect("validated grid");
        let record = match exceedances(&series, threshold) {
            Ok(r) => r,
            Err(_) => {
                return k_grid_owned
                    .iter()
                    .map(|&k| GridCell {
                        p,
                        k,
                        threshold,
                        n_exceedances: 0,
                        outcome: CellOutcome::Missing {
                            flag: CellFlag::NoExceedances,
                        },
                    })
                    .collect();
            }
        };
        let n = record.count();
        let times = match inter_exceedance_times(&record) {
            Ok(t) => t,
            Err(_) => {
                return k_grid_owned
                    .iter()
                    .map(|&k| GridCell {
                        p,
                        k,
                        threshold,
                        n_exceedances: n,
                        outcome: CellOutcome::Missing {
                            flag: CellFlag::InsufficientData,
                        },
                    })
                    .collect();
            }
        };
        k_grid_owned
            .iter()
            .map(|&k| {
                let sample = k_gaps(&times, k, record.tail_prob()).expect("nonempty times");
                let estimate = mle(&sample).expect("nonempty sample");
                let outcome = if estimate.boundary {
                    CellOutcome::ThetaOnly {
                        estimate,
                        flag: CellFlag::BoundaryTheta,
                    }
                } else {
                    match imt_statistic(&sample, estimate.theta) {
                        Ok(imt) => CellOutcome::Complete { estimate, imt },
                        Err(Error::UndefinedTest(msg)) if msg.contains("gaps") => {
                            CellOutcome::ThetaOnly {
                                estimate,
                                flag: CellFlag::InsufficientData,
                            }
                        }
                        Err(_) => CellOutcome::ThetaOnly {
                            estimate,
                            flag: CellFlag::DegenerateTest,
                        },
                    }
                };
                GridCell {
                    p,
                    k,
                    threshold,
                    n_exceedances: n,
                    outcome,
                }
            })
            .collect()
    });
    per_p.into_iter().flatten().collect()
}

/// Sliding-window surfaces: full windows of `window_days`, centers
/// advancing by `step_days` from the first feasible center; truncated
/// windows at the ends are skipped. Undated series count one observation
/// per day.
pub fn sliding_window_imt(
    series: &TimeSeries,
    window_days: f64,
    step_days: f64,
    p_grid: &[f64],
    k_grid: &[u64],
) -> Result<Vec<GridSurface>> {
    validate_grids(p_grid, k_grid)?;
    if !(window_days > 0.0) || !(step_days > 0.0) {
        return Err(Error::InvalidParameter(
            "window and step must be positive".into(),
        ));
    }
    let offsets = series.day_offsets();
    let span = *offsets.last().expect("nonempty") - offsets[0];
    if window_days > span {
        return Err(Error::InvalidParameter(format!(
            "no full window fits: window {window_days} days, series span {span} days"
        )));
    }
    let half = window_days / 2.0;
    let mut centers = Vec::new();
    let mut c = offsets[0] + half;
    while c + half <= offsets[offsets.len() - 1] + 1e-9 {
        centers.push(c);
        c += step_days;
    }

    let values = series.values().to_vec();
    let dates = series.timestamps().map(|d| d.to_vec());
    let surfaces = exec::map_collect(centers, |center| {
        let lo = offsets.partition_point(|&o| o < center - half - 1e-9);
        let hi = offsets.partition_point(|&o| o <= center + half + 1e-9);
        let window_values = &values[lo..hi];
        let window_center = Some(match &dates {
            Some(ds) => WindowCenter::Date(ds[0] + chrono::Duration::days(center.round() as i64)),
            None => WindowCenter::Offset(center),
        });
        let cells = if window_values.len() < 2 {
            p_grid
                .iter()
                .flat_map(|&p| {
                    k_grid.iter().map(move |&k| GridCell {
                        p,
                        k,
                        threshold: f64::NAN,
                        n_exceedances: 0,
                        outcome: CellOutcome::Missing {
                            flag: CellFlag::InsufficientData,
                        },
                    })
                })
                .collect()
        } else {
            grid_cells(window_values, p_grid, k_grid)
        };
        GridSurface {
            p_grid: p_grid.to_vec(),
            k_grid: k_grid.to_vec(),
            cells,
            window_center,
        }
    });
    Ok(surfaces)
}

/// Benjamini-Yekutieli false-discovery-rate control: sort the p-values,
/// reject all up to the largest `i` with
/// `p_(i) <= i q / (m c(m))`, `c(m) = sum_{j<=m} 1/j`. Valid under the
/// dependence between overlapping windows. Returns the rejected indices
/// in their original positions.
pub fn by_fdr(p_values: &[f64], q: f64) -> Result<Vec<usize>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "FDR rate must lie in (0, 1), got {q}"
        )));
    }
    for &p in p_values {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "p-value {p} outside [0, 1]"
            )));
        }
    }
    let m = p_values.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let c_m: f64 = (1..=m).map(|j| 1.0 / j as f64).sum();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut cutoff = None;
    for (i, &idx) in order.iter().enumerate() {
        let threshold = (i + 1) as f64 * q / (m as f64 * c_m);
        if p_values[idx] <= threshold {
            cutoff = Some(i);
        }
    }
    let mut rejected: Vec<usize> = match cutoff {
        Some(i) => order[..=i].to_vec(),
        None => Vec::new(),
    };
    rejected.sort_unstable();
    Ok(rejected)
}

/// Rejected cells of a sliding-window family: the BY procedure is applied
/// separately per (threshold, run parameter) pair across windows, at rate
/// `q`. Returns `(window, p, k)` index triples. Cells without a computed
/// p-value are excluded from their family.
pub fn sliding_fdr(surfaces: &[GridSurface], q: f64) -> Result<Vec<(usize, usize, usize)>> {
    let Some(first) = surfaces.first() else {
        return Ok(Vec::new());
    };
    for s in surfaces {
        if s.p_grid != first.p_grid || s.k_grid != first.k_grid {
            return Err(Error::InvalidParameter(
                "sliding surfaces have mismatched grids".into(),
            ));
        }
    }
    let mut rejected = Vec::new();
    for pi in 0..first.p_grid.len() {
        for ki in 0..first.k_grid.len() {
            let mut windows = Vec::new();
            let mut pvals = Vec::new();
            for (wi, s) in surfaces.iter().enumerate() {
                if let CellOutcome::Complete { imt, .. } = &s.cell(pi, ki).outcome {
                    windows.push(wi);
                    pvals.push(imt.p_value);
                }
            }
            for idx in by_fdr(&pvals, q)? {
                rejected.push((windows[idx], pi, ki));
            }
        }
    }
    Ok(rejected)
}

/// A recommended (threshold quantile, run parameter) choice.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ParamChoice {
    pub p: f64,
    pub k: u64,
    pub t: f64,
    pub n_exceedances: usize,
}

/// Recommend the cell whose test statistic is closest to zero among cells
/// that are not rejected at the 5% level, whose in-grid 4-neighborhood is
/// also non-rejected, and (unless `include_unreliable`) whose exceedance
/// count makes the chi-squared approximation reliable. Ties break toward
/// more exceedances, then smaller run parameter. `None` means no
/// well-specified region exists.
///
/// Neighbors must themselves carry a computed, non-rejected test; a
/// missing or boundary neighbor disqualifies the cell.
pub fn choose_params(surface: &GridSurface, include_unreliable: bool) -> Option<ParamChoice> {
    let np = surface.p_grid.len();
    let nk = surface.k_grid.len();
    let accepted = |pi: usize, ki: usize| -> bool {
        matches!(
            &surface.cell(pi, ki).outcome,
            CellOutcome::Complete { imt, .. } if imt.t < CHI2_1_CRIT_95
        )
    };
    let mut best: Option<ParamChoice> = None;
    for pi in 0..np {
        for ki in 0..nk {
            let cell = surface.cell(pi, ki);
            let CellOutcome::Complete { imt, .. } = &cell.outcome else {
                continue;
            };
            if imt.t >= CHI2_1_CRIT_95 || (!imt.reliable && !include_unreliable) {
                continue;
            }
            let neighbors_ok = [
                pi.checked_sub(1).map(|p| (p, ki)),
                (pi + 1 < np).then_some((pi + 1, ki)),
                ki.checked_sub(1).map(|k| (pi, k)),
                (ki + 1 < nk).then_some((pi, ki + 1)),
            ]
            .into_iter()
            .flatten()
            .all(|(p, k)| accepted(p, k));
            if !neighbors_ok {
                continue;
            }
            let candidate = ParamChoice {
                p: cell.p,
                k: cell.k,
                t: imt.t,
                n_exceedances: cell.n_exceedances,
            };
            best = Some(match best {
                None => candidate,
                Some(cur) => {
                    let better = candidate.t < cur.t
                        || (candidate.t == cur.t
                            && (candidate.n_exceedances > cur.n_exceedances
                                || (candidate.n_exceedances == cur.n_exceedances
                                    && candidate.k < cur.k)));
                    if better {
                        candidate
                    } else {
                        cur
                    }
                }
            });
        }
    }
    best
}

/// Cross-window aggregation: recommend the cell minimizing the worst test
/// statistic across windows, subject to the same admissibility rules in
/// every window. An option beyond the per-surface rule; `None` when no
/// cell is admissible everywhere.
pub fn choose_params_across(
    surfaces: &[GridSurface],
    include_unreliable: bool,
) -> Option<ParamChoice> {
    let first = surfaces.first()?;
    let per_surface: Vec<Vec<ParamChoice>> = surfaces
        .iter()
        .map(|s| admissible_cells(s, include_unreliable))
        .collect();
    let mut best: Option<ParamChoice> = None;
    for pi in 0..first.p_grid.len() {
        for ki in 0..first.k_grid.len() {
            let (p, k) = (first.p_grid[pi], first.k_grid[ki]);
            let mut worst: Option<ParamChoice> = None;
            let everywhere = per_surface.iter().all(|cells| {
                match cells.iter().find(|c| c.p == p && c.k == k) {
                    Some(c) => {
                        if worst.is_none() || c.t > worst.unwrap().t {
                            worst = Some(*c);
                        }
                        true
                    }
                    None => false,
                }
            });
            if everywhere {
                if let Some(w) = worst {
                    if best.is_none() || w.t < best.unwrap().t {
                        best = Some(w);
                    }
                }
            }
        }
    }
    best
}

fn admissible_cells(surface: &GridSurface, include_unreliable: bool) -> Vec<ParamChoice> {
    let np = surface.p_grid.len();
    let nk = surface.k_grid.len();
    let mut out = Vec::new();
    for pi in 0..np {
        for ki in 0..nk {
            let cell = surface.cell(pi, ki);
            if let CellOutcome::Complete { imt, .. } = &cell.outcome {
                if imt.t < CHI2_1_CRIT_95 && (imt.reliable || include_unreliable) {
                    out.push(ParamChoice {
                        p: cell.p,
                        k: cell.k,
                        t: imt.t,
                        n_exceedances: cell.n_exceedances,
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::KGapSample;
    use crate::simulate::{ar1_cauchy, exact_mixture_gaps, replicate};

    fn sample(c: &[f64]) -> KGapSample {
        KGapSample::from_gaps(c.to_vec(), 1, 1.0).unwrap()
    }

    #[test]
    fn score_contribution_hand_values() {
        assert_eq!(score_contribution(0.5, 0.0).unwrap(), -2.0);
        assert_eq!(score_contribution(0.5, 1.0).unwrap(), 3.0);
        assert!(score_contribution(1.0, 0.5).is_err());
    }

    #[test]
    fn score_mean_is_zero_at_mle() {
        let s = sample(&[2.0, 0.0, 2.0, 1.0, 0.0, 0.5, 4.0]);
        let est = mle(&s).unwrap();
        let mean: f64 = s
            .gaps()
            .iter()
            .map(|&c| score_contribution(est.theta, c).unwrap())
            .sum::<f64>()
            / s.n_gaps() as f64;
        assert!(mean.abs() < 1e-8, "mean score {mean}");
    }

    // Hand check of every piece of the statistic with the indicator terms
    // vanishing (no zero gaps), evaluated at theta = 1 where the algebra
    // simplifies: d = -1, D' = 0, V = 1, T = 2.
    #[test]
    fn imt_pieces_algebra() {
        let theta = 1.0;
        for c in [1.0, 1.0] {
            assert_eq!(d_term(theta, c, DConvention::SquaredC), -1.0);
            assert_eq!(dprime_term(theta, c), 0.0);
            assert_eq!(score_term(theta, c), 1.0);
        }
        let d_n = -1.0;
        let v_n = 1.0;
        let t = 2.0 * d_n * d_n / v_n;
        assert_eq!(t, 2.0);
        assert!(t < CHI2_1_CRIT_95);
    }

    #[test]
    fn imt_rejects_boundary_theta() {
        let s = sample(&[1.0, 1.0]);
        assert!(matches!(
            imt_statistic(&s, 1.0),
            Err(Error::UndefinedTest(_))
        ));
    }

    #[test]
    fn imt_permutation_invariant() {
        let a = sample(&[2.0, 0.0, 1.0, 0.5, 0.0, 3.0]);
        let b = sample(&[0.0, 3.0, 0.5, 2.0, 1.0, 0.0]);
        let theta = mle(&a).unwrap().theta;
        let ra = imt_statistic(&a, theta).unwrap();
        let rb = imt_statistic(&b, theta).unwrap();
        assert!((ra.t - rb.t).abs() < 1e-12);
    }

    #[test]
    fn pvalue_monotone_in_t() {
        let mut last = 1.0;
        for i in 1..100 {
            let t = i as f64 * 0.2;
            let p = chi_squared_1_sf(t);
            assert!(p < last);
            last = p;
        }
        assert!((chi_squared_1_sf(CHI2_1_CRIT_95) - 0.05).abs() < 1e-9);
    }

    // The zero-mean property that pins the squared-c convention: under the
    // true mixture E[d] = 0, while the linear-c variant has mean 1 - 2/theta.
    #[test]
    fn d_zero_mean_under_true_mixture() {
        let theta = 0.5;
        let gaps = exact_mixture_gaps(100_001, theta, 42).unwrap();
        let n = gaps.n_gaps() as f64;
        let stats = |conv: DConvention| {
            let mean = gaps
                .gaps()
                .iter()
                .map(|&c| d_term(theta, c, conv))
                .sum::<f64>()
                / n;
            let var = gaps
                .gaps()
                .iter()
                .map(|&c| {
                    let d = d_term(theta, c, conv) - mean;
                    d * d
                })
                .sum::<f64>()
                / n;
            (mean, (var / n).sqrt())
        };
        let (mean_sq, se_sq) = stats(DConvention::SquaredC);
        assert!(
            mean_sq.abs() < 3.0 * se_sq,
            "squared-c mean {mean_sq} vs se {se_sq}"
        );
        let (mean_lin, se_lin) = stats(DConvention::LinearC);
        assert!(
            mean_lin.abs() > 3.0 * se_lin,
            "linear-c mean {mean_lin} should fail the zero-mean check"
        );
        // And it should sit near its theoretical value 1 - 2/theta = -3.
        assert!((mean_lin - (1.0 - 2.0 / theta)).abs() < 0.2);
    }

    #[test]
    fn calibration_chi_squared_small() {
        // Distribution of T at the exact mixture; full grid of (theta, N)
        // runs in the integration tests, acceptance runs the headline case.
        let theta = 0.5;
        let ts = replicate(400, 7, |seed| {
            let gaps = exact_mixture_gaps(200, theta, seed).unwrap();
            let est = mle(&gaps).unwrap();
            imt_statistic(&gaps, est.theta).unwrap().t
        });
        let reject = ts.iter().filter(|&&t| t > CHI2_1_CRIT_95).count() as f64
            / ts.len() as f64;
        assert!(reject > 0.01 && reject < 0.10, "rejection rate {reject}");
    }

    #[test]
    fn by_fdr_hand_example() {
        // c(3) = 1.8333, thresholds (0.00909, 0.01818, 0.02727).
        let rejected = by_fdr(&[0.001, 0.5, 0.9], 0.05).unwrap();
        assert_eq!(rejected, vec![0]);
    }

    #[test]
    fn by_fdr_all_ones_rejects_nothing() {
        assert!(by_fdr(&[1.0, 1.0, 1.0], 0.05).unwrap().is_empty());
    }

    #[test]
    fn by_fdr_single_test_is_plain() {
        assert_eq!(by_fdr(&[0.04], 0.05).unwrap(), vec![0]);
        assert!(by_fdr(&[0.06], 0.05).unwrap().is_empty());
    }

    #[test]
    fn by_fdr_rejects_bad_inputs() {
        assert!(by_fdr(&[0.5], 0.0).is_err());
        assert!(by_fdr(&[1.5], 0.05).is_err());
    }

    #[test]
    fn grid_single_cell_matches_direct_pipeline() {
        let series = ar1_cauchy(2000, 0.7, 3).unwrap();
        let surface = imt_grid(&series, &[0.95], &[1]).unwrap();
        assert_eq!(surface.cells.len(), 1);
        let cell = surface.cell(0, 0);

        let u = crate::series::empirical_quantile(&series, 0.95).unwrap();
        let record = exceedances(&series, u).unwrap();
        let times = inter_exceedance_times(&record).unwrap();
        let gaps = k_gaps(&times, 1, record.tail_prob()).unwrap();
        let est = mle(&gaps).unwrap();
        match &cell.outcome {
            CellOutcome::Complete { estimate, imt } => {
                assert_eq!(estimate.theta, est.theta);
                let direct = imt_statistic(&gaps, est.theta).unwrap();
                assert_eq!(imt.t, direct.t);
            }
            other => panic!("expected complete cell, got {other:?}"),
        }
        assert_eq!(cell.n_exceedances, record.count());
    }

    #[test]
    fn grid_requires_length_100() {
        let series = ar1_cauchy(50, 0.7, 3).unwrap();
        assert!(imt_grid(&series, &[0.9], &[1]).is_err());
    }

    #[test]
    fn sliding_step_spanning_series_gives_single_window() {
        let series = ar1_cauchy(1000, 0.7, 5).unwrap();
        let span = 999.0;
        let surfaces = sliding_window_imt(&series, span, span, &[0.95], &[1]).unwrap();
        assert_eq!(surfaces.len(), 1);
        let grid = imt_grid(&series, &[0.95], &[1]).unwrap();
        match (&surfaces[0].cell(0, 0).outcome, &grid.cell(0, 0).outcome) {
            (
                CellOutcome::Complete { imt: a, .. },
                CellOutcome::Complete { imt: b, .. },
            ) => assert_eq!(a.t, b.t),
            (a, b) => panic!("expected complete cells, got {a:?} / {b:?}"),
        }
    }

    #[test]
    fn sliding_rejects_oversized_window() {
        let series = ar1_cauchy(500, 0.7, 5).unwrap();
        assert!(sliding_window_imt(&series, 1000.0, 10.0, &[0.95], &[1]).is_err());
    }

    #[test]
    fn choose_params_single_admissible_cell() {
        let series = ar1_cauchy(8000, 0.7, 11).unwrap();
        let surface = imt_grid(
            &series,
            &[0.95, 0.97, 0.99],
            &[1, 2, 3, 4, 5],
        )
        .unwrap();
        if let Some(choice) = choose_params(&surface, false) {
            assert!(choice.t < CHI2_1_CRIT_95);
            assert!(surface.p_grid.contains(&choice.p));
            assert!(surface.k_grid.contains(&choice.k));
        }
    }

    #[test]
    fn choose_params_none_when_all_rejected() {
        // Build a surface by hand with every cell rejected.
        let estimate = |theta: f64| ThetaEstimate {
            theta,
            loglik: 0.0,
            se_sandwich: Some(0.1),
            se_naive: Some(0.1),
            n_gaps: 200,
            effective_gaps: 200.0,
            k: 1,
            threshold_prob: 0.05,
            boundary: false,
        };
        let imt_at = |t: f64| ImtResult {
            theta: 0.5,
            d_n: 1.0,
            dprime_n: 0.0,
            v_n: 1.0,
            t,
            p_value: chi_squared_1_sf(t),
            n_gaps: 200,
            reliable: true,
        };
        let cells: Vec<GridCell> = [(0.95, 1u64), (0.95, 2), (0.99, 1), (0.99, 2)]
            .iter()
            .map(|&(p, k)| GridCell {
                p,
                k,
                threshold: 1.0,
                n_exceedances: 201,
                outcome: CellOutcome::Complete {
                    estimate: estimate(0.5),
                    imt: imt_at(10.0),
                },
            })
            .collect();
        let surface = GridSurface {
            p_grid: vec![0.95, 0.99],
            k_grid: vec![1, 2],
            cells,
            window_center: None,
        };
        assert!(choose_params(&surface, false).is_none());
    }
}
