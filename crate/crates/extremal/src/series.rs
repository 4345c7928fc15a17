//! Time-series preprocessing and exceedance structure.
//!
//! Everything downstream of raw data lives here: empirical quantiles,
//! exceedance records, inter-exceedance times, K-gaps, runs declustering,
//! and the deseasonalize/detrend standardization pipeline.
//!
//! Positions are 1-based throughout: the exceedance indices `j_i` name
//! positions in the original series, so inter-exceedance times are
//! `T_i = j_{i+1} - j_i`.

use std::collections::BTreeSet;
use std::io::Read;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};

/// Scale factor making the median absolute deviation consistent for the
/// normal distribution.
pub const MAD_SCALE: f64 = 1.4826;

/// An ordered sequence of observations, optionally dated.
///
/// Invariants enforced on construction: at least two observations, all
/// finite; when dates are present they match the values in length and are
/// strictly increasing.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    values: Vec<f64>,
    timestamps: Option<Vec<NaiveDate>>,
    meta: Option<String>,
}

impl TimeSeries {
    /// Undated series.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::build(values, None, None)
    }

    /// Dated series; timestamps must be strictly increasing.
    pub fn with_dates(values: Vec<f64>, timestamps: Vec<NaiveDate>) -> Result<Self> {
        Self::build(values, Some(timestamps), None)
    }

    /// Attach a free-form label.
    pub fn with_meta(mut self, meta: impl Into<String>) -> Self {
        self.meta = Some(meta.into());
        self
    }

    fn build(
        values: Vec<f64>,
        timestamps: Option<Vec<NaiveDate>>,
        meta: Option<String>,
    ) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidSeries(format!(
                "need at least 2 observations, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "non-finite value at position {}",
                bad + 1
            )));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != values.len() {
                return Err(Error::InvalidSeries(format!(
                    "{} timestamps for {} values",
                    ts.len(),
                    values.len()
                )));
            }
            if let Some(bad) = ts.windows(2).position(|w| w[0] >= w[1]) {
                return Err(Error::InvalidSeries(format!(
                    "timestamps not strictly increasing at position {}",
                    bad + 2
                )));
            }
        }
        Ok(Self {
            values,
            timestamps,
            meta,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> Option<&[NaiveDate]> {
        self.timestamps.as_deref()
    }

    pub fn meta(&self) -> Option<&str> {
        self.meta.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Observation positions on a day scale: days since the first timestamp
    /// for dated series, otherwise one observation per day starting at 0.
    pub fn day_offsets(&self) -> Vec<f64> {
        match &self.timestamps {
            Some(ts) => {
                let first = ts[0];
                ts.iter()
                    .map(|d| (*d - first).num_days() as f64)
                    .collect()
            }
            None => (0..self.values.len()).map(|i| i as f64).collect(),
        }
    }
}

/// Threshold exceedances of a series: which positions exceed, by how much,
/// and the empirical tail probability `N/n`.
#[derive(Debug, Clone)]
pub struct ExceedanceRecord {
    threshold: f64,
    indices: Vec<usize>,
    excesses: Vec<f64>,
    values: Vec<f64>,
    dates: Option<Vec<NaiveDate>>,
    n: usize,
}

impl ExceedanceRecord {
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// 1-based positions of the exceedances in the original series.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Excesses `x - u`, all strictly positive.
    pub fn excesses(&self) -> &[f64] {
        &self.excesses
    }

    /// The exceeding observations themselves.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Timestamps of the exceedances when the series was dated.
    pub fn dates(&self) -> Option<&[NaiveDate]> {
        self.dates.as_deref()
    }

    /// Exceedance count N.
    pub fn count(&self) -> usize {
        self.indices.len()
    }

    /// Length n of the originating series.
    pub fn series_len(&self) -> usize {
        self.n
    }

    /// Empirical tail probability `N/n`.
    pub fn tail_prob(&self) -> f64 {
        self.indices.len() as f64 / self.n as f64
    }
}

/// Normalized K-gaps `c_i = tail_prob * max(T_i - K, 0)` with optional
/// per-gap weights.
#[derive(Debug, Clone)]
pub struct KGapSample {
    k: u64,
    c: Vec<f64>,
    weights: Option<Vec<f64>>,
    tail_prob: f64,
}

impl KGapSample {
    /// Build a sample directly from normalized gaps. `tail_prob` records the
    /// normalizing constant used; exact samplers use 1.
    pub fn from_gaps(c: Vec<f64>, k: u64, tail_prob: f64) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::EmptySample);
        }
        if c.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::InvalidParameter(
                "normalized gaps must be finite and nonnegative".into(),
            ));
        }
        if !(tail_prob > 0.0 && tail_prob <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tail probability must lie in (0, 1], got {tail_prob}"
            )));
        }
        Ok(Self {
            k,
            c,
            weights: None,
            tail_prob,
        })
    }

    /// Attach nonnegative per-gap weights; at least one must be positive.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.c.len() {
            return Err(Error::InvalidParameter(format!(
                "{} weights for {} gaps",
                weights.len(),
                self.c.len()
            )));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidParameter(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidParameter("all weights are zero".into()));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    /// The normalized gaps `c_i`.
    pub fn gaps(&self) -> &[f64] {
        &self.c
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn tail_prob(&self) -> f64 {
        self.tail_prob
    }

    /// Number of gaps (N - 1 when derived from a record).
    pub fn n_gaps(&self) -> usize {
        self.c.len()
    }

    /// `N_C`: number of strictly positive gaps (unweighted count).
    pub fn n_positive(&self) -> usize {
        self.c.iter().filter(|&&x| x > 0.0).count()
    }

    /// `sum(c_i)`, weighted where weights are attached.
    pub fn sum_c(&self) -> f64 {
        match &self.weights {
            Some(w) => self.c.iter().zip(w).map(|(c, w)| c * w).sum(),
            None => self.c.iter().sum(),
        }
    }

    /// Weighted sufficient statistics `(m, nc, s)`:
    /// total weight, weight on positive gaps, weighted gap sum.
    pub(crate) fn suff_stats(&self) -> (f64, f64, f64) {
        match &self.weights {
            Some(w) => {
                let m: f64 = w.iter().sum();
                let nc: f64 = self
                    .c
                    .iter()
                    .zip(w)
                    .filter(|(c, _)| **c > 0.0)
                    .map(|(_, w)| w)
                    .sum();
                let s: f64 = self.c.iter().zip(w).map(|(c, w)| c * w).sum();
                (m, nc, s)
            }
            None => (
                self.c.len() as f64,
                self.n_positive() as f64,
                self.c.iter().sum(),
            ),
        }
    }

    /// Effective sample size `(sum w)^2 / sum w^2`; the gap count when
    /// unweighted.
    pub fn effective_size(&self) -> f64 {
        match &self.weights {
            Some(w) => {
                let sw: f64 = w.iter().sum();
                let sw2: f64 = w.iter().map(|w| w * w).sum();
                sw * sw / sw2
            }
            None => self.c.len() as f64,
        }
    }
}

/// Runs-declustered exceedances: clusters of 1-based series positions and
/// the per-cluster peak.
#[derive(Debug, Clone)]
pub struct ClusterSet {
    clusters: Vec<Vec<usize>>,
    peaks: Vec<Peak>,
}

/// Largest observation of one cluster; ties broken by earliest position.
#[derive(Debug, Clone, Copy)]
pub struct Peak {
    /// 1-based position in the original series.
    pub index: usize,
    /// Observation value (not the excess).
    pub value: f64,
}

impl ClusterSet {
    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn peaks(&self) -> &[Peak] {
        &self.peaks
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
}

/// Order-statistic quantile: value at rank `ceil(p * n)` of the sorted
/// sample (type 1). Fixed so that threshold grids are reproducible.
///
/// The rank is computed with a small tolerance so that grid probabilities
/// like 0.95 hit the intended order statistic despite binary rounding of
/// `p * n`.
pub fn empirical_quantile(series: &TimeSeries, p: f64) -> Result<f64> {
    let mut sorted = series.values().to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    sorted_quantile(&sorted, p)
}

/// `empirical_quantile` on an already-sorted (ascending) sample.
pub(crate) fn sorted_quantile(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::InvalidParameter("empty sample".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "quantile probability must lie in (0, 1), got {p}"
        )));
    }
    let t = p * sorted.len() as f64;
    let rank = if (t - t.round()).abs() < 1e-8 {
        t.round() as usize
    } else {
        t.ceil() as usize
    };
    let rank = rank.clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

/// All positions with value strictly above `u`.
pub fn exceedances(series: &TimeSeries, u: f64) -> Result<ExceedanceRecord> {
    if !u.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "threshold must be finite, got {u}"
        )));
    }
    let mut indices = Vec::new();
    let mut excesses = Vec::new();
    let mut values = Vec::new();
    let mut dates = series.timestamps().map(|_| Vec::new());
    for (i, &x) in series.values().iter().enumerate() {
        if x > u {
            indices.push(i + 1);
            excesses.push(x - u);
            values.push(x);
            if let (Some(ds), Some(ts)) = (&mut dates, series.timestamps()) {
                ds.push(ts[i]);
            }
        }
    }
    if indices.is_empty() {
        return Err(Error::NoExceedances { threshold: u });
    }
    Ok(ExceedanceRecord {
        threshold: u,
        indices,
        excesses,
        values,
        dates,
        n: series.len(),
    })
}

/// Inter-exceedance times `T_i = j_{i+1} - j_i`; needs at least two
/// exceedances.
pub fn inter_exceedance_times(record: &ExceedanceRecord) -> Result<Vec<u64>> {
    if record.count() < 2 {
        return Err(Error::TooFewObservations {
            context: "inter-exceedance times",
            need: 2,
            found: record.count(),
        });
    }
    Ok(record
        .indices
        .windows(2)
        .map(|w| (w[1] - w[0]) as u64)
        .collect())
}

/// Normalized K-gaps `c_i = tail_prob * max(T_i - K, 0)`.
///
/// `K = 0` reproduces the plain normalized inter-exceedance times.
pub fn k_gaps(times: &[u64], k: u64, tail_prob: f64) -> Result<KGapSample> {
    if times.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(tail_prob > 0.0 && tail_prob <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tail probability must lie in (0, 1], got {tail_prob}"
        )));
    }
    let c = times
        .iter()
        .map(|&t| tail_prob * t.saturating_sub(k) as f64)
        .collect();
    KGapSample::from_gaps(c, k, tail_prob)
}

/// Runs declustering: a new cluster starts whenever the inter-exceedance
/// time exceeds `K`. The number of clusters equals `N_C + 1`, with `N_C`
/// the positive-gap count of the matching K-gap sample.
pub fn decluster_runs(record: &ExceedanceRecord, k: u64) -> ClusterSet {
    let idx = &record.indices;
    let vals = &record.values;
    let mut clusters: Vec<Vec<usize>> = vec![vec![idx[0]]];
    let mut peaks: Vec<Peak> = vec![Peak {
        index: idx[0],
        value: vals[0],
    }];
    for i in 1..idx.len() {
        let gap = (idx[i] - idx[i - 1]) as u64;
        if gap > k {
            clusters.push(vec![idx[i]]);
            peaks.push(Peak {
                index: idx[i],
                value: vals[i],
            });
        } else {
            clusters.last_mut().expect("nonempty").push(idx[i]);
            let peak = peaks.last_mut().expect("nonempty");
            if vals[i] > peak.value {
                *peak = Peak {
                    index: idx[i],
                    value: vals[i],
                };
            }
        }
    }
    ClusterSet { clusters, peaks }
}

/// How inter-exceedance times crossing a calendar discontinuity are treated
/// when a dated series concatenates separate observation seasons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeasonJoin {
    /// Positions are used as-is; gaps span season boundaries.
    Concatenate,
    /// Gaps whose endpoints straddle a jump of more than one day between
    /// consecutive observations are dropped from the K-gap sample.
    Break,
}

/// Full pipeline from a series to a K-gap sample: exceedances at `u`,
/// inter-exceedance times, normalized K-gaps. With [`SeasonJoin::Break`] and
/// a dated series, gaps crossing a date discontinuity are removed.
pub fn gap_sample(
    series: &TimeSeries,
    u: f64,
    k: u64,
    join: SeasonJoin,
) -> Result<(ExceedanceRecord, KGapSample)> {
    let record = exceedances(series, u)?;
    let times = inter_exceedance_times(&record)?;
    let times = match (join, series.timestamps()) {
        (SeasonJoin::Break, Some(ts)) => {
            // Break positions: b such that more than one day separates
            // observation b from observation b+1 (1-based b).
            let breaks: BTreeSet<usize> = ts
                .windows(2)
                .enumerate()
                .filter(|(_, w)| (w[1] - w[0]).num_days() > 1)
                .map(|(i, _)| i + 1)
                .collect();
            let kept: Vec<u64> = times
                .iter()
                .enumerate()
                .filter(|(i, _)| {
                    let (lo, hi) = (record.indices[*i], record.indices[*i + 1]);
                    !breaks.range(lo..hi).next().is_some()
                })
                .map(|(_, &t)| t)
                .collect();
            if kept.is_empty() {
                return Err(Error::TooFewObservations {
                    context: "season-broken inter-exceedance times",
                    need: 1,
                    found: 0,
                });
            }
            kept
        }
        _ => times,
    };
    let sample = k_gaps(&times, k, record.tail_prob())?;
    Ok((record, sample))
}

// ---------------------------------------------------------------------------
// Deseasonalize / detrend
// ---------------------------------------------------------------------------

// Cumulative day counts of a non-leap year, for the day-of-year cycle.
const CUM_DAYS: [u32; 12] = [0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334];

/// Day-of-year in 1..=365; 29 February shares day 59 with 28 February so the
/// leap day does not get a 4x sparser cell.
fn cycle_day(d: NaiveDate) -> usize {
    let m = d.month() as usize;
    let day = d.day();
    if m == 2 && day == 29 {
        59
    } else {
        (CUM_DAYS[m - 1] + day) as usize
    }
}

fn median_of(sorted_scratch: &mut Vec<f64>) -> f64 {
    let n = sorted_scratch.len();
    debug_assert!(n > 0);
    let mid = n / 2;
    if n % 2 == 1 {
        *sorted_scratch
            .select_nth_unstable_by(mid, f64::total_cmp)
            .1
    } else {
        let hi = *sorted_scratch
            .select_nth_unstable_by(mid, f64::total_cmp)
            .1;
        let lo = sorted_scratch[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

fn median_mad(values: &[f64]) -> (f64, f64) {
    let mut scratch = values.to_vec();
    let med = median_of(&mut scratch);
    for v in &mut scratch {
        *v = (*v - med).abs();
    }
    let mad = median_of(&mut scratch);
    (med, MAD_SCALE * mad)
}

/// Remove the annual cycle: center and scale each observation by the median
/// and scaled MAD of its day-of-year across years, after smoothing the
/// 365-day cycle of per-day estimates with a circular moving median of
/// window 15 days.
pub fn deseasonalize(series: &TimeSeries) -> Result<TimeSeries> {
    let dates = series
        .timestamps()
        .ok_or_else(|| Error::Preprocessing("deseasonalize needs timestamps".into()))?;
    let years: BTreeSet<i32> = dates.iter().map(|d| d.year()).collect();
    if years.len() < 2 {
        return Err(Error::Preprocessing(format!(
            "deseasonalize needs at least 2 distinct years, got {}",
            years.len()
        )));
    }

    let mut by_day: Vec<Vec<f64>> = vec![Vec::new(); 366];
    for (&v, &d) in series.values().iter().zip(dates) {
        by_day[cycle_day(d)].push(v);
    }

    let mut med = vec![f64::NAN; 366];
    let mut mad = vec![f64::NAN; 366];
    for day in 1..=365usize {
        let obs = &by_day[day];
        if obs.is_empty() {
            continue;
        }
        if obs.len() < 2 {
            return Err(Error::Preprocessing(format!(
                "day-of-year {day} has fewer than 2 observations across years"
            )));
        }
        let (m, s) = median_mad(obs);
        med[day] = m;
        mad[day] = s;
    }

    // Circular moving median over the estimated cycle; days absent from the
    // data contribute nothing to their neighbors' windows.
    let smooth = |cycle: &[f64]| -> Vec<f64> {
        let mut out = vec![f64::NAN; 366];
        for day in 1..=365usize {
            if cycle[day].is_nan() {
                continue;
            }
            let mut window: Vec<f64> = (-7i64..=7)
                .map(|off| {
                    let d = ((day as i64 - 1 + off).rem_euclid(365) + 1) as usize;
                    cycle[d]
                })
                .filter(|v| !v.is_nan())
                .collect();
            out[day] = median_of(&mut window);
        }
        out
    };
    let med = smooth(&med);
    let mad = smooth(&mad);

    let mut out = Vec::with_capacity(series.len());
    for (&v, &d) in series.values().iter().zip(dates) {
        let day = cycle_day(d);
        let s = mad[day];
        if s == 0.0 {
            return Err(Error::Preprocessing(format!(
                "zero MAD in seasonal cycle at day-of-year {day}"
            )));
        }
        out.push((v - med[day]) / s);
    }
    TimeSeries::build(out, Some(dates.to_vec()), series.meta.clone())
}

/// Remove slow trends: at each time, subtract the median and divide by the
/// scaled MAD of all observations within `t +/- window_years/2`. Windows are
/// truncated at the series boundaries.
pub fn detrend_moving(series: &TimeSeries, window_years: f64) -> Result<TimeSeries> {
    let dates = series
        .timestamps()
        .ok_or_else(|| Error::Preprocessing("detrend needs timestamps".into()))?;
    if !(window_years > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "window must be positive, got {window_years} years"
        )));
    }
    let half_days = window_years * 365.25 / 2.0;
    let offsets: Vec<f64> = {
        let first = dates[0];
        dates
            .iter()
            .map(|d| (*d - first).num_days() as f64)
            .collect()
    };
    let values = series.values();

    let mut out = Vec::with_capacity(values.len());
    let (mut lo, mut hi) = (0usize, 0usize);
    for i in 0..values.len() {
        while offsets[i] - offsets[lo] > half_days {
            lo += 1;
        }
        if hi < i + 1 {
            hi = i + 1;
        }
        while hi < values.len() && offsets[hi] - offsets[i] <= half_days {
            hi += 1;
        }
        let window = &values[lo..hi];
        if window.len() < 10 {
            return Err(Error::Preprocessing(format!(
                "moving window at {} contains only {} observations (need 10)",
                dates[i],
                window.len()
            )));
        }
        let (m, s) = median_mad(window);
        if s == 0.0 {
            return Err(Error::Preprocessing(format!(
                "zero MAD in moving window at {}",
                dates[i]
            )));
        }
        out.push((values[i] - m) / s);
    }
    TimeSeries::build(out, Some(dates.to_vec()), series.meta.clone())
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Read a series from CSV. Two accepted layouts, each with a mandatory
/// header row: `date,value` with ISO-8601 dates, or a single `value` column.
/// Lines starting with `#` are ignored. Blank or non-finite values are
/// rejected with the offending line number.
pub fn read_csv<R: Read>(reader: R) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let dated = match cols.as_slice() {
        ["date", "value"] => true,
        ["value"] => false,
        other => {
            return Err(Error::Csv {
                line: 1,
                message: format!(
                    "expected header `date,value` or `value`, got `{}`",
                    other.join(",")
                ),
            })
        }
    };

    let mut values = Vec::new();
    let mut dates = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e
                .position()
                .map(|p| p.line())
                .unwrap_or(0);
            Error::Csv {
                line,
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let expected = if dated { 2 } else { 1 };
        if rec.len() != expected {
            return Err(Error::Csv {
                line,
                message: format!("expected {} fields, got {}", expected, rec.len()),
            });
        }
        let value_field = if dated { &rec[1] } else { &rec[0] };
        if value_field.is_empty() {
            return Err(Error::Csv {
                line,
                message: "blank value".into(),
            });
        }
        let v: f64 = value_field.parse().map_err(|_| Error::Csv {
            line,
            message: format!("cannot parse value `{value_field}`"),
        })?;
        if !v.is_finite() {
            return Err(Error::Csv {
                line,
                message: format!("non-finite value `{value_field}`"),
            });
        }
        if dated {
            let d = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|_| Error::Csv {
                line,
                message: format!("cannot parse date `{}`", &rec[0]),
            })?;
            dates.push(d);
        }
        values.push(v);
    }

    if dated {
        TimeSeries::with_dates(values, dates)
    } else {
        TimeSeries::new(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> TimeSeries {
        TimeSeries::new(values.to_vec()).unwrap()
    }

    #[test]
    fn quantile_median_of_odd_sample() {
        let s = series(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(empirical_quantile(&s, 0.5).unwrap(), 3.0);
    }

    #[test]
    fn quantile_top_order_statistic() {
        let s = series(&[10.0, 20.0]);
        assert_eq!(empirical_quantile(&s, 0.95).unwrap(), 20.0);
    }

    #[test]
    fn quantile_rejects_bad_p() {
        let s = series(&[1.0, 2.0]);
        assert!(empirical_quantile(&s, 0.0).is_err());
        assert!(empirical_quantile(&s, 1.0).is_err());
    }

    #[test]
    fn quantile_grid_probability_hits_exact_rank() {
        // 0.95 * 10000 rounds up in binary; the rank tolerance must keep it
        // at order statistic 9500.
        let values: Vec<f64> = (1..=10_000).map(|i| i as f64).collect();
        let s = TimeSeries::new(values).unwrap();
        assert_eq!(empirical_quantile(&s, 0.95).unwrap(), 9500.0);
    }

    #[test]
    fn exceedances_enumeration() {
        let s = series(&[1.0, 5.0, 2.0, 6.0]);
        let r = exceedances(&s, 4.0).unwrap();
        assert_eq!(r.indices(), &[2, 4]);
        assert_eq!(r.excesses(), &[1.0, 2.0]);
        assert_eq!(r.count(), 2);
        assert_eq!(r.tail_prob(), 0.5);
    }

    #[test]
    fn exceedances_strict_at_max() {
        let s = series(&[1.0, 5.0, 2.0]);
        assert!(matches!(
            exceedances(&s, 5.0),
            Err(Error::NoExceedances { .. })
        ));
    }

    #[test]
    fn exceedances_monotone_in_threshold() {
        let s = series(&[3.0, 7.0, 1.0, 9.0, 4.0, 8.0]);
        let low = exceedances(&s, 2.0).unwrap();
        let high = exceedances(&s, 5.0).unwrap();
        for idx in high.indices() {
            assert!(low.indices().contains(idx));
        }
    }

    #[test]
    fn inter_exceedance_differences() {
        let s = series(&[0.0, 9.0, 0.0, 9.0, 0.0, 0.0, 0.0, 0.0, 9.0]);
        let r = exceedances(&s, 5.0).unwrap();
        assert_eq!(r.indices(), &[2, 4, 9]);
        assert_eq!(inter_exceedance_times(&r).unwrap(), vec![2, 5]);
    }

    #[test]
    fn inter_exceedance_consecutive() {
        let s = series(&[9.0, 9.0, 9.0, 0.0]);
        let r = exceedances(&s, 5.0).unwrap();
        assert_eq!(inter_exceedance_times(&r).unwrap(), vec![1, 1]);
    }

    #[test]
    fn inter_exceedance_needs_two() {
        let s = series(&[9.0, 0.0]);
        let r = exceedances(&s, 5.0).unwrap();
        assert!(inter_exceedance_times(&r).is_err());
    }

    #[test]
    fn k_gaps_direct_formula() {
        let g = k_gaps(&[2, 5], 1, 0.5).unwrap();
        assert_eq!(g.gaps(), &[0.5, 2.0]);
        assert_eq!(g.n_positive(), 2);
    }

    #[test]
    fn k_gaps_truncation_to_zero() {
        let g = k_gaps(&[1, 1], 1, 0.3).unwrap();
        assert_eq!(g.gaps(), &[0.0, 0.0]);
        assert_eq!(g.n_positive(), 0);
    }

    #[test]
    fn k_gaps_mixed() {
        let g = k_gaps(&[3, 1, 7], 2, 0.1).unwrap();
        let expected = [0.1, 0.0, 0.5];
        for (a, b) in g.gaps().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(g.n_positive(), 2);
    }

    #[test]
    fn k_gaps_zero_k_is_scaled_times() {
        let times = [4u64, 1, 9];
        let g = k_gaps(&times, 0, 0.25).unwrap();
        for (c, t) in g.gaps().iter().zip(times) {
            assert_eq!(*c, 0.25 * t as f64);
        }
    }

    #[test]
    fn k_gaps_monotone_in_k() {
        let times = [3u64, 1, 7, 2, 10];
        let lo = k_gaps(&times, 1, 0.2).unwrap();
        let hi = k_gaps(&times, 4, 0.2).unwrap();
        for (a, b) in hi.gaps().iter().zip(lo.gaps()) {
            assert!(a <= b);
        }
        assert!(hi.n_positive() <= lo.n_positive());
    }

    #[test]
    fn sum_c_unit_weights_matches_unweighted() {
        let g = k_gaps(&[3, 1, 7], 2, 0.1).unwrap();
        let unweighted = g.sum_c();
        let weighted = g.clone().with_weights(vec![1.0; 3]).unwrap();
        assert_eq!(weighted.sum_c(), unweighted);
    }

    #[test]
    fn decluster_example() {
        let mut values = vec![0.0; 9];
        values[1] = 5.0;
        values[3] = 7.0;
        values[8] = 6.0;
        let s = series(&values);
        let r = exceedances(&s, 4.0).unwrap();
        let cs = decluster_runs(&r, 2);
        assert_eq!(cs.clusters(), &[vec![2, 4], vec![9]]);
        assert_eq!(cs.peaks()[0].index, 4);
        assert_eq!(cs.peaks()[0].value, 7.0);
        assert_eq!(cs.peaks()[1].index, 9);
        assert_eq!(cs.peaks()[1].value, 6.0);
    }

    #[test]
    fn decluster_k0_singletons() {
        let s = series(&[9.0, 9.0, 0.0, 9.0]);
        let r = exceedances(&s, 5.0).unwrap();
        let cs = decluster_runs(&r, 0);
        assert_eq!(cs.len(), 3);
    }

    #[test]
    fn decluster_peak_tie_earliest() {
        let s = series(&[9.0, 9.0, 0.0]);
        let r = exceedances(&s, 5.0).unwrap();
        let cs = decluster_runs(&r, 3);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs.peaks()[0].index, 1);
    }

    // Cluster count equals N_C + 1 for every exceedance pattern of length
    // <= 12 and K <= 4 (exhaustive; also run at scale in the acceptance
    // suite).
    #[test]
    fn decluster_cluster_count_identity_exhaustive_small() {
        for n in 1..=9usize {
            for mask in 1u32..(1 << n) {
                let values: Vec<f64> = (0..n)
                    .map(|i| if mask >> i & 1 == 1 { 1.0 } else { 0.0 })
                    .collect();
                let mut padded = values.clone();
                padded.push(0.0); // TimeSeries needs len >= 2
                let s = series(&padded);
                let r = exceedances(&s, 0.5).unwrap();
                for k in 0..=4u64 {
                    let clusters = decluster_runs(&r, k).len();
                    let n_c = if r.count() >= 2 {
                        let times = inter_exceedance_times(&r).unwrap();
                        k_gaps(&times, k, r.tail_prob()).unwrap().n_positive()
                    } else {
                        0
                    };
                    assert_eq!(clusters, n_c + 1, "mask={mask:b} k={k}");
                }
            }
        }
    }

    fn daily_series(start: NaiveDate, values: Vec<f64>) -> TimeSeries {
        let dates: Vec<NaiveDate> = (0..values.len() as i64)
            .map(|i| start + chrono::Duration::days(i))
            .collect();
        TimeSeries::with_dates(values, dates).unwrap()
    }

    #[test]
    fn deseasonalize_rejects_single_year() {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        let s = daily_series(start, vec![1.0; 200]);
        assert!(deseasonalize(&s).is_err());
    }

    #[test]
    fn deseasonalize_rejects_constant_series() {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        let s = daily_series(start, vec![1.0; 365 * 3]);
        match deseasonalize(&s) {
            Err(Error::Preprocessing(msg)) => assert!(msg.contains("zero MAD")),
            other => panic!("expected zero-MAD error, got {other:?}"),
        }
    }

    #[test]
    fn deseasonalize_merges_leap_day() {
        // 2000 is a leap year; Feb 29 must standardize against the Feb 28
        // cell rather than a singleton cell (which would error).
        let start = NaiveDate::from_ymd_opt(1999, 1, 1).unwrap();
        let n = 365 * 4 + 1;
        let values: Vec<f64> = (0..n).map(|i| (i % 7) as f64).collect();
        let s = daily_series(start, values);
        assert!(deseasonalize(&s).is_ok());
    }

    #[test]
    fn detrend_window_spanning_series_is_global_standardization() {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        let values: Vec<f64> = (0..400).map(|i| (i as f64 * 0.7).sin() * 3.0).collect();
        let s = daily_series(start, values.clone());
        let out = detrend_moving(&s, 100.0).unwrap();
        let (m, sd) = median_mad(&values);
        for (o, v) in out.values().iter().zip(&values) {
            assert!((o - (v - m) / sd).abs() < 1e-12);
        }
    }

    #[test]
    fn detrend_rejects_constant() {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        let s = daily_series(start, vec![2.0; 100]);
        assert!(detrend_moving(&s, 1.0).is_err());
    }

    #[test]
    fn season_break_drops_spanning_gap() {
        // Two "seasons" of 5 daily observations separated by a long gap.
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).unwrap();
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for i in 0..5 {
            dates.push(d(2000, 6, 1 + i));
            values.push(if i == 1 { 9.0 } else { 0.0 });
        }
        for i in 0..5 {
            dates.push(d(2001, 6, 1 + i));
            values.push(if i == 3 { 9.0 } else { 0.0 });
        }
        let s = TimeSeries::with_dates(values, dates).unwrap();
        let (_, concat) = gap_sample(&s, 5.0, 0, SeasonJoin::Concatenate).unwrap();
        assert_eq!(concat.n_gaps(), 1);
        assert!(matches!(
            gap_sample(&s, 5.0, 0, SeasonJoin::Break),
            Err(Error::TooFewObservations { .. })
        ));
    }

    #[test]
    fn season_break_keeps_within_season_gaps() {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).unwrap();
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for i in 0..6 {
            dates.push(d(2000, 6, 1 + i));
            values.push(if i == 0 || i == 4 { 9.0 } else { 0.0 });
        }
        for i in 0..6 {
            dates.push(d(2001, 6, 1 + i));
            values.push(if i == 1 || i == 2 { 9.0 } else { 0.0 });
        }
        let s = TimeSeries::with_dates(values, dates).unwrap();
        let (_, broken) = gap_sample(&s, 5.0, 0, SeasonJoin::Break).unwrap();
        // Three gaps total; the one spanning the seasons is dropped.
        assert_eq!(broken.n_gaps(), 2);
        let (_, concat) = gap_sample(&s, 5.0, 0, SeasonJoin::Concatenate).unwrap();
        assert_eq!(concat.n_gaps(), 3);
    }

    #[test]
    fn read_csv_dated() {
        let data = "date,value\n2000-01-01,1.5\n2000-01-02,2.5\n";
        let s = read_csv(data.as_bytes()).unwrap();
        assert_eq!(s.values(), &[1.5, 2.5]);
        assert!(s.timestamps().is_some());
    }

    #[test]
    fn read_csv_value_only_with_comments() {
        let data = "# produced by a tool\nvalue\n1.0\n2.0\n3.0\n";
        let s = read_csv(data.as_bytes()).unwrap();
        assert_eq!(s.values(), &[1.0, 2.0, 3.0]);
        assert!(s.timestamps().is_none());
    }

    #[test]
    fn read_csv_rejects_nan_with_line_number() {
        let data = "value\n1.0\nNaN\n";
        match read_csv(data.as_bytes()) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected csv error, got {other:?}"),
        }
    }

    #[test]
    fn read_csv_rejects_blank_with_line_number() {
        let data = "date,value\n2000-01-01,1.0\n2000-01-02,\n";
        match read_csv(data.as_bytes()) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected csv error, got {other:?}"),
        }
    }

    #[test]
    fn read_csv_rejects_bad_header() {
        let data = "time,obs\n1,2\n";
        assert!(matches!(
            read_csv(data.as_bytes()),
            Err(Error::Csv { line: 1, .. })
        ));
    }

    #[test]
    fn timeseries_rejects_short_and_nonfinite() {
        assert!(TimeSeries::new(vec![1.0]).is_err());
        assert!(TimeSeries::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn timeseries_rejects_unsorted_dates() {
        let d = |day| NaiveDate::from_ymd_opt(2000, 1, day).unwrap();
        assert!(TimeSeries::with_dates(vec![1.0, 2.0], vec![d(2), d(1)]).is_err());
        assert!(TimeSeries::with_dates(vec![1.0, 2.0], vec![d(1), d(1)]).is_err());
    }
}
