//! Change points as jumps in eigenfunction time series.
//!
//! A time index `t` is a candidate when `|s_t - s_{t-1}|` reaches
//! `rel_threshold * (max s - min s)` for the real-part series `s`. Candidates
//! within `min_separation` steps of a larger jump on the same eigenfunction
//! are suppressed. Events are ranked by the implied time scale
//! `-lag_time / ln|lambda|` of their eigenvalue, slowest first.

use std::collections::BTreeMap;

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::EigenDecomposition;
use crate::tensordata::SnapshotSet;

/// `-lag_time / ln|lambda|`. Returns `+inf` for `|lambda| >= 1` and 0 for
/// `lambda == 0`.
pub fn timescale(lambda: c64, lag_time: f64) -> f64 {
    let r = lambda.norm();
    if r >= 1.0 {
        f64::INFINITY
    } else if r == 0.0 {
        0.0
    } else {
        -lag_time / r.ln()
    }
}

/// How the per-step jump is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum JumpStatistic {
    /// Plain first difference of the series.
    #[default]
    FirstDifference,
    /// First difference of a centered rolling median, for noisy series.
    RollingMedian { window: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub rel_threshold: f64,
    pub min_separation: usize,
    pub statistic: JumpStatistic,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            rel_threshold: 0.4,
            min_separation: 5,
            statistic: JumpStatistic::FirstDifference,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_threshold > 0.0 && self.rel_threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rel_threshold must lie in (0, 1], got {}",
                self.rel_threshold
            )));
        }
        if let JumpStatistic::RollingMedian { window: 0 } = self.statistic {
            return Err(Error::InvalidArgument("rolling median window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointEvent {
    pub time_index: usize,
    pub eigen_index: usize,
    /// Signed `s_t - s_{t-1}`.
    pub jump: f64,
    #[serde(with = "nullable_f64")]
    pub timescale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointReport {
    pub events: Vec<ChangePointEvent>,
    /// Absolute jump threshold per eigen index.
    pub threshold_used: BTreeMap<usize, f64>,
    /// Real-part series the detection ran on, per eigen index.
    pub series: BTreeMap<usize, Vec<f64>>,
}

impl ChangePointReport {
    /// `time_index,eigen_index,jump,timescale` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_index,eigen_index,jump,timescale\n");
        for e in &self.events {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.time_index, e.eigen_index, e.jump, e.timescale
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Detects jumps in the real parts of eigenfunctions `indices` (counted
/// from 1) along `traj`, with first-difference jumps.
pub fn detect(
    decomp: &EigenDecomposition,
    traj: &SnapshotSet,
    indices: &[usize],
    rel_threshold: f64,
    min_separation: usize,
) -> Result<ChangePointReport> {
    let cfg = DetectConfig {
        rel_threshold,
        min_separation,
        statistic: JumpStatistic::FirstDifference,
    };
    detect_with(decomp, traj, indices, &cfg)
}

pub fn detect_with(
    decomp: &EigenDecomposition,
    traj: &SnapshotSet,
    indices: &[usize],
    cfg: &DetectConfig,
) -> Result<ChangePointReport> {
    cfg.validate()?;
    if traj.count() < 2 && !indices.is_empty() {
        return Err(Error::EmptySeries);
    }
    let series = decomp.series(traj, indices)?;
    let lag_time = decomp.lag_time();
    let labelled: Vec<(usize, Vec<f64>, f64)> = indices
        .iter()
        .zip(series)
        .map(|(&idx, s)| {
            let scale = timescale(decomp.eigenvalues()[idx - 1], lag_time);
            (idx, s.iter().map(|z| z.re).collect(), scale)
        })
        .collect();
    detect_in_series(&labelled, cfg)
}

/// Detection on precomputed real series: `(eigen_index, series, timescale)`.
pub fn detect_in_series(
    series: &[(usize, Vec<f64>, f64)],
    cfg: &DetectConfig,
) -> Result<ChangePointReport> {
    cfg.validate()?;
    let mut events = Vec::new();
    let mut threshold_used = BTreeMap::new();
    let mut kept_series = BTreeMap::new();
    for (eigen_index, s, scale) in series {
        let (found, threshold) = series_events(s, cfg)?;
        events.extend(found.into_iter().map(|(time_index, jump)| ChangePointEvent {
            time_index,
            eigen_index: *eigen_index,
            jump,
            timescale: *scale,
        }));
        threshold_used.insert(*eigen_index, threshold);
        kept_series.insert(*eigen_index, s.clone());
    }
    events.sort_by(|a, b| {
        b.timescale
            .total_cmp(&a.timescale)
            .then(a.time_index.cmp(&b.time_index))
            .then(a.eigen_index.cmp(&b.eigen_index))
    });
    Ok(ChangePointReport {
        events,
        threshold_used,
        series: kept_series,
    })
}

/// Candidate jumps `(t, s_t - s_{t-1})` at or above `rel_threshold * range`,
/// before suppression, plus the absolute threshold.
pub fn candidate_jumps(series: &[f64], cfg: &DetectConfig) -> Result<(Vec<(usize, f64)>, f64)> {
    if series.len() < 2 {
        return Err(Error::EmptySeries);
    }
    let smoothed;
    let s = match cfg.statistic {
        JumpStatistic::FirstDifference => series,
        JumpStatistic::RollingMedian { window } => {
            smoothed = rolling_median(series, window);
            &smoothed[..]
        }
    };
    let (lo, hi) = s
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let threshold = cfg.rel_threshold * (hi - lo);
    let jumps = (1..s.len())
        .map(|t| (t, s[t] - s[t - 1]))
        .filter(|&(_, j)| j != 0.0 && j.abs() >= threshold)
        .collect();
    Ok((jumps, threshold))
}

fn series_events(series: &[f64], cfg: &DetectConfig) -> Result<(Vec<(usize, f64)>, f64)> {
    let (mut candidates, threshold) = candidate_jumps(series, cfg)?;
    // largest jumps claim their neighbourhood first; earlier wins ties
    candidates.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, f64)> = Vec::new();
    for (t, j) in candidates {
        if kept.iter().all(|&(k, _)| t.abs_diff(k) > cfg.min_separation) {
            kept.push((t, j));
        }
    }
    kept.sort_by_key(|&(t, _)| t);
    Ok((kept, threshold))
}

fn rolling_median(series: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let mut buf = Vec::with_capacity(window + 1);
    (0..series.len())
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(series.len());
            buf.clear();
            buf.extend_from_slice(&series[lo..hi]);
            buf.sort_by(f64::total_cmp);
            let m = buf.len() / 2;
            if buf.len() % 2 == 1 {
                buf[m]
            } else {
                0.5 * (buf[m - 1] + buf[m])
            }
        })
        .collect()
}

/// JSON has no infinity; infinite time scales are written as `null`.
mod nullable_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(rel: f64, sep: usize) -> DetectConfig {
        DetectConfig {
            rel_threshold: rel,
            min_separation: sep,
            statistic: JumpStatistic::FirstDifference,
        }
    }

    fn run(series: Vec<f64>, c: &DetectConfig) -> ChangePointReport {
        detect_in_series(&[(2, series, 1.0)], c).unwrap()
    }

    #[test]
    fn timescale_values() {
        assert!((timescale(c64::new((-1.0f64).exp(), 0.0), 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(timescale(c64::new(1.0, 0.0), 1.0), f64::INFINITY);
        assert_eq!(timescale(c64::new(0.6, 0.8), 3.0), f64::INFINITY);
        assert_eq!(timescale(c64::new(0.0, 0.0), 1.0), 0.0);
        assert!((timescale(c64::new(0.69, 0.0), 1.0) - 2.694).abs() < 1e-3);
        assert!((timescale(c64::new(0.0, 0.69), 1.0) - 2.694).abs() < 1e-3);
    }

    #[test]
    fn constant_series_has_no_events() {
        let r = run(vec![0.7; 10], &cfg(0.5, 0));
        assert!(r.events.is_empty());
    }

    #[test]
    fn single_step() {
        let r = run(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0], &cfg(0.5, 0));
        assert_eq!(r.events.len(), 1);
        assert_eq!(r.events[0].time_index, 3);
        assert_eq!(r.events[0].jump, 1.0);
        assert_eq!(r.threshold_used[&2], 0.5);
    }

    #[test]
    fn suppression_keeps_largest_in_window() {
        let s = vec![0.0, 0.0, 0.6, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0];
        // jumps: t=2 +0.6, t=3 +0.4, t=8 -1.0
        let all = run(s.clone(), &cfg(0.4, 0));
        let times: Vec<usize> = all.events.iter().map(|e| e.time_index).collect();
        assert_eq!(times, vec![2, 3, 8]);
        let nms = run(s, &cfg(0.4, 2));
        let times: Vec<usize> = nms.events.iter().map(|e| e.time_index).collect();
        assert_eq!(times, vec![2, 8]);
        assert_eq!(nms.events[1].jump, -1.0);
    }

    #[test]
    fn events_ordered_by_timescale_then_time() {
        let series = vec![
            (2, vec![0.0, 1.0, 1.0, 0.0], 5.0),
            (3, vec![0.0, 0.0, 1.0, 1.0], f64::INFINITY),
            (4, vec![1.0, 0.0, 0.0, 0.0], 0.5),
        ];
        let r = detect_in_series(&series, &cfg(0.5, 0)).unwrap();
        let order: Vec<(usize, usize)> = r.events.iter().map(|e| (e.eigen_index, e.time_index)).collect();
        assert_eq!(order, vec![(3, 2), (2, 1), (2, 3), (4, 1)]);
        let json = r.to_json().unwrap();
        assert!(json.contains("\"timescale\": null"));
        let back: ChangePointReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(r.to_csv().starts_with("time_index,eigen_index,jump,timescale\n2,3,1,inf\n"));
    }

    #[test]
    fn rolling_median_ignores_spikes() {
        let mut s = vec![0.0; 40];
        s[10] = 5.0;
        for v in s.iter_mut().skip(25) {
            *v = 1.0;
        }
        let plain = run(s.clone(), &cfg(0.4, 0));
        assert!(plain.events.iter().any(|e| e.time_index == 10));
        let c = DetectConfig {
            statistic: JumpStatistic::RollingMedian { window: 5 },
            ..cfg(0.4, 0)
        };
        let smooth = run(s, &c);
        let times: Vec<usize> = smooth.events.iter().map(|e| e.time_index).collect();
        assert_eq!(times, vec![25]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            detect_in_series(&[(2, vec![1.0], 1.0)], &cfg(0.5, 0)),
            Err(Error::EmptySeries)
        ));
        assert!(detect_in_series(&[], &cfg(0.0, 0)).is_err());
        assert!(detect_in_series(&[], &cfg(1.5, 0)).is_err());
    }

    proptest! {
        #[test]
        fn scale_invariance(
            s in prop::collection::vec(-10.0f64..10.0, 2..60),
            c in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
            rel in 0.05f64..1.0,
        ) {
            // Powers of two keep the scaled differences exact.
            let c = c.signum() * 2f64.powi(c.abs().log2().round() as i32);
            let a = run(s.clone(), &cfg(rel, 3));
            let b = run(s.iter().map(|v| v * c).collect(), &cfg(rel, 3));
            let ta: Vec<usize> = a.events.iter().map(|e| e.time_index).collect();
            let tb: Vec<usize> = b.events.iter().map(|e| e.time_index).collect();
            prop_assert_eq!(ta, tb);
        }

        #[test]
        fn lower_threshold_keeps_candidates(
            s in prop::collection::vec(-10.0f64..10.0, 2..60),
            hi in 0.1f64..1.0,
            frac in 0.0f64..1.0,
        ) {
            let lo = (hi * frac).max(1e-6);
            let (strict, _) = candidate_jumps(&s, &cfg(hi, 0)).unwrap();
            let (loose, _) = candidate_jumps(&s, &cfg(lo, 0)).unwrap();
            for e in strict {
                prop_assert!(loose.contains(&e));
            }
        }

        #[test]
        fn report_invariants(
            s in prop::collection::vec(-10.0f64..10.0, 2..80),
            rel in 0.05f64..1.0,
            sep in 0usize..6,
        ) {
            let r = run(s.clone(), &cfg(rel, sep));
            let th = r.threshold_used[&2];
            for e in &r.events {
                prop_assert!(e.jump.abs() >= th);
                prop_assert!(e.time_index >= 1 && e.time_index < s.len());
            }
            for w in r.events.windows(2) {
                prop_assert!(w[0].time_index < w[1].time_index);
                prop_assert!(w[1].time_index - w[0].time_index > sep);
            }
        }

        #[test]
        fn linear_ramp_has_no_events(
            len in 3usize..200,
            slope in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
            offset in -3.0f64..3.0,
        ) {
            let s: Vec<f64> = (0..len).map(|t| offset + slope * t as f64).collect();
            let rel = (1.0 / (len - 1) as f64) * 1.01;
            if rel <= 1.0 {
                let r = run(s, &cfg(rel, 0));
                prop_assert!(r.events.is_empty());
            }
        }
    }
}
