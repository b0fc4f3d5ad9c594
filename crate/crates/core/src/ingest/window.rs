use serde::{Deserialize, Serialize};

use super::CrimeTensor;
use crate::error::{Error, Result};

/// Sequence lengths of the three trend streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub recent: usize,
    pub daily: usize,
    pub weekly: usize,
    /// `m = 24 / step_hours`.
    pub steps_per_day: usize,
}

impl WindowConfig {
    /// History a target needs before it, in steps.
    pub fn lookback(&self) -> usize {
        self.recent
            .max(self.daily * self.steps_per_day)
            .max(self.weekly * 7 * self.steps_per_day)
    }

    /// Input step indices for `target` (1-based), oldest first, or `None`
    /// when the history is too short.
    pub fn indices(&self, target: usize) -> Option<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        if target <= self.lookback() {
            return None;
        }
        let m = self.steps_per_day;
        let recent = (target - self.recent..target).collect();
        let daily = (1..=self.daily).rev().map(|d| target - d * m).collect();
        let weekly = (1..=self.weekly).rev().map(|w| target - w * 7 * m).collect();
        Some((recent, daily, weekly))
    }
}

/// One prediction instance. Step indices are 1-based: step `s` covers bin
/// `s - 1` of the time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWindow {
    pub region: usize,
    pub category: usize,
    pub target: usize,
    pub recent: Vec<usize>,
    pub daily: Vec<usize>,
    pub weekly: Vec<usize>,
    /// Raw count at the target step.
    pub truth: f64,
}

impl SampleWindow {
    pub fn target_bin(&self) -> usize {
        self.target - 1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowReport {
    pub emitted: usize,
    /// Target steps dropped for insufficient history.
    pub skipped_steps: usize,
}

/// One window per (target step, region, category) with full history, in
/// chronological order.
pub fn build_windows(
    cfg: &WindowConfig,
    crimes: &CrimeTensor,
    targets: &[(usize, usize)],
) -> Result<(Vec<SampleWindow>, WindowReport)> {
    if cfg.recent == 0 || cfg.steps_per_day == 0 {
        return Err(Error::Config("recent length and steps per day must be positive".into()));
    }
    for &(i, k) in targets {
        if i >= crimes.regions || k >= crimes.categories.len() {
            return Err(Error::Shape(format!("target ({i}, {k}) outside tensor")));
        }
    }
    let mut windows = Vec::new();
    let mut report = WindowReport::default();
    for target in 1..=crimes.steps() {
        let Some((recent, daily, weekly)) = cfg.indices(target) else {
            report.skipped_steps += 1;
            continue;
        };
        for &(region, category) in targets {
            windows.push(SampleWindow {
                region,
                category,
                target,
                recent: recent.clone(),
                daily: daily.clone(),
                weekly: weekly.clone(),
                truth: crimes.get(category, region, target - 1),
            });
        }
    }
    report.emitted = windows.len();
    Ok((windows, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::TimeGrid;
    use chrono::NaiveDate;

    fn cfg(recent: usize, daily: usize, weekly: usize, step_hours: usize) -> WindowConfig {
        WindowConfig {
            recent,
            daily,
            weekly,
            steps_per_day: 24 / step_hours,
        }
    }

    /// Direct transcription of `(T+1) - t*m` for t = n..1.
    fn strided(target: usize, n: usize, stride: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut t = n;
        while t >= 1 {
            out.push(target - t * stride);
            t -= 1;
        }
        out
    }

    #[test]
    fn daily_indices_stride_by_day() {
        let c = cfg(20, 20, 0, 4);
        let (_, daily, _) = c.indices(127).unwrap();
        assert_eq!(daily, strided(127, 20, 6));
        assert_eq!(daily.first(), Some(&7));
        assert_eq!(daily.last(), Some(&121));
        assert_eq!(daily.len(), 20);
    }

    #[test]
    fn weekly_indices_stride_by_week() {
        let c = cfg(20, 20, 3, 4);
        let (_, _, weekly) = c.indices(127).unwrap();
        assert_eq!(weekly, vec![1, 43, 85]);
        assert_eq!(weekly, strided(127, 3, 42));
    }

    #[test]
    fn recent_is_consecutive_and_ends_before_target() {
        let (recent, _, _) = cfg(5, 0, 0, 4).indices(9).unwrap();
        assert_eq!(recent, vec![4, 5, 6, 7, 8]);
    }

    #[test]
    fn short_history_skipped() {
        assert!(cfg(20, 0, 0, 4).indices(10).is_none());
        assert!(cfg(20, 0, 0, 4).indices(20).is_none());
        assert!(cfg(20, 0, 0, 4).indices(21).is_some());
    }

    #[test]
    fn build_reports_skips_and_truth() {
        let start = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        let grid = TimeGrid::days(start, start + chrono::Days::new(2), 4).unwrap();
        let mut crimes = CrimeTensor::zeros(vec!["theft".into()], 2, grid);
        let o = crimes.offset(0, 1, 11);
        crimes.values[o] = 4.0;
        let (w, rep) = build_windows(&cfg(3, 1, 0, 4), &crimes, &[(0, 0), (1, 0)]).unwrap();
        // lookback = max(3, 6) -> targets 7..=12
        assert_eq!(rep.skipped_steps, 6);
        assert_eq!(rep.emitted, 12);
        let last = w.last().unwrap();
        assert_eq!((last.region, last.target, last.truth), (1, 12, 4.0));
        assert!(w.windows(2).all(|p| p[0].target <= p[1].target));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn emitted_windows_satisfy_invariants(
                recent in 1usize..12,
                daily in 0usize..6,
                weekly in 0usize..3,
                step in prop::sample::select(vec![1usize, 2, 3, 4, 6, 8, 12, 24]),
                target in 1usize..800,
            ) {
                let c = cfg(recent, daily, weekly, step);
                let m = c.steps_per_day;
                match c.indices(target) {
                    None => prop_assert!(target <= c.lookback()),
                    Some((r, d, w)) => {
                        prop_assert_eq!(r.len(), recent);
                        prop_assert_eq!(d.len(), daily);
                        prop_assert_eq!(w.len(), weekly);
                        for idx in r.iter().chain(&d).chain(&w) {
                            prop_assert!(*idx >= 1 && *idx < target);
                        }
                        prop_assert_eq!(*r.last().unwrap(), target - 1);
                        prop_assert!(r.windows(2).all(|p| p[1] == p[0] + 1));
                        for (n, &idx) in d.iter().enumerate() {
                            prop_assert_eq!(idx, target - (daily - n) * m);
                        }
                        for (n, &idx) in w.iter().enumerate() {
                            prop_assert_eq!(idx, target - (weekly - n) * 7 * m);
                        }
                    }
                }
            }
        }
    }
}
