//! Cleaning, temporal alignment, daily aggregation and standard scaling.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::ingest::{infer_cadence, DemandSeries};
use crate::math;
use crate::{Instant, SECONDS_PER_DAY};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PreprocessError {
    #[error("no series to align")]
    Empty,
    #[error("series `{0}` appears more than once")]
    DuplicateColumn(String),
    #[error("cadence mismatch: `{column}` samples every {found} s, expected {expected} s")]
    Cadence {
        column: String,
        expected: i64,
        found: i64,
    },
    #[error("column `{0}` has no valid cells")]
    Unfillable(String),
    #[error("cadence {0} s does not divide one day")]
    NonDailyCadence(i64),
    #[error("frame has {found} columns, scaler was fitted on {expected}")]
    ColumnCount { expected: usize, found: usize },
    #[error("row range {start}..{end} outside a frame of {rows} rows")]
    RowRange {
        start: usize,
        end: usize,
        rows: usize,
    },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("frame dimensions do not match: {0}")]
    Shape(String),
}

/// Time × column matrix over a shared timestamp axis, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFrame {
    pub columns: Vec<String>,
    pub timestamps: Vec<Instant>,
    pub values: Vec<f64>,
    /// `true` where the cell holds an observed value.
    pub mask: Vec<bool>,
}

impl SeriesFrame {
    pub fn new(
        columns: Vec<String>,
        timestamps: Vec<Instant>,
        values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self, PreprocessError> {
        let cells = columns.len() * timestamps.len();
        if values.len() != cells || mask.len() != cells {
            return Err(PreprocessError::Shape(alloc::format!(
                "{} rows × {} columns needs {cells} cells, got {} values and {} mask bits",
                timestamps.len(),
                columns.len(),
                values.len(),
                mask.len()
            )));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PreprocessError::Shape(
                "timestamps must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            columns,
            timestamps,
            values,
            mask,
        })
    }

    /// Fully observed frame.
    pub fn dense(
        columns: Vec<String>,
        timestamps: Vec<Instant>,
        values: Vec<f64>,
    ) -> Result<Self, PreprocessError> {
        let mask = vec![true; values.len()];
        Self::new(columns, timestamps, values, mask)
    }

    pub fn rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols() + col]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.cols() + col]
    }

    pub fn column_index(&self, id: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == id)
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|m| !**m).count()
    }

    pub fn cadence(&self) -> Option<i64> {
        infer_cadence(&self.timestamps)
    }

    /// Contiguous row subset.
    pub fn slice_rows(&self, range: Range<usize>) -> Result<Self, PreprocessError> {
        if range.start > range.end || range.end > self.rows() {
            return Err(PreprocessError::RowRange {
                start: range.start,
                end: range.end,
                rows: self.rows(),
            });
        }
        let c = self.cols();
        Ok(Self {
            columns: self.columns.clone(),
            timestamps: self.timestamps[range.clone()].to_vec(),
            values: self.values[range.start * c..range.end * c].to_vec(),
            mask: self.mask[range.start * c..range.end * c].to_vec(),
        })
    }

    /// Frame restricted to the named columns, in the given order.
    pub fn select(&self, ids: &[String]) -> Result<Self, PreprocessError> {
        let idx = ids
            .iter()
            .map(|id| {
                self.column_index(id)
                    .ok_or_else(|| PreprocessError::UnknownColumn(id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut values = Vec::with_capacity(self.rows() * idx.len());
        let mut mask = Vec::with_capacity(values.capacity());
        for r in 0..self.rows() {
            for &c in &idx {
                values.push(self.get(r, c));
                mask.push(self.is_valid(r, c));
            }
        }
        Ok(Self {
            columns: ids.to_vec(),
            timestamps: self.timestamps.clone(),
            values,
            mask,
        })
    }
}

/// Places every series on the union of their timestamps.
pub fn align(series: &[DemandSeries]) -> Result<SeriesFrame, PreprocessError> {
    if series.is_empty() {
        return Err(PreprocessError::Empty);
    }
    let mut expected: Option<i64> = None;
    let mut seen = BTreeSet::new();
    for s in series {
        let id = s.id();
        if !seen.insert(id.clone()) {
            return Err(PreprocessError::DuplicateColumn(id));
        }
        if let Some(found) = s.cadence {
            match expected {
                None => expected = Some(found),
                Some(e) if e != found => {
                    return Err(PreprocessError::Cadence {
                        column: id,
                        expected: e,
                        found,
                    })
                }
                _ => {}
            }
        }
    }
    let axis: Vec<Instant> = series
        .iter()
        .flat_map(|s| s.timestamps.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let row_of: BTreeMap<Instant, usize> = axis.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let cols = series.len();
    let mut values = vec![0.0; axis.len() * cols];
    let mut mask = vec![false; axis.len() * cols];
    for (c, s) in series.iter().enumerate() {
        for (t, v) in s.timestamps.iter().zip(&s.values) {
            if let Some(v) = v {
                let r = row_of[t];
                values[r * cols + c] = *v;
                mask[r * cols + c] = true;
            }
        }
    }
    SeriesFrame::new(
        series.iter().map(DemandSeries::id).collect(),
        axis,
        values,
        mask,
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    /// Linear in row index between the nearest valid neighbours.
    #[default]
    Linear,
    /// Repeat the previous valid value.
    Previous,
}

/// Fills masked cells; leading and trailing gaps take the nearest valid value.
pub fn clean(frame: &SeriesFrame, policy: FillPolicy) -> Result<SeriesFrame, PreprocessError> {
    let (rows, cols) = (frame.rows(), frame.cols());
    let mut out = frame.clone();
    for c in 0..cols {
        let valid: Vec<usize> = (0..rows).filter(|&r| frame.is_valid(r, c)).collect();
        let (first, last) = match (valid.first(), valid.last()) {
            (Some(&f), Some(&l)) => (f, l),
            _ if rows == 0 => continue,
            _ => return Err(PreprocessError::Unfillable(frame.columns[c].clone())),
        };
        for r in 0..first {
            out.values[r * cols + c] = frame.get(first, c);
        }
        for r in last + 1..rows {
            out.values[r * cols + c] = frame.get(last, c);
        }
        for pair in valid.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (va, vb) = (frame.get(a, c), frame.get(b, c));
            for r in a + 1..b {
                out.values[r * cols + c] = match policy {
                    FillPolicy::Linear => va + (vb - va) * (r - a) as f64 / (b - a) as f64,
                    FillPolicy::Previous => va,
                };
            }
        }
    }
    out.mask.iter_mut().for_each(|m| *m = true);
    Ok(out)
}

/// Daily aggregate plus the days that had fewer rows than a full day.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyAggregate {
    pub frame: SeriesFrame,
    pub partial_days: Vec<Instant>,
}

/// UTC-midnight start of the day containing `t`.
pub fn day_start(t: Instant) -> Instant {
    t.div_euclid(SECONDS_PER_DAY) * SECONDS_PER_DAY
}

/// One row per UTC day holding the maximum of each column's valid cells.
pub fn daily_max(frame: &SeriesFrame) -> Result<DailyAggregate, PreprocessError> {
    let cols = frame.cols();
    let per_day = match frame.cadence() {
        Some(c) if c <= 0 || SECONDS_PER_DAY % c != 0 && c % SECONDS_PER_DAY != 0 => {
            return Err(PreprocessError::NonDailyCadence(c))
        }
        Some(c) if c < SECONDS_PER_DAY => (SECONDS_PER_DAY / c) as usize,
        _ => 1,
    };
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut partial_days = Vec::new();
    let mut r = 0;
    while r < frame.rows() {
        let day = day_start(frame.timestamps[r]);
        let mut end = r;
        while end < frame.rows() && day_start(frame.timestamps[end]) == day {
            end += 1;
        }
        if end - r < per_day {
            partial_days.push(day);
        }
        timestamps.push(day);
        for c in 0..cols {
            let mut best: Option<f64> = None;
            for row in r..end {
                if frame.is_valid(row, c) {
                    let v = frame.get(row, c);
                    best = Some(best.map_or(v, |b: f64| b.max(v)));
                }
            }
            values.push(best.unwrap_or(0.0));
            mask.push(best.is_some());
        }
        r = end;
    }
    Ok(DailyAggregate {
        frame: SeriesFrame::new(frame.columns.clone(), timestamps, values, mask)?,
        partial_days,
    })
}

pub const SCALER_EPSILON: f64 = 1e-8;

/// Per-column standardisation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
    pub epsilon: f64,
    /// Rows the parameters were fitted on.
    pub fit_rows: (usize, usize),
}

impl ScalerParams {
    fn scale(&self, c: usize) -> f64 {
        self.std[c].max(self.epsilon)
    }

    fn check(&self, frame: &SeriesFrame) -> Result<(), PreprocessError> {
        if frame.cols() != self.mean.len() {
            return Err(PreprocessError::ColumnCount {
                expected: self.mean.len(),
                found: frame.cols(),
            });
        }
        Ok(())
    }

    /// Maps a scaled value of column `c` back to original units.
    pub fn invert_value(&self, c: usize, v: f64) -> f64 {
        v * self.scale(c) + self.mean[c]
    }
}

/// Fits mean and population standard deviation on `rows` only.
pub fn fit_scaler(
    frame: &SeriesFrame,
    rows: Range<usize>,
) -> Result<ScalerParams, PreprocessError> {
    if rows.start >= rows.end || rows.end > frame.rows() {
        return Err(PreprocessError::RowRange {
            start: rows.start,
            end: rows.end,
            rows: frame.rows(),
        });
    }
    let mut mean = Vec::with_capacity(frame.cols());
    let mut std = Vec::with_capacity(frame.cols());
    for c in 0..frame.cols() {
        let cells: Vec<f64> = rows
            .clone()
            .filter(|&r| frame.is_valid(r, c))
            .map(|r| frame.get(r, c))
            .collect();
        if cells.is_empty() {
            return Err(PreprocessError::Unfillable(frame.columns[c].clone()));
        }
        let n = cells.len() as f64;
        let m = cells.iter().sum::<f64>() / n;
        let var = cells.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        let s = math::sqrt(var);
        if s < SCALER_EPSILON {
            log::warn!(
                "column `{}` has zero variance on the fit rows; scaling by epsilon",
                frame.columns[c]
            );
        }
        mean.push(m);
        std.push(s);
    }
    Ok(ScalerParams {
        mean,
        std,
        epsilon: SCALER_EPSILON,
        fit_rows: (rows.start, rows.end),
    })
}

pub fn transform(
    frame: &SeriesFrame,
    params: &ScalerParams,
) -> Result<SeriesFrame, PreprocessError> {
    params.check(frame)?;
    let mut out = frame.clone();
    let cols = frame.cols();
    for (i, v) in out.values.iter_mut().enumerate() {
        let c = i % cols;
        *v = (*v - params.mean[c]) / params.scale(c);
    }
    Ok(out)
}

pub fn invert(frame: &SeriesFrame, params: &ScalerParams) -> Result<SeriesFrame, PreprocessError> {
    params.check(frame)?;
    let mut out = frame.clone();
    let cols = frame.cols();
    for (i, v) in out.values.iter_mut().enumerate() {
        *v = params.invert_value(i % cols, *v);
    }
    Ok(out)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn series(id: (&str, &str), ts: &[Instant], vals: &[Option<f64>]) -> DemandSeries {
        DemandSeries {
            source: id.0.to_string(),
            target: id.1.to_string(),
            timestamps: ts.to_vec(),
            values: vals.to_vec(),
            cadence: infer_cadence(ts),
        }
    }

    fn one_col(vals: &[Option<f64>]) -> SeriesFrame {
        let ts: Vec<Instant> = (0..vals.len() as i64).map(|i| i * 300).collect();
        align(&[series(("A", "B"), &ts, vals)]).unwrap()
    }

    #[test]
    fn identical_axes_have_no_masks() {
        let a = series(("A", "B"), &[0, 300], &[Some(1.0), Some(2.0)]);
        let b = series(("B", "A"), &[0, 300], &[Some(3.0), Some(4.0)]);
        let f = align(&[a, b]).unwrap();
        assert_eq!(f.masked_count(), 0);
        assert_eq!(f.values, vec![1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn union_axis_masks_absent_cells() {
        let a = series(("A", "B"), &[0, 300], &[Some(1.0), Some(2.0)]);
        let b = series(("B", "A"), &[300, 600], &[Some(3.0), Some(4.0)]);
        let f = align(&[a, b]).unwrap();
        assert_eq!(f.timestamps, vec![0, 300, 600]);
        assert_eq!(f.masked_count(), 2);
        assert!(!f.is_valid(0, 1) && !f.is_valid(2, 0));
    }

    #[test]
    fn gap_flags_become_masks() {
        let a = series(("A", "B"), &[0, 300, 600], &[Some(1.0), None, Some(2.0)]);
        let b = series(("B", "A"), &[0, 300, 600], &[None, None, Some(2.0)]);
        let gaps = a.gap_count() + b.gap_count();
        assert_eq!(align(&[a, b]).unwrap().masked_count(), gaps);
    }

    #[test]
    fn align_errors() {
        assert_eq!(align(&[]), Err(PreprocessError::Empty));
        let a = series(("A", "B"), &[0, 300], &[Some(1.0), Some(2.0)]);
        let b = series(("B", "A"), &[0, 600], &[Some(1.0), Some(2.0)]);
        assert!(matches!(
            align(&[a.clone(), b]),
            Err(PreprocessError::Cadence { .. })
        ));
        assert!(matches!(
            align(&[a.clone(), a]),
            Err(PreprocessError::DuplicateColumn(_))
        ));
    }

    #[test]
    fn clean_midpoint_and_edges() {
        let f = clean(&one_col(&[Some(1.0), None, Some(3.0)]), FillPolicy::Linear).unwrap();
        assert_eq!(f.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(f.masked_count(), 0);
        let f = clean(&one_col(&[None, Some(5.0), Some(5.0)]), FillPolicy::Linear).unwrap();
        assert_eq!(f.values, vec![5.0, 5.0, 5.0]);
        let f = clean(
            &one_col(&[Some(1.0), None, Some(3.0), None]),
            FillPolicy::Previous,
        )
        .unwrap();
        assert_eq!(f.values, vec![1.0, 1.0, 3.0, 3.0]);
        assert_eq!(
            clean(&one_col(&[None, None]), FillPolicy::Linear),
            Err(PreprocessError::Unfillable("A->B".into()))
        );
    }

    #[test]
    fn clean_random_masking_bounded_by_local_variation() {
        let mut rng = crate::numerics::XorShift64::new(11);
        let truth: Vec<f64> = (0..400)
            .map(|i| 10.0 + math::sin(i as f64 * 0.05) * 3.0)
            .collect();
        let vals: Vec<Option<f64>> = truth
            .iter()
            .enumerate()
            .map(|(i, &v)| (i == 0 || i == 399 || rng.next_f64() > 0.05).then_some(v))
            .collect();
        let f = one_col(&vals);
        let filled = clean(&f, FillPolicy::Linear).unwrap();
        let valid: Vec<usize> = (0..400).filter(|&i| vals[i].is_some()).collect();
        for w in valid.windows(2) {
            let lo = truth[w[0]..=w[1]]
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            let hi = truth[w[0]..=w[1]]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            for i in w[0] + 1..w[1] {
                assert!((filled.values[i] - truth[i]).abs() <= hi - lo + 1e-12);
            }
        }
    }

    #[test]
    fn noon_peak_survives_daily_max() {
        let day = 20_000 * SECONDS_PER_DAY;
        let ts: Vec<Instant> = (0..288).map(|i| day + i * 300).collect();
        let vals: Vec<Option<f64>> = (0..288)
            .map(|i| {
                Some(if i == 144 {
                    7.5
                } else {
                    1.0 + (i % 5) as f64 * 0.1
                })
            })
            .collect();
        let agg = daily_max(&align(&[series(("A", "B"), &ts, &vals)]).unwrap()).unwrap();
        assert_eq!(agg.frame.values, vec![7.5]);
        assert_eq!(agg.frame.timestamps, vec![day]);
        assert!(agg.partial_days.is_empty());
    }

    #[test]
    fn daily_max_partial_days_and_idempotence() {
        // starts at 23:00 on day 0, runs into day 2
        let ts: Vec<Instant> = (0..310).map(|i| 82_800 + i * 300).collect();
        let vals: Vec<Option<f64>> = (0..310).map(|i| Some(4.0 + (i % 7) as f64)).collect();
        let agg = daily_max(&align(&[series(("A", "B"), &ts, &vals)]).unwrap()).unwrap();
        assert_eq!(agg.frame.rows(), 3);
        assert_eq!(agg.partial_days, vec![0, 2 * SECONDS_PER_DAY]);
        let again = daily_max(&agg.frame).unwrap();
        assert_eq!(again.frame, agg.frame);
        assert!(again.partial_days.is_empty());
    }

    #[test]
    fn constant_column_daily_max() {
        let ts: Vec<Instant> = (0..576).map(|i| i * 300).collect();
        let f = SeriesFrame::dense(vec!["c".into()], ts, vec![3.25; 576]).unwrap();
        assert_eq!(daily_max(&f).unwrap().frame.values, vec![3.25, 3.25]);
    }

    #[test]
    fn scaler_reference_values() {
        let f = SeriesFrame::dense(vec!["x".into()], vec![0, 1, 2], vec![1.0, 2.0, 3.0]).unwrap();
        let p = fit_scaler(&f, 0..3).unwrap();
        assert_eq!(p.mean, vec![2.0]);
        assert!((p.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let t = transform(&f, &p).unwrap();
        let expect = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in t.values.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let k = SeriesFrame::dense(vec!["k".into()], vec![0, 1], vec![4.0, 4.0]).unwrap();
        let pk = fit_scaler(&k, 0..2).unwrap();
        assert_eq!(transform(&k, &pk).unwrap().values, vec![0.0, 0.0]);
    }

    #[test]
    fn scaler_ignores_masked_cells_and_detects_leakage() {
        let vals: Vec<Option<f64>> = (0..10)
            .map(|i| if i == 2 { None } else { Some(i as f64) })
            .collect();
        let f = one_col(&vals);
        let train = fit_scaler(&f, 0..6).unwrap();
        let expected = (1 + 3 + 4 + 5) as f64 / 5.0;
        assert_eq!(train.mean[0], expected);
        let leaky = fit_scaler(&f, 0..10).unwrap();
        assert_ne!(train, leaky);
        assert_eq!(train.fit_rows, (0, 6));
    }

    proptest! {
        #[test]
        fn scaler_round_trip(
            data in proptest::collection::vec(-1e6f64..1e6, 3 * 12),
        ) {
            let cols: Vec<String> = (0..3).map(|i| alloc::format!("c{i}")).collect();
            let f = SeriesFrame::dense(cols, (0..12).collect(), data).unwrap();
            let p = fit_scaler(&f, 0..8).unwrap();
            prop_assume!(p.std.iter().all(|s| *s > 1e-3));
            let back = invert(&transform(&f, &p).unwrap(), &p).unwrap();
            for (a, b) in back.values.iter().zip(&f.values) {
                prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }

        #[test]
        fn fit_rows_are_standardised(data in proptest::collection::vec(-50f64..50.0, 2 * 20)) {
            let f = SeriesFrame::dense(vec!["a".into(), "b".into()], (0..20).collect(), data).unwrap();
            let p = fit_scaler(&f, 0..12).unwrap();
            prop_assume!(p.std.iter().all(|s| *s > 1e-3));
            let t = transform(&f, &p).unwrap();
            for c in 0..2 {
                let col: Vec<f64> = (0..12).map(|r| t.get(r, c)).collect();
                let m = col.iter().sum::<f64>() / 12.0;
                let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 12.0;
                prop_assert!(m.abs() < 1e-9);
                prop_assert!((v - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn clean_keeps_valid_cells(
            vals in proptest::collection::vec(proptest::option::weighted(0.7, 0f64..100.0), 2..40),
        ) {
            prop_assume!(vals.iter().any(Option::is_some));
            let f = one_col(&vals);
            let filled = clean(&f, FillPolicy::Linear).unwrap();
            for (i, v) in vals.iter().enumerate() {
                if let Some(v) = v {
                    prop_assert_eq!(filled.values[i], *v);
                }
            }
        }
    }
}
