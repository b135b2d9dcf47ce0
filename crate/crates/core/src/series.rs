//! Multichannel series data model, CSV ingestion, sliding windows and
//! z-score normalization of the compressed channel.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Floor applied to the standard deviation during normalization.
pub const STD_FLOOR: f64 = 1e-8;

/// How non-finite or missing CSV fields are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IngestionPolicy {
    #[default]
    Reject,
    /// Replace a missing value with the previous timestamp's value in the
    /// same channel. A missing value in the first row is still rejected.
    ForwardFill,
}

/// An `L_total x C` block of observations with channel names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MultichannelSeries<T> {
    pub values: Matrix<T>,
    pub channel_names: Vec<String>,
    pub source_id: String,
}

impl<T: Scalar> MultichannelSeries<T> {
    /// Wraps a matrix, checking the shape and finiteness invariants.
    pub fn new(values: Matrix<T>, channel_names: Vec<String>, source_id: impl Into<String>) -> Result<Self> {
        if values.cols() == 0 {
            return Err(Error::Data("series must have at least one channel".into()));
        }
        if values.rows() < 2 {
            return Err(Error::Data(format!(
                "series must have at least 2 timestamps, got {}",
                values.rows()
            )));
        }
        if channel_names.len() != values.cols() {
            return Err(Error::Data(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                values.cols()
            )));
        }
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos / values.cols(), pos % values.cols());
            return Err(Error::Data(format!(
                "non-finite value in channel '{}' at row {}",
                channel_names[c], r
            )));
        }
        Ok(Self {
            values,
            channel_names,
            source_id: source_id.into(),
        })
    }

    /// Convenience constructor with generated channel names `ch0..chN`.
    pub fn from_matrix(values: Matrix<T>) -> Result<Self> {
        let names = (0..values.cols()).map(|c| format!("ch{c}")).collect();
        Self::new(values, names, "in-memory")
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.cols()
    }

    pub fn channel(&self, c: usize) -> Vec<T> {
        self.values.column(c)
    }
}

/// Reads a CSV file whose first row holds channel names.
///
/// Row numbers in errors are 1-based data rows (the header is not counted).
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, policy: IngestionPolicy) -> Result<MultichannelSeries<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header = reader.headers().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row: 0,
        message: e.to_string(),
    })?;
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    if names.is_empty() || (names.len() == 1 && names[0].is_empty()) {
        return Err(Error::Data(format!("{}: empty file or missing header", path.display())));
    }
    let width = names.len();

    let mut data: Vec<T> = Vec::new();
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let parsed = if field.is_empty() {
                f64::NAN
            } else {
                field.parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    message: format!("channel '{}': {e}", names[c]),
                })?
            };
            let value = if parsed.is_finite() {
                T::lit(parsed)
            } else {
                match policy {
                    IngestionPolicy::Reject => {
                        return Err(Error::Data(format!(
                            "{}: non-finite value '{field}' in channel '{}' at data row {row}",
                            path.display(),
                            names[c]
                        )))
                    }
                    IngestionPolicy::ForwardFill if rows > 0 => data[(rows - 1) * width + c],
                    IngestionPolicy::ForwardFill => {
                        return Err(Error::Data(format!(
                            "{}: cannot forward-fill channel '{}' at data row {row}: no previous value",
                            path.display(),
                            names[c]
                        )))
                    }
                }
            };
            data.push(value);
        }
        rows += 1;
    }

    let source = path.display().to_string();
    MultichannelSeries::new(Matrix::from_vec(rows, width, data), names, source)
}

/// Writes `series` in the layout [`load_csv`] reads: a header of channel
/// names, then one row per timestamp.
pub fn write_csv<T: Scalar>(series: &MultichannelSeries<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(&series.channel_names).map_err(csv_err)?;
    for t in 0..series.len() {
        w.write_record(series.values.row(t).iter().map(|v| v.as_f64().to_string()))
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A history block and the horizon that immediately follows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct WindowPair<T> {
    /// `L x C`, rows `t-L..t`.
    pub history: Matrix<T>,
    /// `H x C`, rows `t..t+H`.
    pub future: Matrix<T>,
    /// First row of the future block in the parent series.
    pub t_index: usize,
}

fn check_window_args(total: usize, lookback: usize, horizon: usize, stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(Error::arg("stride must be at least 1"));
    }
    if lookback == 0 || horizon == 0 {
        return Err(Error::arg("lookback and horizon must be positive"));
    }
    if lookback + horizon > total {
        return Err(Error::InsufficientData {
            needed: lookback + horizon,
            available: total,
        });
    }
    Ok(())
}

/// Cuts `(history, future)` pairs at `t = L, L+stride, ...`.
pub fn make_windows<T: Scalar>(
    series: &MultichannelSeries<T>,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<WindowPair<T>>> {
    let total = series.len();
    check_window_args(total, lookback, horizon, stride)?;
    Ok(windows_in_range(&series.values, lookback, horizon, stride, lookback, total - horizon))
}

/// Windows whose forecast start `t` lies in `[t_first, t_last]`; history may
/// reach back before `t_first`.
fn windows_in_range<T: Scalar>(
    values: &Matrix<T>,
    lookback: usize,
    horizon: usize,
    stride: usize,
    t_first: usize,
    t_last: usize,
) -> Vec<WindowPair<T>> {
    (t_first..=t_last)
        .step_by(stride)
        .map(|t| WindowPair {
            history: values.slice_rows(t - lookback..t),
            future: values.slice_rows(t..t + horizon),
            t_index: t,
        })
        .collect()
}

/// Train/validation/test fractions, applied in time order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !r.is_finite() || *r < 0.0) || self.train <= 0.0 || self.test <= 0.0 {
            return Err(Error::Config(format!("invalid split ratios {self:?}")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must sum to 1, got {self:?}")));
        }
        Ok(())
    }

    /// Row boundaries `(train_end, val_end)`.
    pub fn boundaries(&self, total: usize) -> (usize, usize) {
        let train_end = (self.train * total as f64).floor() as usize;
        let val_end = ((self.train + self.val) * total as f64).floor() as usize;
        (train_end, val_end.max(train_end))
    }
}

/// Windows grouped by split. Forecast starts fall inside each segment; a
/// window's history may extend into the preceding segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SplitWindows<T> {
    pub train: Vec<WindowPair<T>>,
    pub val: Vec<WindowPair<T>>,
    pub test: Vec<WindowPair<T>>,
    pub train_end: usize,
    pub val_end: usize,
}

pub fn split_windows<T: Scalar>(
    values: &Matrix<T>,
    lookback: usize,
    horizon: usize,
    stride: usize,
    ratios: SplitRatios,
) -> Result<SplitWindows<T>> {
    ratios.validate()?;
    let total = values.rows();
    check_window_args(total, lookback, horizon, stride)?;
    let (train_end, val_end) = ratios.boundaries(total);

    let segment = |start: usize, end: usize| -> Vec<WindowPair<T>> {
        let first = start.max(lookback);
        if end < horizon || first > end - horizon {
            Vec::new()
        } else {
            windows_in_range(values, lookback, horizon, stride, first, end - horizon)
        }
    };
    let out = SplitWindows {
        train: segment(0, train_end),
        val: segment(train_end, val_end),
        test: segment(val_end, total),
        train_end,
        val_end,
    };
    if out.train.is_empty() {
        return Err(Error::InsufficientData {
            needed: lookback + horizon,
            available: train_end,
        });
    }
    if out.test.is_empty() {
        return Err(Error::InsufficientData {
            needed: horizon,
            available: total - val_end,
        });
    }
    Ok(out)
}

/// Which series a set of normalization statistics was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormTarget {
    #[default]
    CompressedSeries,
}

/// Mean and floored population standard deviation of one vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NormStats<T> {
    pub mean: T,
    pub std: T,
    /// Set when the raw standard deviation fell below the floor.
    pub floored: bool,
    pub applied_to: NormTarget,
}

impl<T: Scalar> NormStats<T> {
    pub fn of(y: &[T]) -> Self {
        assert!(!y.is_empty(), "normalize requires a non-empty vector");
        let n = T::from_usize_lossy(y.len());
        let mean = y.iter().copied().sum::<T>() / n;
        let var = y.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let raw = var.sqrt();
        let floor = T::lit(STD_FLOOR);
        Self {
            mean,
            std: if raw < floor { floor } else { raw },
            floored: raw < floor,
            applied_to: NormTarget::CompressedSeries,
        }
    }

    pub fn apply(&self, y: &[T]) -> Vec<T> {
        y.iter().map(|&v| (v - self.mean) / self.std).collect()
    }

    pub fn invert(&self, z: &[T]) -> Vec<T> {
        z.iter().map(|&v| v * self.std + self.mean).collect()
    }
}

/// Z-scores `y` with its own statistics.
pub fn normalize<T: Scalar>(y: &[T]) -> (Vec<T>, NormStats<T>) {
    let stats = NormStats::of(y);
    (stats.apply(y), stats)
}

pub fn denormalize<T: Scalar>(z: &[T], stats: &NormStats<T>) -> Vec<T> {
    stats.invert(z)
}

/// Per-channel standardization fitted on a row range (the training rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ChannelScaler<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> ChannelScaler<T> {
    pub fn fit(values: &Matrix<T>, rows: std::ops::Range<usize>) -> Self {
        let block = values.slice_rows(rows);
        let (mean, std) = block
            .columns()
            .iter()
            .map(|col| {
                let s = NormStats::of(col);
                (s.mean, s.std)
            })
            .unzip();
        Self { mean, std }
    }

    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            std: vec![T::one(); channels],
        }
    }

    pub fn transform(&self, values: &Matrix<T>) -> Matrix<T> {
        Matrix::from_fn(values.rows(), values.cols(), |r, c| {
            (values[(r, c)] - self.mean[c]) / self.std[c]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn ramp(total: usize, channels: usize) -> MultichannelSeries<f64> {
        MultichannelSeries::from_matrix(Matrix::from_fn(total, channels, |r, c| (r * 10 + c) as f64)).unwrap()
    }

    #[test]
    fn csv_parses_in_row_order() {
        let f = write_csv("a,b\n1,2\n3,4\n");
        let s: MultichannelSeries<f64> = load_csv(f.path(), IngestionPolicy::Reject).unwrap();
        assert_eq!(s.channel_names, vec!["a", "b"]);
        assert_eq!(s.values, Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
    }

    #[test]
    fn csv_arity_mismatch_reports_row() {
        let f = write_csv("a,b\n1,2\n1,2,3\n");
        let err = load_csv::<f64>(f.path(), IngestionPolicy::Reject).unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_nan_rejected_with_channel_and_row() {
        let f = write_csv("a,b\n1,2\n3,NaN\n");
        let err = load_csv::<f64>(f.path(), IngestionPolicy::Reject).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Data(_)));
        assert!(msg.contains("'b'") && msg.contains("row 2"), "{msg}");
    }

    #[test]
    fn csv_forward_fill() {
        let f = write_csv("a,b\n1,2\n3,\n5,NaN\n");
        let s: MultichannelSeries<f64> = load_csv(f.path(), IngestionPolicy::ForwardFill).unwrap();
        assert_eq!(s.channel(1), vec![2.0, 2.0, 2.0]);
        let f = write_csv("a\nnan\n1\n");
        assert!(load_csv::<f64>(f.path(), IngestionPolicy::ForwardFill).is_err());
    }

    #[test]
    fn csv_empty_file_is_an_error() {
        let f = write_csv("");
        assert!(load_csv::<f64>(f.path(), IngestionPolicy::Reject).is_err());
        let f = write_csv("a,b\n1,2\n");
        assert!(matches!(load_csv::<f64>(f.path(), IngestionPolicy::Reject), Err(Error::Data(_))));
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&ramp(10, 2), 4, 2, 1).unwrap().len(), 5);
        assert_eq!(make_windows(&ramp(6, 2), 4, 2, 1).unwrap().len(), 1);
        assert_eq!(make_windows(&ramp(11, 1), 4, 2, 2).unwrap().len(), 3);
        assert!(matches!(
            make_windows(&ramp(5, 2), 4, 2, 1),
            Err(Error::InsufficientData { needed: 6, available: 5 })
        ));
        assert!(make_windows(&ramp(10, 2), 4, 2, 0).is_err());
    }

    #[test]
    fn windows_are_contiguous() {
        let s = ramp(12, 3);
        for w in make_windows(&s, 4, 3, 2).unwrap() {
            assert_eq!(w.history, s.values.slice_rows(w.t_index - 4..w.t_index));
            assert_eq!(w.future, s.values.slice_rows(w.t_index..w.t_index + 3));
        }
    }

    #[test]
    fn split_keeps_time_order() {
        let s = ramp(100, 2);
        let sw = split_windows(&s.values, 10, 5, 1, SplitRatios::default()).unwrap();
        assert_eq!((sw.train_end, sw.val_end), (70, 80));
        assert!(sw.train.iter().all(|w| w.t_index + 5 <= 70));
        assert!(sw.test.iter().all(|w| w.t_index >= 80));
        assert_eq!(sw.test.len(), 16);
    }

    #[test]
    fn normalize_examples() {
        let (z, s) = normalize(&[2.0, 2.0, 2.0]);
        assert_eq!(z, vec![0.0, 0.0, 0.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, STD_FLOOR);
        assert!(s.floored);

        let (z, s) = normalize(&[0.0, 2.0]);
        assert_eq!(z, vec![-1.0, 1.0]);
        assert_eq!((s.mean, s.std, s.floored), (1.0, 1.0, false));

        let y = [1.0f64, -3.0, 5.0];
        let (z, s) = normalize(&y);
        for (a, b) in denormalize(&z, &s).iter().zip(y) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_single_precision() {
        let (z, s) = normalize(&[0.0f32, 2.0]);
        assert_eq!(z, vec![-1.0f32, 1.0]);
        assert_eq!(s.mean, 1.0f32);
    }

    proptest! {
        #[test]
        fn normalize_round_trip(y in prop::collection::vec(-1e3f64..1e3, 1..64)) {
            let (z, s) = normalize(&y);
            for (a, b) in denormalize(&z, &s).iter().zip(&y) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
