//! Datasets: benchmark generator, range normalization, CSV persistence.
//!
//! Training operates on inputs and targets affinely mapped to [-1, 1]
//! per dimension (the hidden activation is symmetric about the origin, so
//! the map is centered). [`NormalizationSpec`] holds the ranges; it is
//! persisted in the model file so predictions can be mapped back to problem
//! units.
//!
//! CSV files use the header `x1,...,xn,u`, LF line endings, and
//! 17-significant-digit scientific numerals so that parse(serialize(v))
//! recovers every `f64` bit for bit.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::Path;

/// Offset per input dimension in the benchmark objective below.
pub const SCHWEFEL_OFFSET_PER_DIM: f64 = 418.9829;

/// Schwefel benchmark objective:
/// `f(x) = 418.9829·dim − Σ xᵢ·sin(√|xᵢ|)`, near-zero at
/// xᵢ ≈ 420.9687 and highly multimodal over [-500, 500]^dim.
pub fn schwefel(x: &[f64]) -> f64 {
    let sum: f64 = x.iter().map(|&v| v * v.abs().sqrt().sin()).sum();
    SCHWEFEL_OFFSET_PER_DIM * x.len() as f64 - sum
}

/// Per-dimension affine maps between problem units and [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationSpec {
    /// Lower input bounds, one per dimension.
    pub input_lo: DVector<f64>,
    /// Upper input bounds, one per dimension.
    pub input_hi: DVector<f64>,
    pub target_lo: f64,
    pub target_hi: f64,
}

impl NormalizationSpec {
    /// Validating constructor: bounds must be finite with `lo < hi`
    /// componentwise.
    pub fn new(
        input_lo: DVector<f64>,
        input_hi: DVector<f64>,
        target_lo: f64,
        target_hi: f64,
    ) -> Result<Self> {
        if input_lo.len() != input_hi.len() {
            return Err(Error::DimensionMismatch(format!(
                "normalization bounds disagree: {} vs {} dimensions",
                input_lo.len(),
                input_hi.len()
            )));
        }
        for k in 0..input_lo.len() {
            if !input_lo[k].is_finite() || !input_hi[k].is_finite() {
                return Err(Error::NonFinite(format!("input bound, dimension {}", k + 1)));
            }
            if input_lo[k] >= input_hi[k] {
                return Err(Error::DegenerateData(format!(
                    "input dimension {} has zero or inverted range [{}, {}]",
                    k + 1,
                    input_lo[k],
                    input_hi[k]
                )));
            }
        }
        if !target_lo.is_finite() || !target_hi.is_finite() {
            return Err(Error::NonFinite("target bound".into()));
        }
        if target_lo >= target_hi {
            return Err(Error::DegenerateData(format!(
                "target has zero or inverted range [{target_lo}, {target_hi}]"
            )));
        }
        Ok(NormalizationSpec {
            input_lo,
            input_hi,
            target_lo,
            target_hi,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_lo.len()
    }

    #[inline]
    fn map_to_unit(v: f64, lo: f64, hi: f64) -> f64 {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        (v - mid) / half
    }

    #[inline]
    fn map_from_unit(v: f64, lo: f64, hi: f64) -> f64 {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        mid + half * v
    }

    /// Map raw inputs (N×n, problem units) into [-1, 1] per dimension.
    pub fn normalize_inputs(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if raw.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "data has {} input columns, normalization expects {}",
                raw.ncols(),
                self.input_dim()
            )));
        }
        let mut out = raw.clone();
        for (k, mut col) in out.column_iter_mut().enumerate() {
            let (lo, hi) = (self.input_lo[k], self.input_hi[k]);
            for v in col.iter_mut() {
                *v = Self::map_to_unit(*v, lo, hi);
            }
        }
        Ok(out)
    }

    pub fn denormalize_inputs(&self, unit: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if unit.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "data has {} input columns, normalization expects {}",
                unit.ncols(),
                self.input_dim()
            )));
        }
        let mut out = unit.clone();
        for (k, mut col) in out.column_iter_mut().enumerate() {
            let (lo, hi) = (self.input_lo[k], self.input_hi[k]);
            for v in col.iter_mut() {
                *v = Self::map_from_unit(*v, lo, hi);
            }
        }
        Ok(out)
    }

    pub fn normalize_targets(&self, raw: &DVector<f64>) -> DVector<f64> {
        raw.map(|v| Self::map_to_unit(v, self.target_lo, self.target_hi))
    }

    pub fn denormalize_targets(&self, unit: &DVector<f64>) -> DVector<f64> {
        unit.map(|v| Self::map_from_unit(v, self.target_lo, self.target_hi))
    }

    /// Half-width of the target range; squares to the factor between
    /// normalized and raw mean-squared error.
    pub fn target_half_range(&self) -> f64 {
        0.5 * (self.target_hi - self.target_lo)
    }
}

/// A regression dataset in problem units.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Inputs, one example per row (N×n).
    pub inputs: DMatrix<f64>,
    /// Targets, length N.
    pub targets: DVector<f64>,
    /// Ranges declared by the generator, if any. `None` means "derive from
    /// the data" at normalization time (the case for CSV loads).
    pub norm: Option<NormalizationSpec>,
}

impl Dataset {
    /// Validating constructor: shape agreement, at least one example, finite
    /// entries.
    pub fn new(
        inputs: DMatrix<f64>,
        targets: DVector<f64>,
        norm: Option<NormalizationSpec>,
    ) -> Result<Self> {
        if inputs.nrows() != targets.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} input rows vs {} targets",
                inputs.nrows(),
                targets.len()
            )));
        }
        if inputs.nrows() == 0 || inputs.ncols() == 0 {
            return Err(Error::DegenerateData("no data rows".into()));
        }
        if let Some(n) = &norm {
            if n.input_dim() != inputs.ncols() {
                return Err(Error::DimensionMismatch(format!(
                    "normalization covers {} dimensions, data has {}",
                    n.input_dim(),
                    inputs.ncols()
                )));
            }
        }
        if !inputs.iter().all(|v| v.is_finite()) || !targets.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset entries".into()));
        }
        Ok(Dataset {
            inputs,
            targets,
            norm,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }
}

/// Sample the benchmark objective on uniform i.i.d. inputs.
///
/// Draw order is fixed — dimensions within a point, points in sequence from
/// a ChaCha stream seeded with `seed` — so a given `(points, dim, lo, hi,
/// seed)` always yields the identical dataset, independent of platform.
/// The returned dataset declares the input range `[lo, hi]` and the
/// observed target range for later normalization.
pub fn sample_schwefel(points: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Result<Dataset> {
    if points == 0 {
        return Err(Error::InvalidConfig("points must be >= 1".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidConfig("dim must be >= 1".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidConfig(format!(
            "need finite lo < hi, got [{lo}, {hi}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = DMatrix::zeros(points, dim);
    let mut targets = DVector::zeros(points);
    let mut row = vec![0.0; dim];
    for i in 0..points {
        for (k, v) in row.iter_mut().enumerate() {
            *v = rng.gen_range(lo..=hi);
            inputs[(i, k)] = *v;
        }
        targets[i] = schwefel(&row);
    }
    let (t_lo, t_hi) = (targets.min(), targets.max());
    // Declared input range; observed target range. With a single point the
    // target range is degenerate — leave norm out and let `normalize` fail
    // with a clear error if such a dataset is ever trained on.
    let norm = NormalizationSpec::new(
        DVector::from_element(dim, lo),
        DVector::from_element(dim, hi),
        t_lo,
        t_hi,
    )
    .ok();
    Dataset::new(inputs, targets, norm)
}

/// Produce the normalized training pair `(inputs, targets)` plus the
/// normalization record that maps back to problem units.
///
/// Uses the dataset's declared ranges when present, otherwise the observed
/// per-column min/max. Zero range in any column is an error naming the
/// column.
pub fn normalize(ds: &Dataset) -> Result<(DMatrix<f64>, DVector<f64>, NormalizationSpec)> {
    let spec = match &ds.norm {
        Some(spec) => spec.clone(),
        None => {
            let n = ds.input_dim();
            let mut lo = DVector::zeros(n);
            let mut hi = DVector::zeros(n);
            for k in 0..n {
                let col = ds.inputs.column(k);
                lo[k] = col.min();
                hi[k] = col.max();
                if lo[k] >= hi[k] {
                    return Err(Error::DegenerateData(format!(
                        "input dimension {} has zero range (all values = {})",
                        k + 1,
                        lo[k]
                    )));
                }
            }
            let (t_lo, t_hi) = (ds.targets.min(), ds.targets.max());
            if t_lo >= t_hi {
                return Err(Error::DegenerateData(format!(
                    "target has zero range (all values = {t_lo})"
                )));
            }
            NormalizationSpec::new(lo, hi, t_lo, t_hi)?
        }
    };
    let xn = spec.normalize_inputs(&ds.inputs)?;
    let un = spec.normalize_targets(&ds.targets);
    Ok((xn, un, spec))
}

/// Format an `f64` with 17 significant digits — enough that parsing the
/// text recovers the exact value.
pub fn fmt_exact(v: f64) -> String {
    format!("{v:.16e}")
}

/// Dataset as CSV text: header `x1,...,xn,u`, then one row per example.
pub fn to_csv_string(ds: &Dataset) -> String {
    let n = ds.input_dim();
    let mut out = String::new();
    for k in 0..n {
        let _ = write!(out, "x{},", k + 1);
    }
    out.push_str("u\n");
    for i in 0..ds.len() {
        for k in 0..n {
            let _ = write!(out, "{},", fmt_exact(ds.inputs[(i, k)]));
        }
        let _ = writeln!(out, "{}", fmt_exact(ds.targets[i]));
    }
    out
}

/// Write a file atomically: the content goes to a sibling temporary file
/// which is renamed over the target, so readers never observe a partial
/// write.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new(".")))
        .map_err(|e| Error::io(path, e))?;
    std::io::Write::write_all(&mut tmp, contents.as_bytes()).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    atomic_write(path, &to_csv_string(ds))
}

/// Parse a numeric table: header line, then rows of comma-separated floats.
/// Errors carry the 1-based line number.
fn parse_table(text: &str, path_label: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().enumerate();
    let header: Vec<String> = match lines.next() {
        Some((_, h)) if !h.trim().is_empty() => {
            h.trim_end().split(',').map(|s| s.trim().to_string()).collect()
        }
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("{path_label}: missing header"),
            })
        }
    };
    if header.len() < 2 && header.last().map(String::as_str) == Some("u") {
        return Err(Error::Parse {
            line: 1,
            msg: format!("{path_label}: header must list at least one input column"),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!(
                    "{path_label}: expected {} comma-separated values, found {}",
                    header.len(),
                    fields.len()
                ),
            });
        }
        let mut row = Vec::with_capacity(fields.len());
        for (col, f) in fields.iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!(
                    "{path_label}: column {} ('{}') is not a number",
                    col + 1,
                    f.trim()
                ),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("{path_label}: column {} is not finite", col + 1),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: format!("{path_label}: no data rows"),
        });
    }
    Ok((header, rows))
}

/// Load a dataset CSV (`x1,...,xn,u`). The final column must be named `u`.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let label = path.display().to_string();
    let (header, rows) = parse_table(&text, &label)?;
    if header.last().map(String::as_str) != Some("u") {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "{label}: final column must be named 'u', found '{}'",
                header.last().cloned().unwrap_or_default()
            ),
        });
    }
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("{label}: need at least one input column before 'u'"),
        });
    }
    let n = header.len() - 1;
    let points = rows.len();
    let mut inputs = DMatrix::zeros(points, n);
    let mut targets = DVector::zeros(points);
    for (i, row) in rows.iter().enumerate() {
        for k in 0..n {
            inputs[(i, k)] = row[k];
        }
        targets[i] = row[n];
    }
    Dataset::new(inputs, targets, None)
}

/// Load an inputs-only CSV (any header names): N×n matrix for prediction.
pub fn load_inputs_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let label = path.display().to_string();
    let (header, rows) = parse_table(&text, &label)?;
    let n = header.len();
    let mut inputs = DMatrix::zeros(rows.len(), n);
    for (i, row) in rows.iter().enumerate() {
        for k in 0..n {
            inputs[(i, k)] = row[k];
        }
    }
    Ok(inputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force re-evaluation of the benchmark, kept deliberately
    /// separate from `schwefel` (explicit loop, no iterator chain).
    fn schwefel_by_hand(x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &v in x {
            acc += v * f64::sin(f64::sqrt(f64::abs(v)));
        }
        418.9829 * (x.len() as f64) - acc
    }

    #[test]
    fn schwefel_at_origin_is_offset_times_dim() {
        let f = schwefel(&[0.0, 0.0, 0.0]);
        assert!((f - 1256.9487).abs() < 1e-10);
        assert!((f - schwefel_by_hand(&[0.0, 0.0, 0.0])).abs() < 1e-12);
    }

    #[test]
    fn schwefel_near_minimizer_is_near_zero() {
        let x = [420.9687, 420.9687, 420.9687];
        assert!(schwefel(&x).abs() < 1e-3);
        assert!((schwefel(&x) - schwefel_by_hand(&x)).abs() < 1e-12);
    }

    #[test]
    fn schwefel_is_permutation_symmetric() {
        let a = schwefel(&[3.0, -250.0, 499.0]);
        let b = schwefel(&[-250.0, 499.0, 3.0]);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn sampling_is_deterministic_and_in_range() {
        let a = sample_schwefel(200, 3, -500.0, 500.0, 42).unwrap();
        let b = sample_schwefel(200, 3, -500.0, 500.0, 42).unwrap();
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.targets, b.targets);
        assert!(a.inputs.iter().all(|&v| (-500.0..=500.0).contains(&v)));
        for i in 0..a.len() {
            let row: Vec<f64> = a.inputs.row(i).iter().cloned().collect();
            assert_eq!(a.targets[i], schwefel(&row));
        }
        let c = sample_schwefel(200, 3, -500.0, 500.0, 43).unwrap();
        assert_ne!(a.inputs, c.inputs);
    }

    #[test]
    fn sampling_rejects_bad_arguments() {
        assert!(matches!(
            sample_schwefel(0, 3, -1.0, 1.0, 0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            sample_schwefel(5, 0, -1.0, 1.0, 0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            sample_schwefel(5, 2, 1.0, 1.0, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn normalize_maps_declared_range_to_unit_interval() {
        let ds = sample_schwefel(50, 2, -500.0, 500.0, 7).unwrap();
        let (xn, un, spec) = normalize(&ds).unwrap();
        assert!(xn.iter().all(|&v| (-1.0..=1.0).contains(&v)));
        assert!(un.iter().all(|&v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(&v)));
        // Declared input range survives into the normalization record.
        assert_eq!(spec.input_lo[0], -500.0);
        assert_eq!(spec.input_hi[1], 500.0);
        // Observed target range maps exactly onto the interval ends.
        assert!((un.min() + 1.0).abs() < 1e-12);
        assert!((un.max() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_round_trips() {
        let ds = sample_schwefel(64, 3, -500.0, 500.0, 3).unwrap();
        let (xn, un, spec) = normalize(&ds).unwrap();
        let back_x = spec.denormalize_inputs(&xn).unwrap();
        let back_u = spec.denormalize_targets(&un);
        for (orig, back) in ds.inputs.iter().zip(back_x.iter()) {
            assert!((orig - back).abs() <= 1e-12 * orig.abs().max(1.0));
        }
        for (orig, back) in ds.targets.iter().zip(back_u.iter()) {
            assert!((orig - back).abs() <= 1e-12 * orig.abs().max(1.0));
        }
    }

    #[test]
    fn normalize_rejects_constant_column() {
        let inputs = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 1.0, 6.0, 1.0, 7.0]);
        let targets = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let ds = Dataset::new(inputs, targets, None).unwrap();
        let err = normalize(&ds).unwrap_err();
        match err {
            Error::DegenerateData(msg) => assert!(msg.contains("dimension 1"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let ds = sample_schwefel(37, 3, -500.0, 500.0, 11).unwrap();
        let dir = std::env::temp_dir().join("linnet-dataset-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("round_trip.csv");
        save_csv(&ds, &path).unwrap();
        let loaded = load_csv(&path).unwrap();
        assert_eq!(ds.inputs, loaded.inputs);
        assert_eq!(ds.targets, loaded.targets);
        // Serialization is deterministic too: same text both times.
        let text1 = to_csv_string(&ds);
        let text2 = to_csv_string(&loaded);
        assert_eq!(text1, text2);
        assert!(text1.starts_with("x1,x2,x3,u\n"));
        assert!(!text1.contains('\r'));
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn csv_header_only_is_no_data_rows() {
        let dir = std::env::temp_dir().join("linnet-dataset-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("header_only.csv");
        std::fs::write(&path, "x1,u\n").unwrap();
        let err = load_csv(&path).unwrap_err();
        assert!(err.to_string().contains("no data rows"), "{err}");
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn csv_bad_row_names_its_line() {
        let dir = std::env::temp_dir().join("linnet-dataset-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad_row.csv");
        std::fs::write(&path, "x1,u\n1.0,2.0\nbogus,3.0\n").unwrap();
        let err = load_csv(&path).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("bogus"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
        std::fs::write(&path, "x1,u\n1.0\n").unwrap();
        let err = load_csv(&path).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("expected 2"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn csv_requires_target_column_name() {
        let dir = std::env::temp_dir().join("linnet-dataset-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("wrong_header.csv");
        std::fs::write(&path, "x1,x2\n1.0,2.0\n").unwrap();
        let err = load_csv(&path).unwrap_err();
        assert!(err.to_string().contains("'u'"), "{err}");
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn exact_format_round_trips_awkward_values() {
        for v in [
            0.1,
            -1.0 / 3.0,
            f64::MIN_POSITIVE,
            1.7976931348623157e308,
            -0.0,
            418.9829 * 3.0,
            std::f64::consts::PI,
        ] {
            let s = fmt_exact(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{v} -> {s} -> {back}");
        }
    }
}
