//! Model persistence: a line-oriented text format that round-trips
//! parameters bit-exactly.
//!
//! Layout, one record per line, fields space-separated:
//!
//! ```text
//! linnet-model 1
//! activation tanh
//! inputs 2
//! hidden 3
//! train_seed 7
//! config_hash 00000000075bcd15
//! input_lo <n values>
//! input_hi <n values>
//! target_range <lo> <hi>
//! weights <n values>            one line per hidden unit
//! ...
//! bias <H values>
//! output_weights <H values>
//! output_bias <value>
//! ```
//!
//! Numerals carry 17 significant digits, which parse back to the identical
//! bit pattern, so save → load → save reproduces the file byte for byte.
//! The leading version number gates loading: unknown versions are rejected
//! rather than guessed at.

use crate::dataset::{atomic_write, fmt_exact, NormalizationSpec};
use crate::error::{Error, Result};
use crate::mlp::{ActivationKind, MlpParams};
use nalgebra::{DMatrix, DVector};
use std::fmt::Write as _;
use std::path::Path;

const SCHEMA_NAME: &str = "linnet-model";
const SCHEMA_VERSION: u64 = 1;

/// Everything a saved model carries: the parameters, the normalization
/// needed to apply them to raw data, and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub params: MlpParams,
    pub norm: NormalizationSpec,
    /// Seed the training run was initialized from.
    pub train_seed: u64,
    /// Hash of the full training configuration, for provenance checks.
    pub config_hash: u64,
}

impl ModelFile {
    /// Validating constructor: the normalization must cover the same input
    /// dimension as the parameters.
    pub fn new(
        params: MlpParams,
        norm: NormalizationSpec,
        train_seed: u64,
        config_hash: u64,
    ) -> Result<Self> {
        if norm.input_dim() != params.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "normalization covers {} dimensions, parameters expect {}",
                norm.input_dim(),
                params.input_dim()
            )));
        }
        params.check_finite()?;
        Ok(ModelFile {
            params,
            norm,
            train_seed,
            config_hash,
        })
    }
}

fn push_values(out: &mut String, key: &str, values: impl Iterator<Item = f64>) {
    out.push_str(key);
    for v in values {
        let _ = write!(out, " {}", fmt_exact(v));
    }
    out.push('\n');
}

/// Render a model in the documented text format.
pub fn to_model_string(model: &ModelFile) -> String {
    let p = &model.params;
    let (h, n) = (p.hidden_units(), p.input_dim());
    let mut out = String::new();
    let _ = writeln!(out, "{SCHEMA_NAME} {SCHEMA_VERSION}");
    let _ = writeln!(out, "activation {}", p.activation.tag());
    let _ = writeln!(out, "inputs {n}");
    let _ = writeln!(out, "hidden {h}");
    let _ = writeln!(out, "train_seed {}", model.train_seed);
    let _ = writeln!(out, "config_hash {:016x}", model.config_hash);
    push_values(&mut out, "input_lo", model.norm.input_lo.iter().copied());
    push_values(&mut out, "input_hi", model.norm.input_hi.iter().copied());
    push_values(
        &mut out,
        "target_range",
        [model.norm.target_lo, model.norm.target_hi].into_iter(),
    );
    for i in 0..h {
        push_values(&mut out, "weights", p.weights.row(i).iter().copied());
    }
    push_values(&mut out, "bias", p.bias.iter().copied());
    push_values(&mut out, "output_weights", p.output_weights.iter().copied());
    push_values(&mut out, "output_bias", [p.output_bias].into_iter());
    out
}

/// Sequential reader over the file's lines that reports 1-based positions.
struct Records<'a> {
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Records<'a> {
    fn new(text: &'a str) -> Self {
        Records {
            lines: text.lines(),
            line_no: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line_no,
            msg: msg.into(),
        }
    }

    /// The next line split into its key and remainder, which must carry the
    /// expected key.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>> {
        self.line_no += 1;
        let line = self.lines.next().ok_or(Error::Parse {
            line: self.line_no,
            msg: format!("unexpected end of file, expected '{key}'"),
        })?;
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some(k) if k == key => Ok(fields.collect()),
            Some(k) => Err(self.err(format!("expected '{key}', found '{k}'"))),
            None => Err(self.err(format!("expected '{key}', found an empty line"))),
        }
    }

    fn values(&mut self, key: &str, count: usize) -> Result<Vec<f64>> {
        let fields = self.expect(key)?;
        if fields.len() != count {
            return Err(self.err(format!(
                "'{key}' carries {} values, expected {count}",
                fields.len()
            )));
        }
        fields
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| self.err(format!("'{s}' is not a number")))
            })
            .collect()
    }

    fn single<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Result<T> {
        let fields = self.expect(key)?;
        if fields.len() != 1 {
            return Err(self.err(format!(
                "'{key}' carries {} values, expected 1",
                fields.len()
            )));
        }
        fields[0]
            .parse::<T>()
            .map_err(|_| self.err(format!("'{}' is not a valid {what}", fields[0])))
    }

    fn finish(&mut self) -> Result<()> {
        if self.lines.next().is_some() {
            self.line_no += 1;
            return Err(self.err("trailing content after the model record"));
        }
        Ok(())
    }
}

/// Parse the documented text format back into a model.
pub fn from_model_str(text: &str) -> Result<ModelFile> {
    let mut r = Records::new(text);
    let version: u64 = {
        let fields = r.expect(SCHEMA_NAME)?;
        if fields.len() != 1 {
            return Err(r.err("the header must carry exactly the schema version"));
        }
        fields[0]
            .parse()
            .map_err(|_| r.err(format!("'{}' is not a valid schema version", fields[0])))?
    };
    if version != SCHEMA_VERSION {
        return Err(r.err(format!(
            "unsupported schema version {version}, this build reads version {SCHEMA_VERSION}"
        )));
    }
    let activation = {
        let fields = r.expect("activation")?;
        if fields.len() != 1 {
            return Err(r.err("'activation' carries one tag"));
        }
        ActivationKind::from_tag(fields[0])
            .map_err(|_| r.err(format!("unknown activation '{}'", fields[0])))?
    };
    let n: usize = r.single("inputs", "count")?;
    let h: usize = r.single("hidden", "count")?;
    if n == 0 || h == 0 {
        return Err(r.err("inputs and hidden must both be >= 1"));
    }
    let train_seed: u64 = r.single("train_seed", "seed")?;
    let config_hash = {
        let fields = r.expect("config_hash")?;
        if fields.len() != 1 || fields[0].len() != 16 {
            return Err(r.err("'config_hash' carries one 16-digit hex value"));
        }
        u64::from_str_radix(fields[0], 16)
            .map_err(|_| r.err(format!("'{}' is not a hex value", fields[0])))?
    };
    let input_lo = DVector::from_vec(r.values("input_lo", n)?);
    let input_hi = DVector::from_vec(r.values("input_hi", n)?);
    let target = r.values("target_range", 2)?;
    let norm = NormalizationSpec::new(input_lo, input_hi, target[0], target[1])?;

    let mut weights = DMatrix::zeros(h, n);
    for i in 0..h {
        let row = r.values("weights", n)?;
        for (j, v) in row.into_iter().enumerate() {
            weights[(i, j)] = v;
        }
    }
    let bias = DVector::from_vec(r.values("bias", h)?);
    let output_weights = DVector::from_vec(r.values("output_weights", h)?);
    let output_bias = r.values("output_bias", 1)?[0];
    r.finish()?;

    let mut params = MlpParams::new(weights, bias, output_weights, output_bias)?;
    params.activation = activation;
    ModelFile::new(params, norm, train_seed, config_hash)
}

pub fn save_model(model: &ModelFile, path: &Path) -> Result<()> {
    atomic_write(path, &to_model_string(model))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_model_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_model() -> ModelFile {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = MlpParams::new(
            DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-2.0..2.0)),
            DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)),
            DVector::from_fn(3, |_, _| rng.gen_range(-5.0..5.0)),
            0.125,
        )
        .unwrap();
        let norm = NormalizationSpec::new(
            DVector::from_row_slice(&[-500.0, -1.0]),
            DVector::from_row_slice(&[500.0, 1.0]),
            -837.9658,
            2511.3,
        )
        .unwrap();
        ModelFile::new(params, norm, 42, 0xdead_beef_0123_4567).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let model = sample_model();
        let text = to_model_string(&model);
        let loaded = from_model_str(&text).unwrap();
        assert_eq!(to_model_string(&loaded), text);
        assert_eq!(loaded.params.weights, model.params.weights);
        assert_eq!(loaded.params.bias, model.params.bias);
        assert_eq!(loaded.params.output_weights, model.params.output_weights);
        assert_eq!(
            loaded.params.output_bias.to_bits(),
            model.params.output_bias.to_bits()
        );
        assert_eq!(loaded.norm, model.norm);
        assert_eq!(loaded.train_seed, 42);
        assert_eq!(loaded.config_hash, 0xdead_beef_0123_4567);
    }

    #[test]
    fn awkward_values_survive_the_round_trip() {
        let mut model = sample_model();
        model.params.weights[(0, 0)] = 1.0e-300;
        model.params.weights[(1, 1)] = -3.937_194_061_969_437e284;
        model.params.bias[2] = f64::MIN_POSITIVE; // smallest normal
        model.params.output_weights[0] = -0.0;
        model.params.output_bias = 2.0_f64.powi(-1040); // subnormal
        let text = to_model_string(&model);
        let loaded = from_model_str(&text).unwrap();
        assert_eq!(
            loaded.params.weights[(0, 0)].to_bits(),
            model.params.weights[(0, 0)].to_bits()
        );
        assert_eq!(
            loaded.params.weights[(1, 1)].to_bits(),
            model.params.weights[(1, 1)].to_bits()
        );
        assert_eq!(loaded.params.bias[2].to_bits(), model.params.bias[2].to_bits());
        assert_eq!(
            loaded.params.output_weights[0].to_bits(),
            model.params.output_weights[0].to_bits()
        );
        assert_eq!(
            loaded.params.output_bias.to_bits(),
            model.params.output_bias.to_bits()
        );
        assert_eq!(to_model_string(&loaded), text);
    }

    #[test]
    fn file_round_trip_via_disk() {
        let model = sample_model();
        let dir = std::env::temp_dir().join("linnet-model-file-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.mdl");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(to_model_string(&loaded), to_model_string(&model));
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn unsupported_version_is_rejected_at_line_one() {
        let model = sample_model();
        let text = to_model_string(&model).replacen("linnet-model 1", "linnet-model 2", 1);
        match from_model_str(&text) {
            Err(Error::Parse { line: 1, msg }) => assert!(msg.contains("version")),
            other => panic!("expected a version error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_reports_the_missing_record() {
        let model = sample_model();
        let text = to_model_string(&model);
        let cut: String = text.lines().take(8).map(|l| format!("{l}\n")).collect();
        match from_model_str(&cut) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 9);
                assert!(msg.contains("end of file"), "{msg}");
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_value_count_and_bad_numbers_are_rejected() {
        let model = sample_model();
        let text = to_model_string(&model);
        let lo_line = text
            .lines()
            .find(|l| l.starts_with("input_lo"))
            .unwrap()
            .to_string();
        let short = text.replacen(&lo_line, "input_lo 0e0", 1);
        match from_model_str(&short) {
            Err(Error::Parse { line: 7, msg }) => assert!(msg.contains("expected 2"), "{msg}"),
            other => panic!("expected a value-count error, got {other:?}"),
        }
        let junk = text.replacen("output_bias 1", "output_bias x", 1);
        assert!(matches!(from_model_str(&junk), Err(Error::Parse { .. })));
        let trailing = format!("{text}stray\n");
        match from_model_str(&trailing) {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("trailing")),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_entries_cannot_be_loaded() {
        let model = sample_model();
        let text = to_model_string(&model);
        let line = text
            .lines()
            .find(|l| l.starts_with("bias"))
            .unwrap()
            .to_string();
        let broken = text.replacen(&line, "bias inf 0e0 0e0", 1);
        assert!(from_model_str(&broken).is_err());
    }

    #[test]
    fn mismatched_normalization_is_rejected() {
        let model = sample_model();
        let norm = NormalizationSpec::new(
            DVector::from_row_slice(&[-1.0]),
            DVector::from_row_slice(&[1.0]),
            -1.0,
            1.0,
        )
        .unwrap();
        assert!(matches!(
            ModelFile::new(model.params, norm, 0, 0),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
