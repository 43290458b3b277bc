//! LIBSVM ingestion, binary-label preparation, row normalization and
//! synthetic problem generators.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::objectives::{Dataset, ObjectiveConfig};

/// One line of a LIBSVM file. Feature indices are 1-based as on the wire.
#[derive(Clone, Debug, PartialEq)]
pub struct RawExample {
    pub label: f64,
    pub features: Vec<(usize, f64)>,
}

/// Parses LIBSVM text. Returns the examples and the largest index seen.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<(Vec<RawExample>, usize)> {
    let mut examples = Vec::new();
    let mut dim = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: lineno, msg };
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("nonempty line");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(format!("bad label {label_tok:?}")))?;
        let mut features = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("malformed pair {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("bad index in {tok:?}")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("bad value in {tok:?}")))?;
            if idx == 0 {
                return Err(err("feature indices start at 1".into()));
            }
            if idx <= last {
                return Err(err(format!("index {idx} does not increase (after {last})")));
            }
            if !val.is_finite() {
                return Err(err(format!("non-finite value in {tok:?}")));
            }
            last = idx;
            features.push((idx, val));
        }
        dim = dim.max(last);
        examples.push(RawExample { label, features });
    }
    Ok((examples, dim))
}

/// Reads a LIBSVM file; paths ending in `.gz` are decompressed.
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<(Vec<RawExample>, usize)> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        gz_reader(file)?
    } else {
        Box::new(file)
    };
    parse_libsvm(BufReader::new(reader))
}

#[cfg(feature = "gzip")]
fn gz_reader(file: File) -> Result<Box<dyn Read>> {
    Ok(Box::new(flate2::read::GzDecoder::new(file)))
}

#[cfg(not(feature = "gzip"))]
fn gz_reader(_file: File) -> Result<Box<dyn Read>> {
    Err(Error::InvalidConfig("built without gzip support".into()))
}

pub fn write_libsvm<W: Write>(examples: &[RawExample], mut out: W) -> Result<()> {
    for ex in examples {
        write!(out, "{}", ex.label)?;
        for (i, v) in &ex.features {
            write!(out, " {i}:{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Sparse examples of a dense dataset (zero entries dropped).
pub fn to_raw_examples(ds: &Dataset) -> Vec<RawExample> {
    (0..ds.n_samples())
        .map(|i| RawExample {
            label: ds.label(i),
            features: ds
                .row(i)
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (j + 1, *v))
                .collect(),
        })
        .collect()
}

/// Keeps examples labeled `positive` or `negative`, mapped to +1 and −1,
/// densified to `dim` columns.
pub fn to_binary_dataset(examples: &[RawExample], positive: f64, negative: f64, dim: usize) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for ex in examples {
        let y = if ex.label == positive {
            1.0
        } else if ex.label == negative {
            -1.0
        } else {
            continue;
        };
        let mut row = vec![0.0; dim];
        for &(i, v) in &ex.features {
            if i > dim {
                return Err(Error::DimensionMismatch { expected: dim, found: i });
            }
            row[i - 1] = v;
        }
        features.extend(row);
        labels.push(y);
    }
    if labels.is_empty() {
        return Err(Error::NoMatchingExamples);
    }
    Dataset::new(dim, features, labels)
}

/// Scales every nonzero row to unit Euclidean norm. Returns the number of
/// all-zero rows, which are left untouched.
pub fn normalize_rows(ds: &Dataset) -> (Dataset, usize) {
    let mut out = ds.clone();
    let mut zero_rows = 0;
    for row in out.rows_mut() {
        let n = norm(row);
        if n == 0.0 {
            zero_rows += 1;
        } else {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
    out.set_normalized(true);
    (out, zero_rows)
}

/// Quadratic objective with Hessian `diag(spectrum)`; its minimizer is 0.
pub fn synth_quadratic(spectrum: &[f64]) -> Result<(ObjectiveConfig, Dataset, Vec<f64>)> {
    let cfg = ObjectiveConfig::quadratic(spectrum.to_vec());
    cfg.validate()?;
    Ok((cfg, Dataset::empty(spectrum.len()), vec![0.0; spectrum.len()]))
}

/// `1 + (d − i)/5` for `i = 1..=d`: a slowly decaying positive spectrum.
pub fn linear_spectrum(d: usize) -> Vec<f64> {
    (1..=d).map(|i| 1.0 + (d - i) as f64 / 5.0).collect()
}

/// Synthetic binary classification data with a decaying feature spectrum:
/// column `j` is scaled by `decay^j`, labels are drawn from a logistic model
/// around a random separator.
pub fn synth_logistic(n: usize, d: usize, decay: f64, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut scale = 1.0;
    let scales: Vec<f64> = (0..d)
        .map(|_| {
            let s = scale;
            scale *= decay;
            s
        })
        .collect();
    for _ in 0..n {
        let row: Vec<f64> = scales
            .iter()
            .map(|s| s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let p = crate::objectives::sigmoid(4.0 * dot(&row, &w) / norm(&row).max(1e-300));
        labels.push(if rng.random::<f64>() < p { 1.0 } else { -1.0 });
        features.extend(row);
    }
    Dataset::new(d, features, labels)
}

/// Outcome of [`sample_features`].
#[derive(Clone, Debug)]
pub struct FeatureSample {
    pub dataset: Dataset,
    pub columns: Vec<usize>,
    pub attempts: usize,
    pub zero_rows: usize,
}

pub const FEATURE_SAMPLE_ATTEMPTS: usize = 20;

/// Uniformly picks `k` columns; redraws while more than half of the rows
/// become all-zero, at most 20 draws. The draw with the fewest zero rows
/// is returned if none qualifies.
pub fn sample_features(ds: &Dataset, k: usize, seed: u64) -> Result<FeatureSample> {
    if k == 0 || k > ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            found: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<FeatureSample> = None;
    for attempt in 1..=FEATURE_SAMPLE_ATTEMPTS {
        let mut columns = rand::seq::index::sample(&mut rng, ds.dim(), k).into_vec();
        columns.sort_unstable();
        let sub = ds.select_columns(&columns)?;
        let zero_rows = (0..sub.n_samples())
            .filter(|&i| sub.row(i).iter().all(|v| *v == 0.0))
            .count();
        let candidate = FeatureSample {
            dataset: sub,
            columns,
            attempts: attempt,
            zero_rows,
        };
        if 2 * zero_rows <= ds.n_samples() {
            return Ok(candidate);
        }
        if best.as_ref().is_none_or(|b| zero_rows < b.zero_rows) {
            best = Some(candidate);
        }
    }
    let mut b = best.expect("at least one attempt");
    b.attempts = FEATURE_SAMPLE_ATTEMPTS;
    Ok(b)
}
