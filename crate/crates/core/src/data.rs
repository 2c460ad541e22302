//! Dataset ingestion and preparation: IDX image/label files, synthetic 2D
//! blobs, normalization, and seeded train/validation/test splits.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8] = b"RBD1\n";
const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// How features were normalized, with the statistics needed to reapply the
/// same transform to new data.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalization {
    None,
    /// One (mean, std) pair applied to every feature.
    Global { mean: f64, std: f64 },
    /// Per-feature means and stds.
    PerFeature { means: Vec<f64>, stds: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationMode {
    Global,
    PerFeature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub source: String,
    pub normalization: Normalization,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub meta: DatasetMeta,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, meta: DatasetMeta) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Domain("dataset must be non-empty".into()));
        }
        if features.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let m = features[0].len();
        if features.iter().any(|r| r.len() != m) {
            return Err(Error::Shape("ragged feature rows".into()));
        }
        Ok(LabeledDataset {
            features,
            labels,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn class_count(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) + 1
    }
}

/// Train/validation/test ratios (must sum to 1) plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        if train <= 0.0 || val <= 0.0 || test <= 0.0 {
            return Err(Error::Domain("split ratios must be positive".into()));
        }
        if ((train + val + test) - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "split ratios sum to {}, expected 1",
                train + val + test
            )));
        }
        Ok(SplitSpec {
            train,
            val,
            test,
            seed,
        })
    }
}

fn read_be_u32<R: Read>(r: &mut R, offset: &mut u64, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| Error::Parse {
        offset: *offset,
        msg: format!("truncated while reading {what}"),
    })?;
    *offset += 4;
    Ok(u32::from_be_bytes(buf))
}

/// Parses an IDX image/label file pair. Pixels are scaled to `[0, 1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let mut r = BufReader::new(std::fs::File::open(images_path)?);
    let mut off = 0u64;
    let magic = read_be_u32(&mut r, &mut off, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("bad image magic {magic:#010x}, expected 0x00000803"),
        });
    }
    let n = read_be_u32(&mut r, &mut off, "image count")? as usize;
    let rows = read_be_u32(&mut r, &mut off, "row count")? as usize;
    let cols = read_be_u32(&mut r, &mut off, "column count")? as usize;
    let m = rows * cols;
    let mut pixels = vec![0u8; n * m];
    r.read_exact(&mut pixels).map_err(|_| Error::Parse {
        offset: off,
        msg: "truncated image payload".into(),
    })?;

    let mut lr = BufReader::new(std::fs::File::open(labels_path)?);
    let mut loff = 0u64;
    let lmagic = read_be_u32(&mut lr, &mut loff, "label magic")?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("bad label magic {lmagic:#010x}, expected 0x00000801"),
        });
    }
    let ln = read_be_u32(&mut lr, &mut loff, "label count")? as usize;
    if ln != n {
        return Err(Error::Parse {
            offset: loff,
            msg: format!("label count {ln} does not match image count {n}"),
        });
    }
    let mut label_bytes = vec![0u8; ln];
    lr.read_exact(&mut label_bytes).map_err(|_| Error::Parse {
        offset: loff,
        msg: "truncated label payload".into(),
    })?;

    let features: Vec<Vec<f64>> = pixels
        .chunks(m)
        .map(|img| img.iter().map(|&p| p as f64 / 255.0).collect())
        .collect();
    let labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    LabeledDataset::new(
        features,
        labels,
        DatasetMeta {
            source: images_path.display().to_string(),
            normalization: Normalization::None,
            seed: 0,
        },
    )
}

/// Writes an IDX image/label pair. Features are expected in `[0, 1]` and
/// quantized back to bytes; `rows * cols` must equal the feature dimension.
pub fn write_idx(
    ds: &LabeledDataset,
    rows: usize,
    cols: usize,
    images_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    if rows * cols != ds.dim() {
        return Err(Error::Shape(format!(
            "{rows}x{cols} does not match feature dim {}",
            ds.dim()
        )));
    }
    let mut w = BufWriter::new(std::fs::File::create(images_path)?);
    w.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    w.write_all(&(ds.len() as u32).to_be_bytes())?;
    w.write_all(&(rows as u32).to_be_bytes())?;
    w.write_all(&(cols as u32).to_be_bytes())?;
    for row in &ds.features {
        for &v in row {
            let byte = (v * 255.0).round().clamp(0.0, 255.0) as u8;
            w.write_all(&[byte])?;
        }
    }
    w.flush()?;
    let mut lw = BufWriter::new(std::fs::File::create(labels_path)?);
    lw.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    lw.write_all(&(ds.len() as u32).to_be_bytes())?;
    for &l in &ds.labels {
        lw.write_all(&[l as u8])?;
    }
    lw.flush()?;
    Ok(())
}

/// Seeded Gaussian blobs in 2D, one center per class.
pub fn synth_blobs(
    n_per_class: usize,
    centers: &[(f64, f64)],
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n_per_class == 0 || centers.is_empty() {
        return Err(Error::Domain("need at least one point and one center".into()));
    }
    if spread < 0.0 {
        return Err(Error::Domain("spread must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, spread.max(f64::MIN_POSITIVE)).unwrap();
    let mut features = Vec::with_capacity(n_per_class * centers.len());
    let mut labels = Vec::with_capacity(n_per_class * centers.len());
    for _ in 0..n_per_class {
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            let (dx, dy) = if spread == 0.0 {
                (0.0, 0.0)
            } else {
                (normal.sample(&mut rng), normal.sample(&mut rng))
            };
            features.push(vec![cx + dx, cy + dy]);
            labels.push(c);
        }
    }
    LabeledDataset::new(
        features,
        labels,
        DatasetMeta {
            source: "synth_blobs".into(),
            normalization: Normalization::None,
            seed,
        },
    )
}

const STD_FLOOR: f64 = 1e-8;

/// Subtracts the mean and divides by the std (floored at 1e-8), recording the
/// statistics in the dataset metadata.
pub fn normalize(ds: &LabeledDataset, mode: NormalizationMode) -> LabeledDataset {
    let n = ds.len() as f64;
    let m = ds.dim();
    let norm = match mode {
        NormalizationMode::Global => {
            let mean: f64 =
                ds.features.iter().flat_map(|r| r.iter()).sum::<f64>() / (n * m as f64);
            let var: f64 = ds
                .features
                .iter()
                .flat_map(|r| r.iter())
                .map(|v| (v - mean).powi(2))
                .sum::<f64>()
                / (n * m as f64);
            Normalization::Global {
                mean,
                std: var.sqrt().max(STD_FLOOR),
            }
        }
        NormalizationMode::PerFeature => {
            let mut means = vec![0.0; m];
            for row in &ds.features {
                for (s, v) in means.iter_mut().zip(row) {
                    *s += v;
                }
            }
            for s in means.iter_mut() {
                *s /= n;
            }
            let mut vars = vec![0.0; m];
            for row in &ds.features {
                for ((s, v), mu) in vars.iter_mut().zip(row).zip(&means) {
                    *s += (v - mu).powi(2);
                }
            }
            let stds: Vec<f64> = vars.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
            Normalization::PerFeature { means, stds }
        }
    };
    apply_normalization(ds, &norm)
}

/// Applies previously fitted statistics (e.g. the training split's) to a new
/// dataset. The transform is affine and invertible.
pub fn apply_normalization(ds: &LabeledDataset, norm: &Normalization) -> LabeledDataset {
    let features = match norm {
        Normalization::None => ds.features.clone(),
        Normalization::Global { mean, std } => ds
            .features
            .iter()
            .map(|row| row.iter().map(|v| (v - mean) / std).collect())
            .collect(),
        Normalization::PerFeature { means, stds } => ds
            .features
            .iter()
            .map(|row| {
                row.iter()
                    .zip(means)
                    .zip(stds)
                    .map(|((v, mu), s)| (v - mu) / s)
                    .collect()
            })
            .collect(),
    };
    LabeledDataset {
        features,
        labels: ds.labels.clone(),
        meta: DatasetMeta {
            source: ds.meta.source.clone(),
            normalization: norm.clone(),
            seed: ds.meta.seed,
        },
    }
}

/// Seeded permutation followed by contiguous cuts: an exact partition into
/// train/validation/test.
pub fn split(
    ds: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let n = ds.len();
    let n_train = (spec.train * n as f64).round() as usize;
    let n_val = (spec.val * n as f64).round() as usize;
    let n_train = n_train.min(n);
    let n_val = n_val.min(n - n_train);
    let n_test = n - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Domain(format!(
            "split sizes ({n_train}, {n_val}, {n_test}) leave an empty part"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let take = |idx: &[usize]| -> LabeledDataset {
        LabeledDataset {
            features: idx.iter().map(|&j| ds.features[j].clone()).collect(),
            labels: idx.iter().map(|&j| ds.labels[j]).collect(),
            meta: ds.meta.clone(),
        }
    };
    Ok((
        take(&order[..n_train]),
        take(&order[n_train..n_train + n_val]),
        take(&order[n_train + n_val..]),
    ))
}

/// Writes the dataset cache container: magic, textual header, features as
/// little-endian `f64`, labels as bytes.
pub fn save_dataset<W: Write>(ds: &LabeledDataset, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(DATASET_MAGIC)?;
    writeln!(w, "count {}", ds.len())?;
    writeln!(w, "dim {}", ds.dim())?;
    writeln!(w, "seed {}", ds.meta.seed)?;
    writeln!(w, "source {}", ds.meta.source)?;
    match &ds.meta.normalization {
        Normalization::None => writeln!(w, "norm none")?,
        Normalization::Global { .. } => writeln!(w, "norm global")?,
        Normalization::PerFeature { .. } => writeln!(w, "norm perfeature")?,
    }
    writeln!(w, "end")?;
    for row in &ds.features {
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for &l in &ds.labels {
        if l > u8::MAX as usize {
            return Err(Error::Domain(format!("label {l} exceeds container range")));
        }
        w.write_all(&[l as u8])?;
    }
    match &ds.meta.normalization {
        Normalization::None => {}
        Normalization::Global { mean, std } => {
            w.write_all(&mean.to_le_bytes())?;
            w.write_all(&std.to_le_bytes())?;
        }
        Normalization::PerFeature { means, stds } => {
            for v in means.iter().chain(stds) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset<R: Read>(reader: R) -> Result<LabeledDataset> {
    use std::io::BufRead;
    let mut r = BufReader::new(reader);
    let mut offset = 0u64;
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(|_| Error::Parse {
        offset,
        msg: "truncated magic".into(),
    })?;
    offset += 5;
    if magic != DATASET_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: "bad magic, expected RBD1".into(),
        });
    }
    let mut count = None;
    let mut dim = None;
    let mut seed = 0u64;
    let mut source = String::new();
    let mut norm_mode = "none".to_string();
    loop {
        let mut line = String::new();
        let n = r.read_line(&mut line)?;
        if n == 0 {
            return Err(Error::Parse {
                offset,
                msg: "unexpected end of header".into(),
            });
        }
        offset += n as u64;
        let line = line.trim_end();
        if line == "end" {
            break;
        }
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "count" => count = rest.parse().ok(),
            "dim" => dim = rest.parse().ok(),
            "seed" => seed = rest.parse().unwrap_or(0),
            "source" => source = rest.to_string(),
            "norm" => norm_mode = rest.to_string(),
            _ => {
                return Err(Error::Parse {
                    offset,
                    msg: format!("unknown header line: {line}"),
                })
            }
        }
    }
    let count: usize = count.ok_or(Error::Parse {
        offset,
        msg: "missing count".into(),
    })?;
    let dim: usize = dim.ok_or(Error::Parse {
        offset,
        msg: "missing dim".into(),
    })?;
    let read_f64 = |r: &mut BufReader<R>, offset: &mut u64| -> Result<f64> {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf).map_err(|_| Error::Parse {
            offset: *offset,
            msg: "truncated payload".into(),
        })?;
        *offset += 8;
        Ok(f64::from_le_bytes(buf))
    };
    let mut features = Vec::with_capacity(count);
    for _ in 0..count {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            row.push(read_f64(&mut r, &mut offset)?);
        }
        features.push(row);
    }
    let mut label_bytes = vec![0u8; count];
    r.read_exact(&mut label_bytes).map_err(|_| Error::Parse {
        offset,
        msg: "truncated labels".into(),
    })?;
    offset += count as u64;
    let normalization = match norm_mode.as_str() {
        "none" => Normalization::None,
        "global" => Normalization::Global {
            mean: read_f64(&mut r, &mut offset)?,
            std: read_f64(&mut r, &mut offset)?,
        },
        "perfeature" => {
            let mut means = Vec::with_capacity(dim);
            for _ in 0..dim {
                means.push(read_f64(&mut r, &mut offset)?);
            }
            let mut stds = Vec::with_capacity(dim);
            for _ in 0..dim {
                stds.push(read_f64(&mut r, &mut offset)?);
            }
            Normalization::PerFeature { means, stds }
        }
        other => {
            return Err(Error::Parse {
                offset,
                msg: format!("unknown normalization mode {other}"),
            })
        }
    };
    LabeledDataset::new(
        features,
        label_bytes.iter().map(|&b| b as usize).collect(),
        DatasetMeta {
            source,
            normalization,
            seed,
        },
    )
}
