//! Per-node activation-frequency statistics over bit-vector datasets:
//! activation frequencies, frequency differences, common-bit fractions,
//! and frequency histograms.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::sync::Arc;

use crate::bits::{BitVector, LayerLayout};
use crate::error::{Error, Result};

pub const BITMATRIX_MAGIC: &[u8] = b"RBM1\n";

/// Original vs adversarial row tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Original,
    Adversarial,
}

impl Tag {
    pub fn as_byte(self) -> u8 {
        match self {
            Tag::Original => 0,
            Tag::Adversarial => 1,
        }
    }

    pub fn from_byte(b: u8) -> Result<Tag> {
        match b {
            0 => Ok(Tag::Original),
            1 => Ok(Tag::Adversarial),
            _ => Err(Error::Domain(format!("bad tag byte {b}"))),
        }
    }
}

/// Row filter for frequency computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowFilter {
    All,
    Tagged(Tag),
}

/// An `N x h` bit matrix with per-row tags and class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDataset {
    rows: Vec<BitVector>,
    tags: Vec<Tag>,
    labels: Vec<usize>,
    layout: Arc<LayerLayout>,
}

impl ActivationDataset {
    pub fn new(
        rows: Vec<BitVector>,
        tags: Vec<Tag>,
        labels: Vec<usize>,
        layout: Arc<LayerLayout>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Domain("dataset must have at least one row".into()));
        }
        if rows.len() != tags.len() || rows.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} tags / {} labels",
                rows.len(),
                tags.len(),
                labels.len()
            )));
        }
        if rows.iter().any(|r| r.layout() != &layout) {
            return Err(Error::Shape("row layout mismatch".into()));
        }
        Ok(ActivationDataset {
            rows,
            tags,
            labels,
            layout,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[BitVector] {
        &self.rows
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn layout(&self) -> &Arc<LayerLayout> {
        &self.layout
    }

    /// Concatenates two datasets sharing a layout.
    pub fn concat(&self, other: &ActivationDataset) -> Result<ActivationDataset> {
        if self.layout != other.layout {
            return Err(Error::Shape("layout mismatch in concat".into()));
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        let mut tags = self.tags.clone();
        tags.extend_from_slice(&other.tags);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        ActivationDataset::new(rows, tags, labels, Arc::clone(&self.layout))
    }

    fn selected(&self, filter: RowFilter) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&j| match filter {
                RowFilter::All => true,
                RowFilter::Tagged(t) => self.tags[j] == t,
            })
            .collect()
    }

    /// Writes the bit-matrix container: magic, textual header, tag and label
    /// bytes, then `N` rows of `ceil(h/8)` packed bytes.
    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        w.write_all(BITMATRIX_MAGIC)?;
        writeln!(w, "count {}", self.rows.len())?;
        writeln!(w, "total {}", self.layout.total())?;
        let widths: Vec<String> = self.layout.widths().iter().map(|x| x.to_string()).collect();
        writeln!(w, "widths {}", widths.join(" "))?;
        writeln!(w, "end")?;
        for t in &self.tags {
            w.write_all(&[t.as_byte()])?;
        }
        for &l in &self.labels {
            if l > u8::MAX as usize {
                return Err(Error::Domain(format!("label {l} exceeds container range")));
            }
            w.write_all(&[l as u8])?;
        }
        for row in &self.rows {
            w.write_all(&row.to_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let mut r = BufReader::new(reader);
        let mut offset: u64 = 0;
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(|_| Error::Parse {
            offset,
            msg: "truncated magic".into(),
        })?;
        offset += 5;
        if magic != BITMATRIX_MAGIC {
            return Err(Error::Parse {
                offset: 0,
                msg: "bad magic, expected RBM1".into(),
            });
        }
        let mut count: Option<usize> = None;
        let mut total: Option<usize> = None;
        let mut widths: Option<Vec<usize>> = None;
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
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("count") => {
                    count = parts.next().and_then(|p| p.parse().ok());
                }
                Some("total") => {
                    total = parts.next().and_then(|p| p.parse().ok());
                }
                Some("widths") => {
                    widths = parts.map(|p| p.parse().ok()).collect();
                }
                _ => {
                    return Err(Error::Parse {
                        offset,
                        msg: format!("unknown header line: {line}"),
                    })
                }
            }
        }
        let count = count.ok_or(Error::Parse {
            offset,
            msg: "missing count".into(),
        })?;
        let widths = widths.ok_or(Error::Parse {
            offset,
            msg: "missing widths".into(),
        })?;
        let layout = Arc::new(LayerLayout::new(widths)?);
        if let Some(t) = total {
            if t != layout.total() {
                return Err(Error::Parse {
                    offset,
                    msg: format!("total {t} does not match widths sum {}", layout.total()),
                });
            }
        }
        let mut tag_bytes = vec![0u8; count];
        r.read_exact(&mut tag_bytes).map_err(|_| Error::Parse {
            offset,
            msg: "truncated tags".into(),
        })?;
        offset += count as u64;
        let mut label_bytes = vec![0u8; count];
        r.read_exact(&mut label_bytes).map_err(|_| Error::Parse {
            offset,
            msg: "truncated labels".into(),
        })?;
        offset += count as u64;
        let tags: Result<Vec<Tag>> = tag_bytes.iter().map(|&b| Tag::from_byte(b)).collect();
        let labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
        let row_bytes = layout.total().div_ceil(8);
        let mut rows = Vec::with_capacity(count);
        for i in 0..count {
            let mut buf = vec![0u8; row_bytes];
            r.read_exact(&mut buf).map_err(|_| Error::Parse {
                offset: offset + (i * row_bytes) as u64,
                msg: format!("truncated row {i}"),
            })?;
            rows.push(BitVector::from_bytes(&buf, Arc::clone(&layout))?);
        }
        ActivationDataset::new(rows, tags?, labels, layout)
    }
}

/// Per-node activation frequency over a selection of rows; each entry is a
/// multiple of `1/count`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyProfile {
    values: Vec<f64>,
    count: usize,
    layout: Arc<LayerLayout>,
}

impl FrequencyProfile {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn layout(&self) -> &Arc<LayerLayout> {
        &self.layout
    }
}

/// Fraction of selected rows with bit 1 at each node.
pub fn activation_frequency(ds: &ActivationDataset, filter: RowFilter) -> Result<FrequencyProfile> {
    let selected = ds.selected(filter);
    if selected.is_empty() {
        return Err(Error::Domain("filter selects no rows".into()));
    }
    let h = ds.layout().total();
    let mut counts = vec![0usize; h];
    for &j in &selected {
        let row = &ds.rows()[j];
        for (c, v) in counts.iter_mut().enumerate() {
            if row.get(c) {
                *v += 1;
            }
        }
    }
    let n = selected.len();
    Ok(FrequencyProfile {
        values: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        count: n,
        layout: Arc::clone(ds.layout()),
    })
}

/// Elementwise `p - q`.
pub fn frequency_difference(p: &FrequencyProfile, q: &FrequencyProfile) -> Result<Vec<f64>> {
    if p.layout != q.layout {
        return Err(Error::Shape("profile layout mismatch".into()));
    }
    Ok(p.values.iter().zip(&q.values).map(|(a, b)| a - b).collect())
}

/// For each layer, the fraction of its nodes at which ALL selected rows have
/// the given bit value.
pub fn common_bit_fraction(ds: &ActivationDataset, value: bool, filter: RowFilter) -> Result<Vec<f64>> {
    let p = activation_frequency(ds, filter)?;
    let target = if value { 1.0 } else { 0.0 };
    let layout = ds.layout();
    let mut out = Vec::with_capacity(layout.num_layers());
    for (i, &w) in layout.widths().iter().enumerate() {
        let start = layout.offsets()[i];
        let common = p.values[start..start + w]
            .iter()
            .filter(|&&v| v == target)
            .count();
        out.push(common as f64 / w as f64);
    }
    Ok(out)
}

/// Per-layer common-bit fraction over the pooled rows of two datasets.
pub fn common_bit_fraction_pooled(
    a: &ActivationDataset,
    b: &ActivationDataset,
    value: bool,
) -> Result<Vec<f64>> {
    common_bit_fraction(&a.concat(b)?, value, RowFilter::All)
}

/// Per-layer fraction of nodes that are all-`value` in BOTH datasets taken
/// separately (intersection of the two common-node sets).
pub fn common_bit_fraction_intersect(
    a: &ActivationDataset,
    b: &ActivationDataset,
    value: bool,
) -> Result<Vec<f64>> {
    if a.layout() != b.layout() {
        return Err(Error::Shape("layout mismatch".into()));
    }
    let pa = activation_frequency(a, RowFilter::All)?;
    let pb = activation_frequency(b, RowFilter::All)?;
    let target = if value { 1.0 } else { 0.0 };
    let layout = a.layout();
    let mut out = Vec::with_capacity(layout.num_layers());
    for (i, &w) in layout.widths().iter().enumerate() {
        let start = layout.offsets()[i];
        let common = (start..start + w)
            .filter(|&k| pa.values[k] == target && pb.values[k] == target)
            .count();
        out.push(common as f64 / w as f64);
    }
    Ok(out)
}

/// Histogram of a profile's entries over `[0, 1]` with equal-width bins; the
/// last bin is right-inclusive. Returns one count vector per layer, or a
/// single pooled vector when `per_layer` is false.
pub fn frequency_histogram(
    p: &FrequencyProfile,
    bins: usize,
    per_layer: bool,
) -> Result<Vec<Vec<usize>>> {
    if bins == 0 {
        return Err(Error::Domain("bins must be >= 1".into()));
    }
    // bins are right-inclusive: (lo, hi], with 0 landing in the first bin
    let bin_of = |v: f64| -> usize {
        let b = (v * bins as f64).ceil() as isize - 1;
        b.clamp(0, bins as isize - 1) as usize
    };
    let layout = &p.layout;
    if per_layer {
        let mut out = Vec::with_capacity(layout.num_layers());
        for (i, &w) in layout.widths().iter().enumerate() {
            let start = layout.offsets()[i];
            let mut counts = vec![0usize; bins];
            for &v in &p.values[start..start + w] {
                counts[bin_of(v)] += 1;
            }
            out.push(counts);
        }
        Ok(out)
    } else {
        let mut counts = vec![0usize; bins];
        for &v in &p.values {
            counts[bin_of(v)] += 1;
        }
        Ok(vec![counts])
    }
}
