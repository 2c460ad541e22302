//! Packed activation bit vectors with per-layer addressing.
//!
//! A node's bit is 1 iff its ReLU output is strictly positive; an exact zero
//! maps to 0. The global node order is layer-major, then node index within
//! the layer.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::net::ActivationTrace;

/// Node addressing for the concatenated hidden layers: widths `[h_1..h_L]`,
/// prefix-sum offsets, and the total node count `h`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayerLayout {
    widths: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl LayerLayout {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.is_empty() || widths.contains(&0) {
            return Err(Error::Shape("layer widths must be nonempty and positive".into()));
        }
        let mut offsets = Vec::with_capacity(widths.len());
        let mut total = 0;
        for &w in &widths {
            offsets.push(total);
            total += w;
        }
        Ok(LayerLayout {
            widths,
            offsets,
            total,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Total node count `h`.
    pub fn total(&self) -> usize {
        self.total
    }

    /// Maps a global node index to `(layer, local index)`.
    pub fn locate(&self, k: usize) -> Result<(usize, usize)> {
        if k >= self.total {
            return Err(Error::Index(format!("node {k} >= total {}", self.total)));
        }
        let layer = match self.offsets.binary_search(&k) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        Ok((layer, k - self.offsets[layer]))
    }

    /// Maps `(layer, local index)` to the global node index.
    pub fn global_index(&self, layer: usize, local: usize) -> Result<usize> {
        if layer >= self.widths.len() || local >= self.widths[layer] {
            return Err(Error::Index(format!("({layer}, {local}) outside layout")));
        }
        Ok(self.offsets[layer] + local)
    }
}

/// Packed `{0,1}^h` activation pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitVector {
    words: Vec<u64>,
    layout: Arc<LayerLayout>,
}

impl BitVector {
    pub fn zeros(layout: Arc<LayerLayout>) -> Self {
        let words = vec![0u64; layout.total().div_ceil(64)];
        BitVector { words, layout }
    }

    pub fn from_bools(bits: &[bool], layout: Arc<LayerLayout>) -> Result<Self> {
        if bits.len() != layout.total() {
            return Err(Error::Shape(format!(
                "{} bits but layout has {} nodes",
                bits.len(),
                layout.total()
            )));
        }
        let mut v = BitVector::zeros(layout);
        for (k, &b) in bits.iter().enumerate() {
            if b {
                v.set(k, true);
            }
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.layout.total()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn layout(&self) -> &Arc<LayerLayout> {
        &self.layout
    }

    #[inline]
    pub fn get(&self, k: usize) -> bool {
        debug_assert!(k < self.len());
        self.words[k / 64] >> (k % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, k: usize, value: bool) {
        debug_assert!(k < self.len());
        if value {
            self.words[k / 64] |= 1 << (k % 64);
        } else {
            self.words[k / 64] &= !(1 << (k % 64));
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len()).map(|k| self.get(k)).collect()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Lowercase hex of the packed bits, little-endian words, fixed width.
    pub fn to_hex(&self) -> String {
        let nibbles = self.len().div_ceil(4);
        let mut s = String::with_capacity(nibbles);
        for i in 0..nibbles {
            let nib = (self.words[i / 16] >> (4 * (i % 16))) & 0xf;
            s.push(char::from_digit(nib as u32, 16).unwrap());
        }
        s
    }

    /// Packed row bytes, little-endian bit order within each byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len().div_ceil(8);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push((self.words[i / 8] >> (8 * (i % 8)) & 0xff) as u8);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], layout: Arc<LayerLayout>) -> Result<Self> {
        let expect = layout.total().div_ceil(8);
        if bytes.len() != expect {
            return Err(Error::Shape(format!(
                "{} row bytes but layout needs {expect}",
                bytes.len()
            )));
        }
        let mut v = BitVector::zeros(layout);
        for (i, &b) in bytes.iter().enumerate() {
            v.words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        // stray bits past h would corrupt hamming counts
        let h = v.len();
        if h % 64 != 0 {
            let last = v.words.len() - 1;
            let mask = (1u64 << (h % 64)) - 1;
            if v.words[last] & !mask != 0 {
                return Err(Error::Shape("set bits beyond layout length".into()));
            }
        }
        Ok(v)
    }
}

/// Extracts the bit vector of a forward trace: bit `(i, r)` is 1 iff the
/// post-activation (equivalently pre-activation) is strictly positive.
pub fn extract_bits(trace: &ActivationTrace, layout: &Arc<LayerLayout>) -> Result<BitVector> {
    let trace_widths: Vec<usize> = trace.post_activations.iter().map(|l| l.len()).collect();
    if trace_widths != layout.widths() {
        return Err(Error::Shape(format!(
            "trace widths {trace_widths:?} do not match layout {:?}",
            layout.widths()
        )));
    }
    let mut v = BitVector::zeros(Arc::clone(layout));
    let mut k = 0;
    for layer in &trace.post_activations {
        for &a in layer {
            if a > 0.0 {
                v.set(k, true);
            }
            k += 1;
        }
    }
    Ok(v)
}

/// Hamming distance via XOR + popcount over packed words.
pub fn hamming(a: &BitVector, b: &BitVector) -> Result<usize> {
    if a.layout() != b.layout() {
        return Err(Error::Shape("bit vectors have different layouts".into()));
    }
    Ok(a.words
        .iter()
        .zip(&b.words)
        .map(|(x, y)| (x ^ y).count_ones() as usize)
        .sum())
}

/// Bits of layer `i`, in local node order.
pub fn layer_slice(v: &BitVector, i: usize) -> Result<Vec<bool>> {
    let layout = v.layout();
    if i >= layout.num_layers() {
        return Err(Error::Index(format!(
            "layer {i} >= {}",
            layout.num_layers()
        )));
    }
    let start = layout.offsets()[i];
    Ok((start..start + layout.widths()[i]).map(|k| v.get(k)).collect())
}
