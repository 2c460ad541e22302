//! Probes of the polyhedral decomposition induced by a ReLU network: region
//! identification by bit vector, bisection walks along segments, Hamming
//! neighbor tests, and 2D grid censuses of realizable bit vectors.

use std::collections::HashMap;
use std::sync::Arc;

use crate::bits::{extract_bits, hamming, BitVector, LayerLayout};
use crate::error::{Error, Result};
use crate::net::NetworkSpec;

/// A linear region: its bit vector and an input point witnessing it.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionId {
    pub bits: BitVector,
    pub witness: Vec<f64>,
}

/// One localized region transition along a segment: the parameter interval
/// bracketing the change and the global indices of the bits that flipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub t_lo: f64,
    pub t_hi: f64,
    pub flipped: Vec<usize>,
}

/// Walk along a segment: ordered transitions and the regions visited.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkResult {
    pub transitions: Vec<Transition>,
    pub regions: Vec<RegionId>,
    pub tolerance: f64,
}

impl WalkResult {
    /// Total number of bit flips across all transitions.
    pub fn total_flips(&self) -> usize {
        self.transitions.iter().map(|t| t.flipped.len()).sum()
    }
}

/// Entry of a grid census: one witness plus the number of grid points that
/// landed in the region.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusEntry {
    pub bits: BitVector,
    pub witness: Vec<f64>,
    pub count: usize,
}

pub fn hidden_layout(net: &NetworkSpec) -> Arc<LayerLayout> {
    Arc::new(LayerLayout::new(net.hidden_widths()).expect("network has hidden layers"))
}

/// Forwards `x` and returns its region label with `x` as witness.
pub fn region_of(net: &NetworkSpec, layout: &Arc<LayerLayout>, x: &[f64]) -> Result<RegionId> {
    let trace = net.forward(x)?;
    let bits = extract_bits(&trace, layout)?;
    Ok(RegionId {
        bits,
        witness: x.to_vec(),
    })
}

/// True iff the two bit vectors differ in exactly one bit. Necessary, not
/// sufficient, for the regions to share a facet.
pub fn is_hamming_neighbor(u: &BitVector, v: &BitVector) -> Result<bool> {
    Ok(hamming(u, v)? == 1)
}

const WALK_INTERVAL_BUDGET: usize = 1 << 20;

/// Adaptive bisection of `x(t) = (1 - t) a + t b` on `t` in `[0, 1]`: any
/// interval whose endpoint bit vectors differ is split until its width is at
/// most `delta`, then recorded as one transition carrying all bits that
/// flipped across it.
pub fn segment_walk(
    net: &NetworkSpec,
    a: &[f64],
    b: &[f64],
    delta: f64,
) -> Result<WalkResult> {
    if !(delta > 0.0) {
        return Err(Error::Domain("delta must be > 0".into()));
    }
    let layout = hidden_layout(net);
    let point = |t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(ai, bi)| (1.0 - t) * ai + t * bi).collect()
    };
    let start = region_of(net, &layout, a)?;
    let end_bits = region_of(net, &layout, b)?.bits;

    let mut transitions = Vec::new();
    let mut regions = vec![start.clone()];
    let mut budget = WALK_INTERVAL_BUDGET;
    // explicit stack, processed left to right
    let mut stack: Vec<(f64, BitVector, f64, BitVector)> =
        vec![(0.0, start.bits, 1.0, end_bits)];
    while let Some((t0, b0, t1, b1)) = stack.pop() {
        if b0 == b1 {
            continue;
        }
        if budget == 0 {
            return Err(Error::Budget { t_lo: t0, t_hi: t1 });
        }
        budget -= 1;
        if t1 - t0 <= delta {
            let flipped: Vec<usize> = (0..b0.len()).filter(|&k| b0.get(k) != b1.get(k)).collect();
            let witness = point(t1);
            transitions.push(Transition {
                t_lo: t0,
                t_hi: t1,
                flipped,
            });
            regions.push(RegionId { bits: b1, witness });
            continue;
        }
        let tm = 0.5 * (t0 + t1);
        let bm = extract_bits(&net.forward(&point(tm))?, &layout)?;
        // push right first so the left half is processed first
        stack.push((tm, bm.clone(), t1, b1));
        stack.push((t0, b0, tm, bm));
    }
    Ok(WalkResult {
        transitions,
        regions,
        tolerance: delta,
    })
}

/// Census of realizable bit vectors over the nested dyadic grid of
/// `(2^depth + 1)^2` points on `[lo, hi]^2`. Entries are keyed by bit
/// vector; the witness is the first grid point seen in the region.
pub fn grid_census(
    net: &NetworkSpec,
    lo: f64,
    hi: f64,
    depth: u32,
) -> Result<Vec<CensusEntry>> {
    if net.input_dim() != 2 {
        return Err(Error::Domain(format!(
            "grid census requires a 2D input network, got input dim {}",
            net.input_dim()
        )));
    }
    if !(lo < hi) {
        return Err(Error::Domain("census box must satisfy lo < hi".into()));
    }
    let layout = hidden_layout(net);
    let n = (1usize << depth) + 1;
    let step = (hi - lo) / (n - 1) as f64;
    let mut seen: HashMap<BitVector, (Vec<f64>, usize)> = HashMap::new();
    let mut order: Vec<BitVector> = Vec::new();
    for iy in 0..n {
        let y = lo + iy as f64 * step;
        for ix in 0..n {
            let x = lo + ix as f64 * step;
            let p = [x, y];
            let bits = extract_bits(&net.forward(&p)?, &layout)?;
            match seen.get_mut(&bits) {
                Some(entry) => entry.1 += 1,
                None => {
                    seen.insert(bits.clone(), (p.to_vec(), 1));
                    order.push(bits);
                }
            }
        }
    }
    Ok(order
        .into_iter()
        .map(|bits| {
            let (witness, count) = seen.remove(&bits).unwrap();
            CensusEntry {
                bits,
                witness,
                count,
            }
        })
        .collect())
}
