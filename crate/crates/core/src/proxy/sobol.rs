//! A small digital (base-2) low-discrepancy sequence generator.
//!
//! Gray-code construction over 32-bit direction numbers: the first dimension
//! is the van der Corput sequence; each further dimension derives its
//! direction numbers from a primitive polynomial over GF(2) and a set of odd
//! initial values m_i < 2^i. Any admissible initialization yields a valid
//! digital sequence; the table below uses widely published initial numbers
//! for the leading dimensions. The zero point (index 0) is never emitted —
//! consumers map coordinates through the normal inverse CDF, where 0 is a
//! pole.
//!
//! Scope: calibration-scenario placement needs at most a few thousand points
//! in 2t dimensions; this is not a general QMC library (no scrambling, no
//! high-dimension tables).

use crate::error::{Error, Result};

/// Per-dimension recurrence data: polynomial degree s, interior coefficient
/// bits a (a₁…a_{s−1} from the MSB), and the s initial direction values.
struct Recurrence {
    s: usize,
    a: u32,
    m: &'static [u32],
}

/// Dimensions 2..=20; dimension 1 is van der Corput and needs no entry.
const RECURRENCES: [Recurrence; 19] = [
    Recurrence { s: 1, a: 0, m: &[1] },
    Recurrence { s: 2, a: 1, m: &[1, 3] },
    Recurrence { s: 3, a: 1, m: &[1, 3, 1] },
    Recurrence { s: 3, a: 2, m: &[1, 1, 1] },
    Recurrence { s: 4, a: 1, m: &[1, 1, 3, 3] },
    Recurrence { s: 4, a: 4, m: &[1, 3, 5, 13] },
    Recurrence { s: 5, a: 2, m: &[1, 1, 5, 5, 17] },
    Recurrence { s: 5, a: 4, m: &[1, 1, 5, 5, 5] },
    Recurrence { s: 5, a: 7, m: &[1, 1, 7, 11, 19] },
    Recurrence { s: 5, a: 11, m: &[1, 1, 5, 1, 1] },
    Recurrence { s: 5, a: 13, m: &[1, 1, 1, 3, 11] },
    Recurrence { s: 5, a: 14, m: &[1, 3, 5, 5, 31] },
    Recurrence { s: 6, a: 1, m: &[1, 3, 3, 9, 7, 49] },
    Recurrence { s: 6, a: 13, m: &[1, 1, 1, 15, 21, 21] },
    Recurrence { s: 6, a: 16, m: &[1, 3, 1, 13, 27, 49] },
    Recurrence { s: 6, a: 19, m: &[1, 1, 1, 15, 7, 5] },
    Recurrence { s: 6, a: 22, m: &[1, 3, 1, 3, 25, 31] },
    Recurrence { s: 6, a: 25, m: &[1, 1, 5, 5, 19, 61] },
    Recurrence { s: 7, a: 1, m: &[1, 3, 7, 11, 23, 15, 103] },
];

/// Maximum supported dimensionality.
pub const MAX_DIMS: usize = RECURRENCES.len() + 1;

const BITS: usize = 32;

/// Gray-code sequence state. Emits points in (0, 1)^dims starting from
/// sequence index 1.
pub struct LowDiscrepancySequence {
    dims: usize,
    /// directions[d][j] = v_{j+1} for dimension d, as a fixed-point fraction.
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u64,
}

impl LowDiscrepancySequence {
    pub fn new(dims: usize) -> Result<Self> {
        if dims == 0 || dims > MAX_DIMS {
            return Err(Error::config(format!(
                "low-discrepancy dimension must lie in 1..={MAX_DIMS} (got {dims})"
            )));
        }
        let mut directions = Vec::with_capacity(dims);
        // Dimension 1: pure radical inverse, v_j = 2^{-j}.
        let mut first = [0u32; BITS];
        for (j, v) in first.iter_mut().enumerate() {
            *v = 1 << (BITS - 1 - j);
        }
        directions.push(first);
        for rec in RECURRENCES.iter().take(dims - 1) {
            directions.push(expand_directions(rec));
        }
        Ok(LowDiscrepancySequence { dims, directions, state: vec![0; dims], index: 0 })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// The next point, coordinates strictly inside (0, 1).
    pub fn next_point(&mut self) -> Vec<f64> {
        // Gray-code update: index k flips the bit at the position of the
        // lowest zero bit of k−1 … equivalently trailing ones of the old
        // index. Index 0 (the all-zero point) is skipped by starting the
        // update before the first emission.
        let flip = self.index.trailing_ones() as usize;
        debug_assert!(flip < BITS, "sequence exhausted its 2^32 period");
        for d in 0..self.dims {
            self.state[d] ^= self.directions[d][flip];
        }
        self.index += 1;
        self.state.iter().map(|&x| x as f64 / (1u64 << BITS) as f64).collect()
    }
}

/// Expands a recurrence into all 32 direction numbers (fixed-point form).
fn expand_directions(rec: &Recurrence) -> [u32; BITS] {
    let s = rec.s;
    debug_assert_eq!(rec.m.len(), s);
    let mut v = [0u32; BITS];
    for j in 0..s.min(BITS) {
        debug_assert!(rec.m[j] % 2 == 1, "initial direction values must be odd");
        debug_assert!(rec.m[j] < (1 << (j + 1)), "initial value m_{} out of range", j + 1);
        v[j] = rec.m[j] << (BITS - 1 - j);
    }
    for j in s..BITS {
        let mut val = v[j - s] ^ (v[j - s] >> s);
        for i in 1..s {
            if (rec.a >> (s - 1 - i)) & 1 == 1 {
                val ^= v[j - i];
            }
        }
        v[j] = val;
    }
    v
}
