//! Counter-based splittable random number generator.
//!
//! Every random quantity in the library is derived from the pure function
//! `prf_u64(master, stream, counter)`: three rounds of the SplitMix64
//! finalizer with odd-constant multiplies folding in the stream and counter.
//! The construction is stateless, so any (replica, entry) pair can be
//! evaluated in any order on any thread with identical results.
//!
//! The algorithm below is part of the output contract: identical
//! `(master, stream, counter)` triples produce identical u64 values on all
//! platforms, and the mapping is never changed silently.
//!
//! Stream allocation:
//!
//! * lane 0 — matrix entries; stream = replica index, counter = upper-triangle
//!   entry index `i * n + j` (i ≤ j)
//! * lane 1 — per-replica diagonal index draws for the random index policy
//! * lane 2 — bootstrap resampling
//! * lane 3 — probe-set draws for derivative spot checks
//!
//! Lanes are encoded in the top byte of the stream word.

const GOLDEN: u64 = 0x9E3779B97F4A7C15;
const STREAM_MULT: u64 = 0xA24BAED4963EE407;
const COUNTER_MULT: u64 = 0x9FB21C651E98DF25;

pub const LANE_MATRIX: u64 = 0;
pub const LANE_INDEX: u64 = 1;
pub const LANE_BOOTSTRAP: u64 = 2;
pub const LANE_PROBE: u64 = 3;

/// SplitMix64 finalizer (Vigna). Full-avalanche bijection on u64.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// The keyed counter function at the bottom of every random draw.
#[inline]
pub fn prf_u64(master: u64, stream: u64, counter: u64) -> u64 {
    let mut h = mix(master ^ GOLDEN);
    h = mix(h ^ stream.wrapping_mul(STREAM_MULT));
    mix(h ^ counter.wrapping_mul(COUNTER_MULT))
}

/// Uniform f64 in [0, 1) with 53 random bits.
#[inline]
pub fn prf_u01(master: u64, stream: u64, counter: u64) -> f64 {
    const DEN: f64 = (1u64 << 53) as f64;
    (prf_u64(master, stream, counter) >> 11) as f64 / DEN
}

#[inline]
pub fn stream_for(lane: u64, replica: u64) -> u64 {
    debug_assert!(replica < 1 << 56);
    (lane << 56) | replica
}

/// Sequential view over one (master, stream) pair: a counter that
/// increments on every draw. Used where a draw count is not known a priori
/// (bootstrap, index selection); never for matrix entries.
#[derive(Debug, Clone)]
pub struct CounterRng {
    master: u64,
    stream: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(master: u64, stream: u64) -> Self {
        Self {
            master,
            stream,
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = prf_u64(self.master, self.stream, self.counter);
        self.counter += 1;
        v
    }

    pub fn next_u01(&mut self) -> f64 {
        const DEN: f64 = (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 / DEN
    }

    /// Uniform index in [0, n) by rejection on the top bits (no modulo bias).
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        let n = n as u64;
        // zone is the largest multiple of n that fits in u64
        let zone = u64::MAX - (u64::MAX % n + 1) % n;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return (v % n) as usize;
            }
        }
    }
}
