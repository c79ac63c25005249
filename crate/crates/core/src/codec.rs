//! Lexicographic enumerative coding on a [`BoundedTrellis`].
//!
//! Sequences are ordered lexicographically with amplitudes compared in alphabet order, so
//! index 0 is the smallest admissible sequence.

use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::Zero;

use crate::error::{Result, ShapingError};
use crate::trellis::{BoundedTrellis, State};

/// An admissible amplitude block with its running energy sums.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmplitudeSequence {
    amplitudes: Vec<u32>,
    accumulated_energy: Vec<u64>,
    accumulated_fourth: Option<Vec<u64>>,
}

impl AmplitudeSequence {
    /// Wraps raw amplitudes, computing the running sums. Admissibility is not checked here.
    pub fn new(amplitudes: Vec<u32>, track_fourth: bool) -> Self {
        let mut e = 0u64;
        let mut e4 = 0u64;
        let mut acc = Vec::with_capacity(amplitudes.len());
        let mut acc4 = Vec::with_capacity(if track_fourth { amplitudes.len() } else { 0 });
        for &a in &amplitudes {
            let sq = u64::from(a) * u64::from(a);
            e += sq;
            e4 += sq * sq;
            acc.push(e);
            if track_fourth {
                acc4.push(e4);
            }
        }
        Self {
            amplitudes,
            accumulated_energy: acc,
            accumulated_fourth: track_fourth.then_some(acc4),
        }
    }

    pub fn amplitudes(&self) -> &[u32] {
        &self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// Running `Σ a²` after each position.
    pub fn accumulated_energy(&self) -> &[u64] {
        &self.accumulated_energy
    }

    pub fn accumulated_fourth(&self) -> Option<&[u64]> {
        self.accumulated_fourth.as_deref()
    }

    pub fn into_amplitudes(self) -> Vec<u32> {
        self.amplitudes
    }
}

/// Returns the admissible sequence of lexicographic rank `index` (`index < total`).
pub fn encode_index(trellis: &BoundedTrellis, index: &BigUint) -> Result<AmplitudeSequence> {
    if index >= trellis.count_sequences() {
        return Err(ShapingError::IndexOutOfRange {
            bits: trellis.max_bits(),
        });
    }
    let alphabet = trellis.alphabet();
    let n_max = trellis.block_length();
    let mut remaining = index.clone();
    let mut state = State::ORIGIN;
    let mut out = Vec::with_capacity(n_max);
    for n in 0..n_max {
        let mut chosen = None;
        for a in 0..alphabet.len() {
            let next = trellis.successor(state, a);
            let Some(c) = trellis.count(n + 1, next) else {
                continue;
            };
            if &remaining < c {
                chosen = Some((a, next));
                break;
            }
            remaining -= c;
        }
        let (a, next) = chosen.expect("index below the completion count always finds a branch");
        out.push(alphabet.amplitudes()[a]);
        state = next;
    }
    debug_assert!(remaining.is_zero());
    Ok(AmplitudeSequence::new(out, trellis.tracks_fourth()))
}

/// Lexicographic rank of an admissible sequence.
pub fn decode_sequence(trellis: &BoundedTrellis, amplitudes: &[u32]) -> Result<BigUint> {
    let alphabet = trellis.alphabet();
    let n_max = trellis.block_length();
    if amplitudes.len() != n_max {
        return Err(ShapingError::WidthMismatch {
            expected: n_max,
            actual: amplitudes.len(),
        });
    }
    let mut rank = BigUint::zero();
    let mut state = State::ORIGIN;
    for (n, &amp) in amplitudes.iter().enumerate() {
        let sym = alphabet
            .index_of(amp)
            .ok_or(ShapingError::InadmissibleSequence { position: n + 1 })?;
        for b in 0..sym {
            if let Some(c) = trellis.count(n + 1, trellis.successor(state, b)) {
                rank += c;
            }
        }
        state = trellis.successor(state, sym);
        if trellis.count(n + 1, state).is_none() {
            return Err(ShapingError::InadmissibleSequence { position: n + 1 });
        }
    }
    Ok(rank)
}

/// Fixed-width big-endian bit string of `index`.
pub fn index_to_bits(index: &BigUint, width: usize) -> Result<Vec<bool>> {
    let used = index.bits() as usize;
    if used > width {
        return Err(ShapingError::WidthMismatch {
            expected: width,
            actual: used,
        });
    }
    Ok((0..width)
        .rev()
        .map(|i| index.bit(i as u64))
        .collect())
}

/// Inverse of [`index_to_bits`].
pub fn bits_to_index(bits: &[bool]) -> BigUint {
    let mut index = BigUint::zero();
    for (i, &b) in bits.iter().rev().enumerate() {
        if b {
            index.set_bit(i as u64, true);
        }
    }
    index
}

/// `k`-bit enumerative encoder/decoder over a shared trellis.
#[derive(Debug, Clone)]
pub struct EnumerativeCodec {
    trellis: Arc<BoundedTrellis>,
    bits: u64,
}

impl EnumerativeCodec {
    /// Codec using the full `floor(log2(total))` bits.
    pub fn new(trellis: Arc<BoundedTrellis>) -> Self {
        let bits = trellis.max_bits();
        Self { trellis, bits }
    }

    pub fn with_bits(trellis: Arc<BoundedTrellis>, bits: u64) -> Result<Self> {
        let available = trellis.max_bits();
        if bits > available {
            return Err(ShapingError::RateTooHigh {
                requested: bits,
                available,
            });
        }
        Ok(Self { trellis, bits })
    }

    pub fn trellis(&self) -> &BoundedTrellis {
        &self.trellis
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn block_length(&self) -> usize {
        self.trellis.block_length()
    }

    pub fn encode(&self, index: &BigUint) -> Result<AmplitudeSequence> {
        if index.bits() > self.bits {
            return Err(ShapingError::IndexOutOfRange { bits: self.bits });
        }
        encode_index(&self.trellis, index)
    }

    pub fn decode(&self, amplitudes: &[u32]) -> Result<BigUint> {
        let index = decode_sequence(&self.trellis, amplitudes)?;
        if index.bits() > self.bits {
            // Admissible, but outside the 2^k sequences this codec emits.
            return Err(ShapingError::IndexOutOfRange { bits: self.bits });
        }
        Ok(index)
    }

    pub fn encode_bits(&self, bits: &[bool]) -> Result<AmplitudeSequence> {
        if bits.len() as u64 != self.bits {
            return Err(ShapingError::WidthMismatch {
                expected: self.bits as usize,
                actual: bits.len(),
            });
        }
        self.encode(&bits_to_index(bits))
    }

    pub fn decode_bits(&self, amplitudes: &[u32]) -> Result<Vec<bool>> {
        index_to_bits(&self.decode(amplitudes)?, self.bits as usize)
    }
}
