//! Temporal 4D-energy metrics over streams of back-to-back shaped blocks.

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::EnumerativeCodec;
use crate::error::SignalError;

/// Default window for the energy dispersion index at N = 108.
pub const EDI_WINDOW: usize = 42;
/// Default window for the windowed kurtosis at N = 108.
pub const KURTOSIS_WINDOW: usize = 54;
/// Default EDI window for the block-length sweep.
pub const EDI_WINDOW_SWEEP: usize = 200;
/// Default Monte-Carlo size for stream metrics.
pub const DEFAULT_BLOCKS: usize = 40_000;
pub const DEFAULT_SEED: u64 = 0x5eed_e551;

/// Per-4D-symbol energies `Σ a²` of a shaped stream, in amplitude-grid units
/// (odd-integer constellation, so a 4D symbol of amplitudes `(1, 3, 1, 3)` has energy 20).
///
/// The dispersion index is reported in these units; [`EnergyStream::normalized`] gives the
/// unit-mean view.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyStream {
    energies: Vec<f64>,
    symbols_per_block: usize,
}

impl EnergyStream {
    /// Wraps per-symbol energies as given; `symbols_per_block` only records block structure.
    pub fn from_raw(raw: &[f64], symbols_per_block: usize) -> Self {
        Self {
            energies: raw.to_vec(),
            symbols_per_block,
        }
    }

    /// Stream of the 4D energies of consecutive amplitude quadruples.
    pub fn from_amplitudes(amplitudes: &[u32], block_length: usize) -> Result<Self, SignalError> {
        if block_length % 4 != 0 || amplitudes.len() % block_length != 0 {
            return Err(SignalError::Config(
                "4D energies need whole blocks with a length divisible by 4".into(),
            ));
        }
        Ok(Self::from_raw(&raw_4d_energies(amplitudes), block_length / 4))
    }

    /// Copy scaled to unit mean energy.
    pub fn normalized(&self) -> Self {
        let mean = self.mean();
        let energies = if mean > 0.0 {
            self.energies.iter().map(|e| e / mean).collect()
        } else {
            self.energies.clone()
        };
        Self {
            energies,
            symbols_per_block: self.symbols_per_block,
        }
    }

    pub fn mean(&self) -> f64 {
        self.energies.iter().sum::<f64>() / self.energies.len().max(1) as f64
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn symbols_per_block(&self) -> usize {
        self.symbols_per_block
    }
}

/// Un-normalized 4D energies of consecutive amplitude quadruples.
pub fn raw_4d_energies(amplitudes: &[u32]) -> Vec<f64> {
    amplitudes
        .chunks_exact(4)
        .map(|q| q.iter().map(|&a| f64::from(a * a)).sum())
        .collect()
}

/// Uniform index on `[0, 2^bits)`.
pub fn random_index<R: Rng + ?Sized>(rng: &mut R, bits: u64) -> BigUint {
    let words = bits.div_ceil(32) as usize;
    let mut digits: Vec<u32> = (0..words).map(|_| rng.random()).collect();
    let spare = words as u64 * 32 - bits;
    if let Some(top) = digits.last_mut() {
        if spare > 0 {
            *top >>= spare;
        }
    }
    BigUint::from_slice(&digits)
}

/// Concatenates `num_blocks` independently, uniformly indexed blocks.
pub fn generate_amplitudes(codec: &EnumerativeCodec, num_blocks: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(num_blocks * codec.block_length());
    for _ in 0..num_blocks {
        let index = random_index(&mut rng, codec.bits());
        let seq = codec.encode(&index).expect("index below 2^k");
        out.extend_from_slice(seq.amplitudes());
    }
    out
}

pub fn generate_stream(
    codec: &EnumerativeCodec,
    num_blocks: usize,
    seed: u64,
) -> Result<EnergyStream, SignalError> {
    if num_blocks == 0 {
        return Err(SignalError::Config("need at least one block".into()));
    }
    let amplitudes = generate_amplitudes(codec, num_blocks, seed);
    EnergyStream::from_amplitudes(&amplitudes, codec.block_length())
}

fn check_window(stream: &EnergyStream, window: usize) -> Result<(), SignalError> {
    if window == 0 || window > stream.len() {
        return Err(SignalError::WindowTooLong {
            window,
            length: stream.len(),
        });
    }
    Ok(())
}

/// Sliding sums of `f(E_i)` over `window` consecutive symbols (step 1, no wraparound).
fn window_sums(values: &[f64], window: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len() + 1 - window);
    let mut acc: f64 = values[..window].iter().map(|&v| f(v)).sum();
    out.push(acc);
    for i in window..values.len() {
        acc += f(values[i]) - f(values[i - window]);
        out.push(acc);
    }
    out
}

/// Energy dispersion index: variance over mean of the sliding `window`-symbol energy sums.
pub fn edi(stream: &EnergyStream, window: usize) -> Result<f64, SignalError> {
    check_window(stream, window)?;
    let sums = window_sums(stream.energies(), window, |e| e);
    let n = sums.len() as f64;
    let mean = sums.iter().sum::<f64>() / n;
    let var = sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(if mean > 0.0 { var / mean } else { 0.0 })
}

/// Windowed kurtosis: the standardized fourth central moment `μ4 / σ⁴` of the energies in
/// each sliding window, averaged over windows. Windows of constant energy are skipped;
/// a stream made only of such windows reports 1.
pub fn windowed_kurtosis(stream: &EnergyStream, window: usize) -> Result<f64, SignalError> {
    check_window(stream, window)?;
    let e = stream.energies();
    let w = window as f64;
    let s1 = window_sums(e, window, |x| x);
    let s2 = window_sums(e, window, |x| x * x);
    let s3 = window_sums(e, window, |x| x * x * x);
    let s4 = window_sums(e, window, |x| x * x * x * x);
    let (mut total, mut used) = (0.0, 0usize);
    for i in 0..s1.len() {
        let m1 = s1[i] / w;
        let m2 = s2[i] / w;
        let m3 = s3[i] / w;
        let m4 = s4[i] / w;
        let var = m2 - m1 * m1;
        if var <= 1e-9 * m2.max(f64::MIN_POSITIVE) {
            continue;
        }
        let c4 = m4 - 4.0 * m3 * m1 + 6.0 * m2 * m1 * m1 - 3.0 * m1.powi(4);
        total += c4 / (var * var);
        used += 1;
    }
    Ok(if used == 0 { 1.0 } else { total / used as f64 })
}

/// Average over sliding windows of `mean(E²) / mean(E)²`.
pub fn windowed_moment_ratio(stream: &EnergyStream, window: usize) -> Result<f64, SignalError> {
    check_window(stream, window)?;
    let w = window as f64;
    let s1 = window_sums(stream.energies(), window, |e| e);
    let s2 = window_sums(stream.energies(), window, |e| e * e);
    let total: f64 = s1
        .iter()
        .zip(&s2)
        .map(|(a, b)| {
            let m1 = a / w;
            b / w / (m1 * m1)
        })
        .sum();
    Ok(total / s1.len() as f64)
}
