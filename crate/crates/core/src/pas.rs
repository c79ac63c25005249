//! Mapping shaped amplitude blocks and sign bits onto dual-polarization QAM symbols.
//!
//! Every strategy first fills a *dimension stream* `d[4i + j]`, the amplitude carried by
//! real dimension `j ∈ {XI, XQ, YI, YQ}` of 4D slot `i`, then applies one sign per
//! dimension. Slot `i` is transmitted as `(d0 + i·d1, d2 + i·d3)` times the frame scale.

use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::alphabet::AmplitudeAlphabet;
use crate::error::SignalError;

/// How shaped sequences are spread over the four real dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MappingStrategy {
    /// Four sequences, one per real dimension.
    #[serde(rename = "1D")]
    OneD,
    /// Two sequences, one per polarization; consecutive pairs form I/Q.
    #[serde(rename = "2D")]
    TwoD,
    /// One sequence per wavelength; consecutive quadruples form one 4D symbol.
    #[serde(rename = "4D")]
    FourD,
}

impl MappingStrategy {
    /// Number of shaped sequences one frame consumes.
    pub fn sequences_per_frame(self) -> usize {
        match self {
            MappingStrategy::OneD => 4,
            MappingStrategy::TwoD => 2,
            MappingStrategy::FourD => 1,
        }
    }

    /// Dimension-stream position of amplitude `n` of sequence `s`.
    fn slot_of(self, s: usize, n: usize) -> usize {
        match self {
            MappingStrategy::OneD => 4 * n + s,
            MappingStrategy::TwoD => 4 * (n / 2) + 2 * s + n % 2,
            MappingStrategy::FourD => n,
        }
    }
}

impl FromStr for MappingStrategy {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, SignalError> {
        match s.to_ascii_uppercase().as_str() {
            "1D" => Ok(MappingStrategy::OneD),
            "2D" => Ok(MappingStrategy::TwoD),
            "4D" => Ok(MappingStrategy::FourD),
            _ => Err(SignalError::Config(format!("unknown mapping strategy {s}"))),
        }
    }
}

/// Dual-polarization symbol `(X, Y)`.
pub type Symbol4d = [Complex64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct ShapedFrame {
    /// Dimension stream amplitudes.
    pub amplitudes: Vec<u32>,
    /// `true` marks a negative dimension.
    pub signs: Vec<bool>,
    pub symbols: Vec<Symbol4d>,
    pub scale: f64,
}

impl ShapedFrame {
    /// Per-slot energies `|X|² + |Y|²`.
    pub fn slot_energies(&self) -> Vec<f64> {
        self.symbols
            .iter()
            .map(|[x, y]| x.norm_sqr() + y.norm_sqr())
            .collect()
    }
}

/// Scale that brings a constellation of mean 4D energy `mean_4d_energy` to unit energy.
pub fn unit_energy_scale(mean_4d_energy: f64) -> f64 {
    1.0 / mean_4d_energy.sqrt()
}

pub fn map_frame(
    sequences: &[&[u32]],
    signs: &[bool],
    strategy: MappingStrategy,
    scale: f64,
) -> Result<ShapedFrame, SignalError> {
    let count = strategy.sequences_per_frame();
    if sequences.len() != count {
        return Err(SignalError::LengthMismatch {
            expected: count,
            actual: sequences.len(),
        });
    }
    let len = sequences[0].len();
    if let Some(bad) = sequences.iter().find(|s| s.len() != len) {
        return Err(SignalError::LengthMismatch {
            expected: len,
            actual: bad.len(),
        });
    }
    let total = len * count;
    if total % 4 != 0 || (strategy == MappingStrategy::TwoD && len % 2 != 0) {
        return Err(SignalError::LengthMismatch {
            expected: total.next_multiple_of(4),
            actual: total,
        });
    }
    if signs.len() != total {
        return Err(SignalError::LengthMismatch {
            expected: total,
            actual: signs.len(),
        });
    }
    let mut dims = vec![0u32; total];
    for (s, seq) in sequences.iter().enumerate() {
        for (n, &a) in seq.iter().enumerate() {
            dims[strategy.slot_of(s, n)] = a;
        }
    }
    let signed = |k: usize| {
        let v = scale * f64::from(dims[k]);
        if signs[k] {
            -v
        } else {
            v
        }
    };
    let symbols = (0..total / 4)
        .map(|i| {
            [
                Complex64::new(signed(4 * i), signed(4 * i + 1)),
                Complex64::new(signed(4 * i + 2), signed(4 * i + 3)),
            ]
        })
        .collect();
    Ok(ShapedFrame {
        amplitudes: dims,
        signs: signs.to_vec(),
        symbols,
        scale,
    })
}

/// Nearest-amplitude decision on one real dimension (already divided by the scale).
pub fn decide(alphabet: &AmplitudeAlphabet, value: f64) -> (u32, bool) {
    let mag = value.abs();
    let amps = alphabet.amplitudes();
    let i = amps.partition_point(|&a| f64::from(a) < mag);
    let best = if i == 0 {
        amps[0]
    } else if i == amps.len() {
        amps[i - 1]
    } else if mag - f64::from(amps[i - 1]) <= f64::from(amps[i]) - mag {
        amps[i - 1]
    } else {
        amps[i]
    };
    (best, value < 0.0)
}

/// Per-dimension minimum-distance decisions, returned as the original sequences and the
/// dimension-stream signs.
pub fn demap_frame(
    symbols: &[Symbol4d],
    scale: f64,
    strategy: MappingStrategy,
    alphabet: &AmplitudeAlphabet,
) -> (Vec<Vec<u32>>, Vec<bool>) {
    let total = symbols.len() * 4;
    let mut dims = Vec::with_capacity(total);
    let mut signs = Vec::with_capacity(total);
    for [x, y] in symbols {
        for v in [x.re, x.im, y.re, y.im] {
            let (a, s) = decide(alphabet, v / scale);
            dims.push(a);
            signs.push(s);
        }
    }
    let count = strategy.sequences_per_frame();
    let len = total / count;
    let sequences = (0..count)
        .map(|s| (0..len).map(|n| dims[strategy.slot_of(s, n)]).collect())
        .collect();
    (sequences, signs)
}

/// Binary-reflected Gray label of amplitude index `index`.
///
/// Per real dimension the full label is `[sign, gray(index)]`, with the sign bit set for
/// negative values; for 8-ASK this gives the standard Gray-labelled 8-PAM after mirroring.
pub fn gray_label(index: u32) -> u32 {
    index ^ (index >> 1)
}

pub fn gray_index(label: u32) -> u32 {
    let mut index = label;
    let mut shift = label >> 1;
    while shift != 0 {
        index ^= shift;
        shift >>= 1;
    }
    index
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_slot_energies() {
        let plus = [false; 8];
        let f = map_frame(&[&[3, 3, 3, 3, 1, 1, 1, 1]], &plus, MappingStrategy::FourD, 1.0).unwrap();
        assert_eq!(f.slot_energies(), vec![36.0, 4.0]);
        assert_eq!(f.symbols[0], [Complex64::new(3.0, 3.0), Complex64::new(3.0, 3.0)]);
        let f = map_frame(&[&[1, 3, 1, 3, 1, 3, 1, 3]], &plus, MappingStrategy::FourD, 1.0).unwrap();
        assert_eq!(f.slot_energies(), vec![20.0, 20.0]);
        assert_eq!(f.symbols[1], [Complex64::new(1.0, 3.0), Complex64::new(1.0, 3.0)]);
    }

    #[test]
    fn signs_do_not_change_energy() {
        let seq = [7, 1, 5, 3, 1, 1, 3, 5];
        let a = map_frame(&[&seq], &[false; 8], MappingStrategy::FourD, 1.0).unwrap();
        let signs = [true, false, true, true, false, true, false, true];
        let b = map_frame(&[&seq], &signs, MappingStrategy::FourD, 1.0).unwrap();
        assert_eq!(a.slot_energies(), b.slot_energies());
        assert_eq!(b.symbols[0][0], Complex64::new(-7.0, 1.0));
    }

    #[test]
    fn strategies_place_dimensions() {
        let s: [&[u32]; 4] = [&[1, 3], &[5, 7], &[1, 1], &[3, 3]];
        let f = map_frame(&s, &[false; 8], MappingStrategy::OneD, 1.0).unwrap();
        assert_eq!(f.symbols[0], [Complex64::new(1.0, 5.0), Complex64::new(1.0, 3.0)]);
        assert_eq!(f.symbols[1], [Complex64::new(3.0, 7.0), Complex64::new(1.0, 3.0)]);
        let s: [&[u32]; 2] = [&[1, 3, 5, 7], &[7, 5, 3, 1]];
        let f = map_frame(&s, &[false; 8], MappingStrategy::TwoD, 1.0).unwrap();
        assert_eq!(f.symbols[0], [Complex64::new(1.0, 3.0), Complex64::new(7.0, 5.0)]);
        assert_eq!(f.symbols[1], [Complex64::new(5.0, 7.0), Complex64::new(3.0, 1.0)]);
    }

    #[test]
    fn length_errors() {
        assert!(map_frame(&[&[1, 1, 1]], &[false; 3], MappingStrategy::FourD, 1.0).is_err());
        assert!(map_frame(&[&[1, 1, 1, 1]], &[false; 3], MappingStrategy::FourD, 1.0).is_err());
        assert!(map_frame(&[&[1, 1, 1, 1]], &[false; 4], MappingStrategy::TwoD, 1.0).is_err());
    }

    #[test]
    fn noiseless_round_trip_any_scale() {
        let alphabet = AmplitudeAlphabet::qam64();
        let s: [&[u32]; 2] = [&[1, 3, 5, 7, 7, 5], &[3, 1, 1, 1, 5, 7]];
        let signs: Vec<bool> = (0..12).map(|i| i % 3 == 0).collect();
        for scale in [0.01, 1.0, 42.0] {
            let f = map_frame(&s, &signs, MappingStrategy::TwoD, scale).unwrap();
            let (seqs, sg) = demap_frame(&f.symbols, scale, MappingStrategy::TwoD, &alphabet);
            assert_eq!(seqs, vec![s[0].to_vec(), s[1].to_vec()]);
            assert_eq!(sg, signs);
        }
    }

    #[test]
    fn small_displacement_keeps_decision() {
        let alphabet = AmplitudeAlphabet::qam64();
        assert_eq!(decide(&alphabet, 3.99), (3, false));
        assert_eq!(decide(&alphabet, -4.01), (5, true));
        assert_eq!(decide(&alphabet, 11.0), (7, false));
        assert_eq!(decide(&alphabet, 0.2), (1, false));
    }

    #[test]
    fn gray_labels() {
        let labels: Vec<u32> = (0..4).map(gray_label).collect();
        assert_eq!(labels, vec![0b00, 0b01, 0b11, 0b10]);
        for w in labels.windows(2) {
            assert_eq!((w[0] ^ w[1]).count_ones(), 1);
        }
        for i in 0..16 {
            assert_eq!(gray_index(gray_label(i)), i);
        }
    }
}
