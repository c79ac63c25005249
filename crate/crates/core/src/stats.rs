//! Exact statistics of the amplitudes emitted when the index is uniform on `[0, 2^k)`.
//!
//! The first `2^k` sequences in lexicographic order split into groups that follow the
//! path of the sequence of rank `2^k` for `j` positions and then branch to a smaller
//! amplitude. A forward sweep carrying the number of already-branched prefixes per state
//! gives the exact per-position amplitude counts in one pass over the trellis.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::alphabet::AmplitudeAlphabet;
use crate::codec::encode_index;
use crate::error::{Result, ShapingError};
use crate::profile::{BandParams, EnergyConstraintProfile};
use crate::trellis::{BoundedTrellis, State};

/// Exact amplitude counts: `counts[n][a]` is the number of the first `2^k` sequences that
/// carry amplitude index `a` at position `n` (0-based). Each row sums to `2^k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InducedCounts {
    pub bits: u64,
    pub counts: Vec<Vec<BigUint>>,
}

pub fn induced_counts(trellis: &BoundedTrellis, bits: u64) -> Result<InducedCounts> {
    let available = trellis.max_bits();
    if bits > available {
        return Err(ShapingError::RateTooHigh {
            requested: bits,
            available,
        });
    }
    let n_max = trellis.block_length();
    let q = trellis.alphabet().len();
    let limit = BigUint::one() << bits;
    let exhaustive = &limit == trellis.count_sequences();
    let reference = if exhaustive {
        None
    } else {
        Some(encode_index(trellis, &limit)?)
    };
    let ref_symbols: Vec<usize> = reference
        .as_ref()
        .map(|s| {
            s.amplitudes()
                .iter()
                .map(|&a| trellis.alphabet().index_of(a).expect("encoded amplitude"))
                .collect()
        })
        .unwrap_or_default();

    // `branched[i]` counts prefixes ending in the i-th state of the current layer that
    // already lie strictly below the reference path (or every prefix when exhaustive).
    let mut branched: Vec<BigUint> = if exhaustive {
        vec![BigUint::one()]
    } else {
        vec![BigUint::zero()]
    };
    let mut on_path = State::ORIGIN;
    let mut consumed = BigUint::zero();
    let mut counts = Vec::with_capacity(n_max);

    for n in 0..n_max {
        let current: Vec<State> = trellis.layer(n).map(|(s, _)| s).collect();
        let next: Vec<State> = trellis.layer(n + 1).map(|(s, _)| s).collect();
        let mut row = vec![BigUint::zero(); q];
        let mut next_branched = vec![BigUint::zero(); next.len()];

        for (s, w) in current.iter().zip(&branched) {
            if w.is_zero() {
                continue;
            }
            for (a, slot) in row.iter_mut().enumerate() {
                let t = trellis.successor(*s, a);
                if let Ok(j) = next.binary_search(&t) {
                    let c = trellis.count(n + 1, t).expect("state present");
                    *slot += w * c;
                    next_branched[j] += w;
                }
            }
        }

        if !exhaustive {
            let r = ref_symbols[n];
            for (a, slot) in row.iter_mut().enumerate().take(r) {
                let t = trellis.successor(on_path, a);
                if let Ok(j) = next.binary_search(&t) {
                    let c = trellis.count(n + 1, t).expect("state present");
                    *slot += c;
                    consumed += c;
                    next_branched[j] += 1u32;
                }
            }
            row[r] += &limit - &consumed;
            on_path = trellis.successor(on_path, r);
        }

        counts.push(row);
        branched = next_branched;
    }
    Ok(InducedCounts { bits, counts })
}

/// Per-position and position-averaged amplitude distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducedMarginals {
    pub per_position: Vec<Vec<f64>>,
    pub average: Vec<f64>,
}

pub fn induced_marginals(trellis: &BoundedTrellis, bits: u64) -> Result<InducedMarginals> {
    let counts = induced_counts(trellis, bits)?;
    Ok(marginals_from_counts(&counts))
}

pub fn marginals_from_counts(counts: &InducedCounts) -> InducedMarginals {
    let per_position: Vec<Vec<f64>> = counts
        .counts
        .iter()
        .map(|row| row.iter().map(|c| ratio_pow2(c, counts.bits)).collect())
        .collect();
    let q = per_position.first().map_or(0, Vec::len);
    let n = per_position.len() as f64;
    let average = (0..q)
        .map(|a| per_position.iter().map(|p| p[a]).sum::<f64>() / n)
        .collect();
    InducedMarginals {
        per_position,
        average,
    }
}

/// `c / 2^bits` as a float, exact up to rounding of the result.
fn ratio_pow2(c: &BigUint, bits: u64) -> f64 {
    // Shift both operands into f64 range before dividing.
    let shift = bits.saturating_sub(960);
    let num = (c >> shift).to_f64().unwrap_or(f64::INFINITY);
    num / 2f64.powi((bits - shift) as i32)
}

/// Table-style statistics of the induced amplitude distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactMoments {
    /// `E[a²]`.
    pub mean_1d_energy: f64,
    /// Normalized 1D energy variance `E[a⁴]/E[a²]² - 1`.
    pub var_1d_energy: f64,
    /// `E|x|⁴ / (E|x|²)²` of a 2D symbol built from two independent draws.
    pub kurtosis_2d: f64,
    /// `H(P_A) - k/N` in bits per amplitude.
    pub rate_loss: f64,
    /// Entropy of the average amplitude distribution in bits.
    pub entropy: f64,
}

pub fn exact_moments(trellis: &BoundedTrellis, bits: u64) -> Result<ExactMoments> {
    let marginals = induced_marginals(trellis, bits)?;
    Ok(moments_from_distribution(
        trellis.alphabet(),
        &marginals.average,
        bits as f64 / trellis.block_length() as f64,
    ))
}

pub fn moments_from_distribution(
    alphabet: &AmplitudeAlphabet,
    probabilities: &[f64],
    rate: f64,
) -> ExactMoments {
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    let mut entropy = 0.0;
    for ((&p, &e), &e4) in probabilities
        .iter()
        .zip(alphabet.energies())
        .zip(alphabet.fourth_powers())
    {
        m2 += p * e as f64;
        m4 += p * e4 as f64;
        if p > 0.0 {
            entropy -= p * p.log2();
        }
    }
    let var = m4 / (m2 * m2) - 1.0;
    ExactMoments {
        mean_1d_energy: m2,
        // Clamp rounding noise for degenerate (single-amplitude) distributions.
        var_1d_energy: if var.abs() < 1e-12 { 0.0 } else { var },
        kurtosis_2d: (m4 + m2 * m2) / (2.0 * m2 * m2),
        rate_loss: entropy - rate,
        entropy,
    }
}

/// Sorted list of every accumulated energy a length-`n` block can end on.
pub fn achievable_energies(alphabet: &AmplitudeAlphabet, n: usize) -> Vec<u64> {
    let max = n as u64 * alphabet.max_energy();
    let mut reach = vec![false; max as usize + 1];
    reach[0] = true;
    for _ in 0..n {
        let mut next = vec![false; reach.len()];
        for (e, _) in reach.iter().enumerate().filter(|(_, r)| **r) {
            for &d in alphabet.energies() {
                let t = e + d as usize;
                if t < next.len() {
                    next[t] = true;
                }
            }
        }
        reach = next;
    }
    reach
        .iter()
        .enumerate()
        .filter(|(_, r)| **r)
        .map(|(e, _)| e as u64)
        .collect()
}

/// Profile for `e_max` with optional band and fourth-power bound. Returns `None` when
/// the band leaves some position empty.
pub fn profile_for(
    alphabet: &AmplitudeAlphabet,
    n: usize,
    e_max: u64,
    band: Option<BandParams>,
    e4_max: Option<u64>,
) -> Option<EnergyConstraintProfile> {
    EnergyConstraintProfile::build(alphabet, n, e_max, band, e4_max).ok()
}

/// Number of sequences admitted for the given parameters (zero when nothing is admitted).
pub fn count_for(
    alphabet: &AmplitudeAlphabet,
    n: usize,
    e_max: u64,
    band: Option<BandParams>,
    e4_max: Option<u64>,
) -> BigUint {
    profile_for(alphabet, n, e_max, band, e4_max)
        .and_then(|p| BoundedTrellis::build(alphabet, &p).ok())
        .map(|t| t.count_sequences().clone())
        .unwrap_or_default()
}

/// Smallest achievable `e_max` whose trellis holds at least `2^bits` sequences.
pub fn min_emax_for_rate(
    alphabet: &AmplitudeAlphabet,
    n: usize,
    bits: u64,
    band: Option<BandParams>,
) -> Result<u64> {
    let candidates = achievable_energies(alphabet, n);
    let target = BigUint::one() << bits;
    let enough = |e: u64| count_for(alphabet, n, e, band, None) >= target;
    let top = *candidates.last().expect("n >= 1 gives energies");
    if !enough(top) {
        return Err(ShapingError::Unachievable { bits });
    }
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if enough(candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(candidates[lo])
}

/// Floating-point number of admitted sequences, by a forward sweep over reachable states.
///
/// Relative error is around `1e-13·N`; used to bracket calibration searches before the
/// exact count settles the boundary. Overflows to infinity beyond ~2^1024 sequences.
pub fn approx_count(alphabet: &AmplitudeAlphabet, profile: &EnergyConstraintProfile) -> f64 {
    let tracks = profile.e4_max().is_some();
    let mut layer = vec![(State::ORIGIN, 1.0f64)];
    for n in 1..=profile.block_length() {
        let mut next = Vec::with_capacity(layer.len() * alphabet.len());
        for &(s, c) in &layer {
            for (&e, &e4) in alphabet.energies().iter().zip(alphabet.fourth_powers()) {
                let t = State {
                    energy: s.energy + e,
                    fourth: if tracks { s.fourth + e4 } else { 0 },
                };
                if profile.admits(n, t.energy, t.fourth) {
                    next.push((t, c));
                }
            }
        }
        next.sort_unstable_by_key(|p| p.0);
        layer.clear();
        for (t, c) in next {
            match layer.last_mut() {
                Some(last) if last.0 == t => last.1 += c,
                _ => layer.push((t, c)),
            }
        }
        if layer.is_empty() {
            return 0.0;
        }
    }
    layer.iter().map(|p| p.1).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_all_ones() {
        let a = AmplitudeAlphabet::qam64();
        let p = EnergyConstraintProfile::sphere(&a, 6, 6).unwrap();
        let t = BoundedTrellis::build(&a, &p).unwrap();
        let m = induced_marginals(&t, 0).unwrap();
        for row in &m.per_position {
            assert_eq!(row, &vec![1.0, 0.0, 0.0, 0.0]);
        }
        let mom = exact_moments(&t, 0).unwrap();
        assert_eq!(mom.var_1d_energy, 0.0);
        assert_eq!(mom.rate_loss, 0.0);
        assert_eq!(mom.mean_1d_energy, 1.0);
    }

    #[test]
    fn approximate_count_tracks_exact() {
        let a = AmplitudeAlphabet::qam64();
        for e4 in [None, Some(3000)] {
            let p = EnergyConstraintProfile::build(&a, 40, 400, None, e4).unwrap();
            let exact = BoundedTrellis::build(&a, &p).unwrap().count_sequences().to_f64().unwrap();
            assert!((approx_count(&a, &p) / exact - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_cube_kurtosis() {
        let a = AmplitudeAlphabet::qam64();
        let p = EnergyConstraintProfile::sphere(&a, 5, 5 * 49).unwrap();
        let t = BoundedTrellis::build(&a, &p).unwrap();
        let mom = exact_moments(&t, 10).unwrap();
        assert!((mom.kurtosis_2d - 2436.0 / 1764.0).abs() < 1e-12);
        assert!((mom.mean_1d_energy - 21.0).abs() < 1e-12);
        assert!(mom.rate_loss.abs() < 1e-12);
    }

    #[test]
    fn rate_too_high() {
        let a = AmplitudeAlphabet::qam64();
        let p = EnergyConstraintProfile::sphere(&a, 4, 20).unwrap();
        let t = BoundedTrellis::build(&a, &p).unwrap();
        let k = t.max_bits();
        assert!(induced_marginals(&t, k).is_ok());
        assert!(matches!(
            induced_marginals(&t, k + 1),
            Err(ShapingError::RateTooHigh { .. })
        ));
    }

    #[test]
    fn min_emax_small_cases() {
        let binary = AmplitudeAlphabet::new(vec![1, 3]).unwrap();
        assert_eq!(min_emax_for_rate(&binary, 2, 2, None).unwrap(), 18);
        assert_eq!(
            min_emax_for_rate(&binary, 2, 3, None),
            Err(ShapingError::Unachievable { bits: 3 })
        );
    }

    #[test]
    fn achievable_energy_residues() {
        let a = AmplitudeAlphabet::qam64();
        let e = achievable_energies(&a, 3);
        assert_eq!(e.first(), Some(&3));
        assert_eq!(e.last(), Some(&147));
        assert!(e.iter().all(|v| v % 8 == 3));
    }
}
