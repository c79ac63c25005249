use serde::{Deserialize, Serialize};

use crate::alphabet::AmplitudeAlphabet;
use crate::error::{Result, ShapingError};

/// Where the affine band constraint is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Granularity {
    /// After every amplitude, checkpoint index `i = n`.
    #[serde(rename = "1D")]
    OneD,
    /// After every complete 4D symbol (`n ≡ 0 mod 4`), checkpoint index `i = n / 4`.
    #[serde(rename = "4D")]
    FourD,
}

impl Granularity {
    /// Number of amplitudes between two checkpoints.
    pub fn stride(self) -> usize {
        match self {
            Granularity::OneD => 1,
            Granularity::FourD => 4,
        }
    }
}

/// Affine band `A + i·K1 <= E_i <= min(B + i·K2, e_max)` on the accumulated energy
/// `E_i` at checkpoint `i` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandParams {
    pub a: f64,
    pub b: f64,
    pub k1: f64,
    pub k2: f64,
    pub granularity: Granularity,
}

impl BandParams {
    pub fn new(a: f64, b: f64, k1: f64, k2: f64, granularity: Granularity) -> Self {
        Self {
            a,
            b,
            k1,
            k2,
            granularity,
        }
    }

    /// Band of constant width around the line `i·slope`: `A = offset`, `B = offset + width`.
    pub fn centered(slope: f64, offset: f64, width: f64, granularity: Granularity) -> Self {
        Self::new(offset, offset + width, slope, slope, granularity)
    }

    /// Lower and upper limit at checkpoint `i`, before clamping to `[0, e_max]`.
    pub fn limits(&self, checkpoint: usize) -> (f64, f64) {
        let i = checkpoint as f64;
        (self.a + i * self.k1, self.b + i * self.k2)
    }
}

/// Per-position bounds on the accumulated energy of an amplitude sequence, plus an
/// optional bound on the accumulated fourth power.
///
/// Positions are 1-based: `lower(n)` / `upper(n)` bound `Σ_{j<=n} a_j²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyConstraintProfile {
    block_length: usize,
    e_max: u64,
    lower: Vec<u64>,
    upper: Vec<u64>,
    e4_max: Option<u64>,
    band: Option<BandParams>,
}

impl EnergyConstraintProfile {
    /// Plain sphere: `Σ a² <= e_max`.
    pub fn sphere(alphabet: &AmplitudeAlphabet, block_length: usize, e_max: u64) -> Result<Self> {
        Self::build(alphabet, block_length, e_max, None, None)
    }

    /// Sphere intersected with an affine band.
    pub fn banded(
        alphabet: &AmplitudeAlphabet,
        block_length: usize,
        e_max: u64,
        band: BandParams,
    ) -> Result<Self> {
        Self::build(alphabet, block_length, e_max, Some(band), None)
    }

    /// Sphere intersected with `Σ a⁴ <= e4_max`.
    pub fn kurtosis_limited(
        alphabet: &AmplitudeAlphabet,
        block_length: usize,
        e_max: u64,
        e4_max: u64,
    ) -> Result<Self> {
        Self::build(alphabet, block_length, e_max, None, Some(e4_max))
    }

    pub fn build(
        alphabet: &AmplitudeAlphabet,
        block_length: usize,
        e_max: u64,
        band: Option<BandParams>,
        e4_max: Option<u64>,
    ) -> Result<Self> {
        if block_length == 0 {
            return Err(ShapingError::InvalidProfile("block length must be positive".into()));
        }
        if let Some(band) = band {
            let finite = [band.a, band.b, band.k1, band.k2].iter().all(|v| v.is_finite());
            if !finite {
                return Err(ShapingError::InvalidProfile("band parameters must be finite".into()));
            }
        }
        let min_e = alphabet.min_energy();
        let mut lower = Vec::with_capacity(block_length);
        let mut upper = Vec::with_capacity(block_length);
        for n in 1..=block_length {
            let floor = n as u64 * min_e;
            let (mut lo, mut hi) = (floor, e_max);
            if let Some(band) = band {
                let stride = band.granularity.stride();
                if n % stride == 0 {
                    let (l, h) = band.limits(n / stride);
                    lo = lo.max(clamp_ceil(l));
                    hi = hi.min(clamp_floor(h));
                }
            }
            lower.push(lo);
            upper.push(hi);
        }
        Self::from_bounds(block_length, e_max, lower, upper, e4_max).map(|mut p| {
            p.band = band;
            p
        })
    }

    /// Profile from explicit per-position bounds (index 0 is position 1).
    pub fn from_bounds(
        block_length: usize,
        e_max: u64,
        lower: Vec<u64>,
        upper: Vec<u64>,
        e4_max: Option<u64>,
    ) -> Result<Self> {
        if lower.len() != block_length || upper.len() != block_length {
            return Err(ShapingError::InvalidProfile(format!(
                "expected {block_length} bounds per side"
            )));
        }
        for (n, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if hi > e_max {
                return Err(ShapingError::InvalidProfile(format!(
                    "upper bound {hi} at position {} exceeds e_max {e_max}",
                    n + 1
                )));
            }
            if lo > hi {
                return Err(ShapingError::InvalidProfile(format!(
                    "empty band at position {}: [{lo}, {hi}]",
                    n + 1
                )));
            }
        }
        Ok(Self {
            block_length,
            e_max,
            lower,
            upper,
            e4_max,
            band: None,
        })
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }

    pub fn e_max(&self) -> u64 {
        self.e_max
    }

    pub fn e4_max(&self) -> Option<u64> {
        self.e4_max
    }

    pub fn band(&self) -> Option<&BandParams> {
        self.band.as_ref()
    }

    /// Lower bound on the accumulated energy after `n` amplitudes (1-based).
    pub fn lower(&self, n: usize) -> u64 {
        self.lower[n - 1]
    }

    /// Upper bound on the accumulated energy after `n` amplitudes (1-based).
    pub fn upper(&self, n: usize) -> u64 {
        self.upper[n - 1]
    }

    pub fn lower_bounds(&self) -> &[u64] {
        &self.lower
    }

    pub fn upper_bounds(&self) -> &[u64] {
        &self.upper
    }

    /// Whether the state reached after `n` amplitudes satisfies the profile.
    pub fn admits(&self, n: usize, energy: u64, fourth: u64) -> bool {
        if n == 0 {
            return true;
        }
        energy >= self.lower[n - 1]
            && energy <= self.upper[n - 1]
            && self.e4_max.is_none_or(|m| fourth <= m)
    }

    /// First position (1-based) at which `amplitudes` leaves the profile, if any.
    pub fn first_violation(&self, amplitudes: &[u32]) -> Option<usize> {
        if amplitudes.len() != self.block_length {
            return Some(amplitudes.len().min(self.block_length).max(1));
        }
        let (mut e, mut e4) = (0u64, 0u64);
        for (n, &a) in amplitudes.iter().enumerate() {
            let sq = u64::from(a) * u64::from(a);
            e += sq;
            e4 += sq * sq;
            if !self.admits(n + 1, e, e4) {
                return Some(n + 1);
            }
        }
        None
    }
}

fn clamp_ceil(v: f64) -> u64 {
    if v <= 0.0 {
        0
    } else {
        // Guard against 27.999999 style rounding noise before taking the ceiling.
        (v - 1e-9).ceil() as u64
    }
}

fn clamp_floor(v: f64) -> u64 {
    if v < 0.0 {
        0
    } else {
        (v + 1e-9).floor() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_d_band_only_at_checkpoints() {
        let alphabet = AmplitudeAlphabet::qam64();
        let band = BandParams::new(-24.0, 0.0, 28.0, 28.0, Granularity::FourD);
        let p = EnergyConstraintProfile::banded(&alphabet, 8, 48, band).unwrap();
        assert_eq!(p.lower_bounds(), &[1, 2, 3, 4, 5, 6, 7, 32]);
        assert_eq!(p.upper_bounds(), &[48, 48, 48, 28, 48, 48, 48, 48]);
    }

    #[test]
    fn one_d_band_every_position() {
        let alphabet = AmplitudeAlphabet::qam64();
        let band = BandParams::centered(9.0, -5.0, 10.0, Granularity::OneD);
        let p = EnergyConstraintProfile::banded(&alphabet, 4, 40, band).unwrap();
        assert_eq!(p.lower_bounds(), &[4, 13, 22, 31]);
        assert_eq!(p.upper_bounds(), &[14, 23, 32, 40]);
    }

    #[test]
    fn empty_band_is_rejected() {
        let alphabet = AmplitudeAlphabet::qam64();
        let band = BandParams::new(30.0, 10.0, 0.0, 0.0, Granularity::OneD);
        assert!(EnergyConstraintProfile::banded(&alphabet, 3, 100, band).is_err());
    }

    #[test]
    fn violation_position() {
        let alphabet = AmplitudeAlphabet::qam64();
        let p = EnergyConstraintProfile::sphere(&alphabet, 3, 20).unwrap();
        assert_eq!(p.first_violation(&[1, 3, 1]), None);
        assert_eq!(p.first_violation(&[3, 3, 3]), Some(3));
        assert_eq!(p.first_violation(&[5, 1, 1]), Some(1));
    }
}
