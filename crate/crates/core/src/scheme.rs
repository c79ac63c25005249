//! The five shaping schemes compared at a common shaping rate, their calibration, and
//! net-rate bookkeeping.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::alphabet::AmplitudeAlphabet;
use crate::error::{Result, ShapingError};
use crate::profile::{BandParams, EnergyConstraintProfile, Granularity};
use crate::stats::{achievable_energies, approx_count, count_for, min_emax_for_rate, profile_for};
use crate::trellis::BoundedTrellis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "ESS")]
    Ess,
    #[serde(rename = "K-ESS")]
    KurtosisEss,
    #[serde(rename = "BL-1D")]
    Band1d,
    #[serde(rename = "BL-4D-Linear")]
    Band4dLinear,
    #[serde(rename = "BL-4D-Nonlinear")]
    Band4dNonlinear,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::Ess,
        SchemeKind::Band1d,
        SchemeKind::Band4dLinear,
        SchemeKind::Band4dNonlinear,
        SchemeKind::KurtosisEss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Ess => "ESS",
            SchemeKind::KurtosisEss => "K-ESS",
            SchemeKind::Band1d => "BL-1D",
            SchemeKind::Band4dLinear => "BL-4D-Linear",
            SchemeKind::Band4dNonlinear => "BL-4D-Nonlinear",
        }
    }

    pub fn granularity(self) -> Option<Granularity> {
        match self {
            SchemeKind::Band1d => Some(Granularity::OneD),
            SchemeKind::Band4dLinear | SchemeKind::Band4dNonlinear => Some(Granularity::FourD),
            _ => None,
        }
    }

    /// Energy limit relative to plain ESS at the same rate, taken from the N = 108,
    /// 1.5 bit/amplitude operating point (860 / 996 / 948 / 996 / 1156).
    pub fn default_emax_ratio(self) -> f64 {
        match self {
            SchemeKind::Ess => 1.0,
            SchemeKind::Band1d | SchemeKind::Band4dNonlinear => 996.0 / 860.0,
            SchemeKind::Band4dLinear => 948.0 / 860.0,
            SchemeKind::KurtosisEss => 1156.0 / 860.0,
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = ShapingError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['_', ' '], "-");
        Ok(match norm.as_str() {
            "ess" => SchemeKind::Ess,
            "k-ess" | "kess" => SchemeKind::KurtosisEss,
            "bl-1d" | "1d-bl" | "1d-bl-ess" => SchemeKind::Band1d,
            "bl-4d-linear" | "4d-bl-linear" | "4d-bl-ess-linear" => SchemeKind::Band4dLinear,
            "bl-4d-nonlinear" | "4d-bl-nonlinear" | "4d-bl-ess-nonlinear" => {
                SchemeKind::Band4dNonlinear
            }
            _ => return Err(ShapingError::CalibrationFailed(format!("unknown scheme {s}"))),
        })
    }
}

/// Everything needed to rebuild a scheme's trellis. Serializes to the TOML scheme file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub alphabet: AmplitudeAlphabet,
    pub block_length: usize,
    /// Shaped bits per block `k`.
    pub bits: u64,
    pub e_max: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<BandParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e4_max: Option<u64>,
}

impl SchemeSpec {
    pub fn profile(&self) -> Result<EnergyConstraintProfile> {
        EnergyConstraintProfile::build(
            &self.alphabet,
            self.block_length,
            self.e_max,
            self.band,
            self.e4_max,
        )
    }

    pub fn build_trellis(&self) -> Result<BoundedTrellis> {
        let t = BoundedTrellis::build(&self.alphabet, &self.profile()?)?;
        if t.max_bits() < self.bits {
            return Err(ShapingError::RateTooHigh {
                requested: self.bits,
                available: t.max_bits(),
            });
        }
        Ok(t)
    }

    /// Shaping rate `k/N` in bits per amplitude.
    pub fn rate(&self) -> f64 {
        self.bits as f64 / self.block_length as f64
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scheme spec is TOML-serializable")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ShapingError::CalibrationFailed(e.to_string()))
    }
}

/// Optional inputs to [`make_scheme`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationHints {
    /// Energy limit to calibrate at; defaults to the kind's ratio times the ESS limit.
    pub e_max: Option<u64>,
    /// Trellis evaluations allowed per search.
    pub budget: usize,
}

impl Default for CalibrationHints {
    fn default() -> Self {
        Self {
            e_max: None,
            budget: 80,
        }
    }
}

/// A calibrated scheme and its trellis.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub spec: SchemeSpec,
    pub trellis: Arc<BoundedTrellis>,
}

/// Bits per block for a target rate: `floor(rate·N)`.
pub fn bits_for_rate(block_length: usize, rate: f64) -> u64 {
    (rate * block_length as f64 + 1e-9).floor() as u64
}

pub fn make_scheme(
    kind: SchemeKind,
    alphabet: &AmplitudeAlphabet,
    block_length: usize,
    target_rate: f64,
    hints: CalibrationHints,
) -> Result<Scheme> {
    let bits = bits_for_rate(block_length, target_rate);
    let ess_emax = min_emax_for_rate(alphabet, block_length, bits, None)?;
    let e_max = match (kind, hints.e_max) {
        (SchemeKind::Ess, _) => ess_emax,
        (_, Some(e)) => e,
        (_, None) => snap_energy(
            alphabet,
            block_length,
            ess_emax as f64 * kind.default_emax_ratio(),
        ),
    };
    let (band, e4_max) = match kind {
        SchemeKind::Ess => (None, None),
        SchemeKind::KurtosisEss => (
            None,
            Some(calibrate_fourth(alphabet, block_length, bits, e_max, hints.budget)?),
        ),
        _ => {
            let g = kind.granularity().expect("banded kind");
            (
                Some(calibrate_band(alphabet, block_length, bits, e_max, g, hints.budget)?),
                None,
            )
        }
    };
    let spec = SchemeSpec {
        kind,
        alphabet: alphabet.clone(),
        block_length,
        bits,
        e_max,
        band,
        e4_max,
    };
    let trellis = spec.build_trellis()?;
    if kind != SchemeKind::Ess && trellis.max_bits() != bits {
        return Err(ShapingError::CalibrationFailed(format!(
            "{kind}: calibrated trellis holds {} bits, wanted {bits}",
            trellis.max_bits()
        )));
    }
    Ok(Scheme {
        spec,
        trellis: Arc::new(trellis),
    })
}

/// Achievable final energy closest to `target`.
pub fn snap_energy(alphabet: &AmplitudeAlphabet, block_length: usize, target: f64) -> u64 {
    achievable_energies(alphabet, block_length)
        .into_iter()
        .min_by(|a, b| {
            let da = (*a as f64 - target).abs();
            let db = (*b as f64 - target).abs();
            da.total_cmp(&db).then(a.cmp(b))
        })
        .expect("non-empty")
}

/// Resolution of the band-width search.
const WIDTH_STEP: f64 = 1.0 / 64.0;

/// Band of constant width centred on the straight line from the origin to `e_max`,
/// narrowed to the smallest width that still holds `2^bits` sequences.
fn calibrate_band(
    alphabet: &AmplitudeAlphabet,
    n: usize,
    bits: u64,
    e_max: u64,
    granularity: Granularity,
    budget: usize,
) -> Result<BandParams> {
    let slope = e_max as f64 * granularity.stride() as f64 / n as f64;
    let band = |steps: u64| {
        let w = steps as f64 * WIDTH_STEP;
        BandParams::centered(slope, -w / 2.0, w, granularity)
    };
    let target = BigUint::one() << bits;
    let ok = |steps: u64| count_for(alphabet, n, e_max, Some(band(steps)), None) >= target;

    // Width 2·e_max leaves only the sphere constraint active.
    let mut hi = ((2 * e_max) as f64 / WIDTH_STEP) as u64;
    if !ok(hi) {
        return Err(ShapingError::CalibrationFailed(format!(
            "e_max {e_max} cannot hold {bits} bits"
        )));
    }
    let mut lo = 0u64;
    let mut evaluations = 1;
    while hi - lo > 1 {
        if evaluations >= budget {
            return Err(ShapingError::CalibrationFailed("band search budget exhausted".into()));
        }
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        evaluations += 1;
    }
    Ok(band(hi))
}

/// Smallest fourth-power limit that still holds `2^bits` sequences at `e_max`.
///
/// A floating-point count brackets the limit; exact counts then confirm it (falling back
/// to an exact search should the two ever disagree).
fn calibrate_fourth(
    alphabet: &AmplitudeAlphabet,
    n: usize,
    bits: u64,
    e_max: u64,
    budget: usize,
) -> Result<u64> {
    let target = BigUint::one() << bits;
    let ok = |m: u64| count_for(alphabet, n, e_max, None, Some(m)) >= target;
    let target_f = 2f64.powf(bits as f64);
    let approx_ok = |m: u64| {
        profile_for(alphabet, n, e_max, None, Some(m))
            .is_some_and(|p| approx_count(alphabet, &p) >= target_f * (1.0 - 1e-9))
    };
    // a⁴ <= 49·a² for the largest amplitude 7, so the energy limit caps the fourth power.
    let top = (n as u64 * alphabet.fourth_powers().last().copied().expect("non-empty"))
        .min(e_max * alphabet.max_energy());
    if !ok(top) {
        return Err(ShapingError::CalibrationFailed(format!(
            "e_max {e_max} cannot hold {bits} bits"
        )));
    }
    let mut evaluations = 1;
    let bisect = |test: &dyn Fn(u64) -> bool, evaluations: &mut usize| -> Result<u64> {
        let (mut lo, mut hi) = (0u64, top);
        while hi - lo > 1 {
            if *evaluations >= budget {
                return Err(ShapingError::CalibrationFailed(
                    "fourth-power search budget exhausted".into(),
                ));
            }
            let mid = lo + (hi - lo) / 2;
            if test(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
            *evaluations += 1;
        }
        Ok(hi)
    };
    let guess = bisect(&approx_ok, &mut evaluations)?;
    if ok(guess) && (guess == 0 || !ok(guess - 1)) {
        return Ok(guess);
    }
    bisect(&ok, &mut evaluations)
}

/// Net-rate bookkeeping for PAS with a systematic FEC whose parity fills sign bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateAccounting {
    /// Shaping rate `k/N` in bits per amplitude.
    pub shaping_rate: f64,
    /// Bits per real dimension of the base constellation (3 for 64-QAM).
    pub bits_per_1d: u32,
    pub fec_rate: f64,
    pub pilot_overhead: f64,
    /// Symbols per second.
    pub baud_rate: f64,
}

impl RateAccounting {
    pub fn net_bits_per_4d(&self) -> f64 {
        net_bits_per_4d(self.shaping_rate, self.bits_per_1d, self.fec_rate)
    }

    /// Net bit rate in bit/s.
    pub fn net_bitrate(&self) -> f64 {
        self.baud_rate * self.net_bits_per_4d() / (1.0 + self.pilot_overhead)
    }
}

/// `4·(k/N) + 4 − 4·(1 − r_c)·m` information bits per 4D symbol.
pub fn net_bits_per_4d(shaping_rate: f64, bits_per_1d: u32, fec_rate: f64) -> f64 {
    4.0 * shaping_rate + 4.0 - 4.0 * (1.0 - fec_rate) * bits_per_1d as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn net_bits() {
        assert!((net_bits_per_4d(1.5, 3, 5.0 / 6.0) - 8.0).abs() < 1e-12);
        assert_eq!(net_bits_per_4d(1.5, 3, 1.0), 10.0);
        assert_eq!(net_bits_per_4d(2.0, 3, 1.0), 12.0);
    }

    #[test]
    fn net_bitrates() {
        let mut acc = RateAccounting {
            shaping_rate: 1.5,
            bits_per_1d: 3,
            fec_rate: 5.0 / 6.0,
            pilot_overhead: 0.05,
            baud_rate: 110e9,
        };
        assert!((acc.net_bitrate() / 1e9 - 838.1).abs() < 0.1);
        acc.pilot_overhead = 0.0;
        acc.baud_rate = 50e9;
        assert!((acc.net_bitrate() - 400e9).abs() < 1.0);
        acc.baud_rate = 1.0;
        assert!((acc.net_bitrate() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn binary_ess() {
        let a = AmplitudeAlphabet::new(vec![1, 3]).unwrap();
        let s = make_scheme(SchemeKind::Ess, &a, 2, 1.0, CalibrationHints::default()).unwrap();
        assert_eq!(s.spec.e_max, 18);
        assert_eq!(s.spec.bits, 2);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in SchemeKind::ALL {
            assert_eq!(k.name().parse::<SchemeKind>().unwrap(), k);
        }
        assert!("nope".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn spec_toml_round_trip() {
        let a = AmplitudeAlphabet::qam64();
        let s = make_scheme(SchemeKind::Band4dNonlinear, &a, 16, 1.5, CalibrationHints::default())
            .unwrap();
        let back = SchemeSpec::from_toml(&s.spec.to_toml()).unwrap();
        assert_eq!(back, s.spec);
        assert_eq!(back.build_trellis().unwrap(), *s.trellis);
    }

    #[test]
    fn snapping_respects_residues() {
        let a = AmplitudeAlphabet::qam64();
        assert_eq!(snap_energy(&a, 108, 996.0), 996);
        assert_eq!(snap_energy(&a, 108, 999.0), 996);
        assert_eq!(snap_energy(&a, 108, 1001.0), 1004);
    }
}
