use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapingError};

/// Ordered set of odd positive amplitude levels, e.g. `{1, 3, 5, 7}` for 64-QAM.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct AmplitudeAlphabet {
    amplitudes: Vec<u32>,
    energies: Vec<u64>,
    fourth_powers: Vec<u64>,
}

impl AmplitudeAlphabet {
    pub fn new(amplitudes: Vec<u32>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(ShapingError::InvalidAlphabet("empty".into()));
        }
        if amplitudes.iter().any(|&a| a % 2 == 0) {
            return Err(ShapingError::InvalidAlphabet(
                "amplitudes must be odd and positive".into(),
            ));
        }
        if amplitudes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ShapingError::InvalidAlphabet(
                "amplitudes must be strictly increasing".into(),
            ));
        }
        let energies = amplitudes.iter().map(|&a| u64::from(a).pow(2)).collect();
        let fourth_powers = amplitudes.iter().map(|&a| u64::from(a).pow(4)).collect();
        Ok(Self {
            amplitudes,
            energies,
            fourth_powers,
        })
    }

    /// The `2^m`-ASK amplitude set `{1, 3, ..., 2^m - 1}`.
    pub fn ask(bits_per_dim: u32) -> Result<Self> {
        if bits_per_dim < 2 {
            return Err(ShapingError::InvalidAlphabet(
                "need at least one amplitude bit".into(),
            ));
        }
        let levels = 1u32 << (bits_per_dim - 1);
        Self::new((0..levels).map(|i| 2 * i + 1).collect())
    }

    /// The 64-QAM / 8-ASK alphabet `{1, 3, 5, 7}`.
    pub fn qam64() -> Self {
        Self::ask(3).expect("8-ASK is valid")
    }

    pub fn amplitudes(&self) -> &[u32] {
        &self.amplitudes
    }

    pub fn energies(&self) -> &[u64] {
        &self.energies
    }

    pub fn fourth_powers(&self) -> &[u64] {
        &self.fourth_powers
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn max_amplitude(&self) -> u32 {
        *self.amplitudes.last().expect("non-empty")
    }

    pub fn min_energy(&self) -> u64 {
        self.energies[0]
    }

    pub fn max_energy(&self) -> u64 {
        *self.energies.last().expect("non-empty")
    }

    /// Position of `amplitude` in the alphabet.
    pub fn index_of(&self, amplitude: u32) -> Option<usize> {
        self.amplitudes.binary_search(&amplitude).ok()
    }
}

impl TryFrom<Vec<u32>> for AmplitudeAlphabet {
    type Error = ShapingError;

    fn try_from(value: Vec<u32>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<AmplitudeAlphabet> for Vec<u32> {
    fn from(value: AmplitudeAlphabet) -> Self {
        value.amplitudes
    }
}

impl Default for AmplitudeAlphabet {
    fn default() -> Self {
        Self::qam64()
    }
}
