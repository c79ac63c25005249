//! Bounded-energy amplitude trellis.
//!
//! Layer `n` holds every state `(e, e4)` reachable after `n` amplitudes from which at least
//! one admissible completion to position `N` exists, together with the exact number of
//! such completions `T_n(e, e4)`. States that cannot be completed are dropped, so every
//! stored count is positive.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::alphabet::AmplitudeAlphabet;
use crate::error::{Result, ShapingError};
use crate::profile::EnergyConstraintProfile;

/// Accumulated energy and, for kurtosis-limited profiles, accumulated fourth power.
///
/// `fourth` stays zero when the profile carries no fourth-power bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct State {
    pub energy: u64,
    pub fourth: u64,
}

impl State {
    pub const ORIGIN: State = State {
        energy: 0,
        fourth: 0,
    };
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Layer {
    states: Vec<State>,
    counts: Vec<BigUint>,
}

impl Layer {
    fn position(&self, state: State) -> Option<usize> {
        self.states.binary_search(&state).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundedTrellis {
    alphabet: AmplitudeAlphabet,
    profile: EnergyConstraintProfile,
    tracks_fourth: bool,
    layers: Vec<Layer>,
}

impl BoundedTrellis {
    /// Builds the trellis by a forward reachability sweep followed by the backward
    /// completion-count recursion.
    pub fn build(alphabet: &AmplitudeAlphabet, profile: &EnergyConstraintProfile) -> Result<Self> {
        let n_max = profile.block_length();
        let tracks_fourth = profile.e4_max().is_some();

        let mut reachable: Vec<Vec<State>> = Vec::with_capacity(n_max + 1);
        reachable.push(vec![State::ORIGIN]);
        for n in 0..n_max {
            let mut next = Vec::with_capacity(reachable[n].len() * alphabet.len());
            for &s in &reachable[n] {
                for (&e, &e4) in alphabet.energies().iter().zip(alphabet.fourth_powers()) {
                    let t = step(s, e, e4, tracks_fourth);
                    if profile.admits(n + 1, t.energy, t.fourth) {
                        next.push(t);
                    }
                }
            }
            next.sort_unstable();
            next.dedup();
            if next.is_empty() {
                return Err(ShapingError::EmptyTrellis);
            }
            reachable.push(next);
        }

        let mut layers = vec![Layer::default(); n_max + 1];
        let last = reachable.pop().expect("layer N exists");
        layers[n_max] = Layer {
            counts: vec![BigUint::one(); last.len()],
            states: last,
        };
        for n in (0..n_max).rev() {
            let candidates = reachable.pop().expect("layer n exists");
            let succ = &layers[n + 1];
            let mut states = Vec::with_capacity(candidates.len());
            let mut counts = Vec::with_capacity(candidates.len());
            for s in candidates {
                let mut total = BigUint::zero();
                for (&e, &e4) in alphabet.energies().iter().zip(alphabet.fourth_powers()) {
                    if let Some(i) = succ.position(step(s, e, e4, tracks_fourth)) {
                        total += &succ.counts[i];
                    }
                }
                if !total.is_zero() {
                    states.push(s);
                    counts.push(total);
                }
            }
            if states.is_empty() {
                return Err(ShapingError::EmptyTrellis);
            }
            layers[n] = Layer { states, counts };
        }

        Ok(Self {
            alphabet: alphabet.clone(),
            profile: profile.clone(),
            tracks_fourth,
            layers,
        })
    }

    pub fn alphabet(&self) -> &AmplitudeAlphabet {
        &self.alphabet
    }

    pub fn profile(&self) -> &EnergyConstraintProfile {
        &self.profile
    }

    pub fn block_length(&self) -> usize {
        self.profile.block_length()
    }

    pub fn tracks_fourth(&self) -> bool {
        self.tracks_fourth
    }

    /// Number of admissible length-`N` sequences.
    pub fn count_sequences(&self) -> &BigUint {
        &self.layers[0].counts[0]
    }

    /// `floor(log2(total))`: the largest index width the trellis can serve.
    pub fn max_bits(&self) -> u64 {
        self.count_sequences().bits() - 1
    }

    /// Completion count `T_n` of `state`, or `None` when the state is not in the trellis.
    pub fn count(&self, n: usize, state: State) -> Option<&BigUint> {
        let layer = self.layers.get(n)?;
        layer.position(state).map(|i| &layer.counts[i])
    }

    /// States stored at position `n` with their completion counts, in ascending order.
    pub fn layer(&self, n: usize) -> impl Iterator<Item = (State, &BigUint)> + '_ {
        let layer = &self.layers[n];
        layer.states.iter().copied().zip(layer.counts.iter())
    }

    pub fn layer_len(&self, n: usize) -> usize {
        self.layers[n].states.len()
    }

    /// Total number of stored states across all positions.
    pub fn num_states(&self) -> usize {
        self.layers.iter().map(|l| l.states.len()).sum()
    }

    /// Successor of `state` on amplitude index `a`.
    pub fn successor(&self, state: State, a: usize) -> State {
        step(
            state,
            self.alphabet.energies()[a],
            self.alphabet.fourth_powers()[a],
            self.tracks_fourth,
        )
    }

    /// Writes the trellis as a versioned JSON document with decimal-string counts.
    pub fn to_dump(&self) -> TrellisDump {
        TrellisDump {
            format: DUMP_FORMAT.to_string(),
            version: DUMP_VERSION,
            alphabet: self.alphabet.clone(),
            profile: self.profile.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| {
                    l.states
                        .iter()
                        .zip(&l.counts)
                        .map(|(s, c)| DumpState {
                            energy: s.energy,
                            fourth: s.fourth,
                            count: c.to_str_radix(10),
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// Restores a trellis from a dump, checking the count recursion and the profile.
    pub fn from_dump(dump: TrellisDump) -> Result<Self> {
        if dump.format != DUMP_FORMAT || dump.version != DUMP_VERSION {
            return Err(ShapingError::MalformedDump(format!(
                "unsupported format {} v{}",
                dump.format, dump.version
            )));
        }
        let n_max = dump.profile.block_length();
        if dump.layers.len() != n_max + 1 {
            return Err(ShapingError::MalformedDump("wrong number of layers".into()));
        }
        let mut layers = Vec::with_capacity(n_max + 1);
        for (n, raw) in dump.layers.into_iter().enumerate() {
            let mut layer = Layer::default();
            for d in raw {
                let s = State {
                    energy: d.energy,
                    fourth: d.fourth,
                };
                if !dump.profile.admits(n, s.energy, s.fourth) {
                    return Err(ShapingError::MalformedDump(format!(
                        "state {s:?} at position {n} violates the profile"
                    )));
                }
                let c = BigUint::parse_bytes(d.count.as_bytes(), 10)
                    .ok_or_else(|| ShapingError::MalformedDump(format!("bad count {}", d.count)))?;
                layer.states.push(s);
                layer.counts.push(c);
            }
            if layer.states.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ShapingError::MalformedDump(format!("layer {n} is not sorted")));
            }
            layers.push(layer);
        }
        let trellis = Self {
            tracks_fourth: dump.profile.e4_max().is_some(),
            alphabet: dump.alphabet,
            profile: dump.profile,
            layers,
        };
        if trellis.layers[0].states != [State::ORIGIN] {
            return Err(ShapingError::MalformedDump("layer 0 must hold only the origin".into()));
        }
        if let Some(n) = trellis.recursion_violation() {
            return Err(ShapingError::MalformedDump(format!(
                "count recursion broken at position {n}"
            )));
        }
        Ok(trellis)
    }

    /// First position whose counts do not equal the sum of their successor counts.
    pub fn recursion_violation(&self) -> Option<usize> {
        let n_max = self.block_length();
        if self.layers[n_max].counts.iter().any(|c| !c.is_one()) {
            return Some(n_max);
        }
        for n in 0..n_max {
            for (s, c) in self.layer(n) {
                let mut total = BigUint::zero();
                for a in 0..self.alphabet.len() {
                    if let Some(t) = self.count(n + 1, self.successor(s, a)) {
                        total += t;
                    }
                }
                if &total != c || total.is_zero() {
                    return Some(n);
                }
            }
        }
        None
    }
}

fn step(s: State, e: u64, e4: u64, tracks_fourth: bool) -> State {
    State {
        energy: s.energy + e,
        fourth: if tracks_fourth { s.fourth + e4 } else { 0 },
    }
}

const DUMP_FORMAT: &str = "esskit-trellis";
const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpState {
    pub energy: u64,
    pub fourth: u64,
    pub count: String,
}

/// Serialized form of a [`BoundedTrellis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrellisDump {
    pub format: String,
    pub version: u32,
    pub alphabet: AmplitudeAlphabet,
    pub profile: EnergyConstraintProfile,
    pub layers: Vec<Vec<DumpState>>,
}
