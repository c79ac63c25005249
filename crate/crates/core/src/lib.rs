//! Energy-bounded enumerative sphere shaping with exact trellis statistics, temporal
//! energy metrics, PDM-QAM frame mapping and a desk-scale WDM fiber simulator.

pub mod alphabet;
pub mod channel;
pub mod codec;
pub mod dsp;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod pas;
pub mod profile;
pub mod scheme;
pub mod stats;
pub mod trellis;

pub use alphabet::AmplitudeAlphabet;
pub use codec::{AmplitudeSequence, EnumerativeCodec};
pub use error::{ExperimentError, Result, ShapingError, SignalError};
pub use profile::{BandParams, EnergyConstraintProfile, Granularity};
pub use trellis::{BoundedTrellis, State};
