//! Python bindings: trellis construction, the enumerative codec (indices are Python ints),
//! scheme calibration, induced statistics and the temporal energy metrics.

use std::sync::Arc;

use num_bigint::BigUint;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use esskit::codec::{decode_sequence, encode_index};
use esskit::experiments::SchemeModel;
use esskit::metrics::{self, EnergyStream};
use esskit::scheme::{self, CalibrationHints, SchemeKind, SchemeSpec};
use esskit::trellis::TrellisDump;
use esskit::{AmplitudeAlphabet, BandParams, BoundedTrellis, EnergyConstraintProfile, Granularity};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

type Band = (f64, f64, f64, f64, String);

fn parse_band(band: Option<Band>) -> Result<Option<BandParams>, String> {
    band.map(|(a, b, k1, k2, g)| {
        let granularity = match g.to_ascii_uppercase().as_str() {
            "1D" => Granularity::OneD,
            "4D" => Granularity::FourD,
            other => return Err(format!("granularity must be '1D' or '4D', got {other:?}")),
        };
        Ok(BandParams::new(a, b, k1, k2, granularity))
    })
    .transpose()
}

fn band_tuple(band: Option<BandParams>) -> Option<Band> {
    band.map(|b| {
        let g = match b.granularity {
            Granularity::OneD => "1D",
            Granularity::FourD => "4D",
        };
        (b.a, b.b, b.k1, b.k2, g.to_string())
    })
}

fn build_trellis(
    block_length: usize,
    e_max: u64,
    band: Option<Band>,
    e4_max: Option<u64>,
    amplitudes: Option<Vec<u32>>,
) -> Result<BoundedTrellis, String> {
    let alphabet = match amplitudes {
        Some(a) => AmplitudeAlphabet::new(a).map_err(|e| e.to_string())?,
        None => AmplitudeAlphabet::qam64(),
    };
    let profile = EnergyConstraintProfile::build(&alphabet, block_length, e_max, parse_band(band)?, e4_max)
        .map_err(|e| e.to_string())?;
    BoundedTrellis::build(&alphabet, &profile).map_err(|e| e.to_string())
}

fn build_scheme(kind: &str, block_length: usize, rate: f64, e_max: Option<u64>) -> Result<SchemeModel, String> {
    let kind: SchemeKind = kind.parse().map_err(|e: esskit::ShapingError| e.to_string())?;
    let hints = CalibrationHints {
        e_max,
        ..CalibrationHints::default()
    };
    SchemeModel::build(kind, &AmplitudeAlphabet::qam64(), block_length, rate, hints).map_err(|e| e.to_string())
}

/// Bounded-energy trellis with exact completion counts.
#[pyclass(name = "Trellis", module = "esskit", frozen)]
struct PyTrellis {
    inner: Arc<BoundedTrellis>,
}

#[pymethods]
impl PyTrellis {
    #[new]
    #[pyo3(signature = (block_length, e_max, band=None, e4_max=None, amplitudes=None))]
    fn new(
        block_length: usize,
        e_max: u64,
        band: Option<Band>,
        e4_max: Option<u64>,
        amplitudes: Option<Vec<u32>>,
    ) -> PyResult<Self> {
        let t = build_trellis(block_length, e_max, band, e4_max, amplitudes).map_err(value_error)?;
        Ok(Self { inner: Arc::new(t) })
    }

    #[getter]
    fn block_length(&self) -> usize {
        self.inner.block_length()
    }

    #[getter]
    fn max_bits(&self) -> u64 {
        self.inner.max_bits()
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn amplitudes(&self) -> Vec<u32> {
        self.inner.alphabet().amplitudes().to_vec()
    }

    /// Number of admissible sequences.
    fn count(&self) -> BigUint {
        self.inner.count_sequences().clone()
    }

    /// Sequence of lexicographic rank `index`.
    fn encode(&self, index: BigUint) -> PyResult<Vec<u32>> {
        encode_index(&self.inner, &index)
            .map(|s| s.into_amplitudes())
            .map_err(value_error)
    }

    /// Lexicographic rank of an admissible sequence.
    fn decode(&self, amplitudes: Vec<u32>) -> PyResult<BigUint> {
        decode_sequence(&self.inner, &amplitudes).map_err(value_error)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.to_dump()).map_err(value_error)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let dump: TrellisDump = serde_json::from_str(text).map_err(value_error)?;
        let t = BoundedTrellis::from_dump(dump).map_err(value_error)?;
        Ok(Self { inner: Arc::new(t) })
    }

    fn __repr__(&self) -> String {
        format!(
            "Trellis(block_length={}, e_max={}, states={}, max_bits={})",
            self.inner.block_length(),
            self.inner.profile().e_max(),
            self.inner.num_states(),
            self.inner.max_bits()
        )
    }
}

/// A calibrated shaping scheme with its codec and induced statistics.
#[pyclass(name = "Scheme", module = "esskit", frozen)]
struct PyScheme {
    model: SchemeModel,
}

#[pymethods]
impl PyScheme {
    #[new]
    #[pyo3(signature = (kind="ESS", block_length=108, rate=1.5, e_max=None))]
    fn new(kind: &str, block_length: usize, rate: f64, e_max: Option<u64>) -> PyResult<Self> {
        let model = build_scheme(kind, block_length, rate, e_max).map_err(value_error)?;
        Ok(Self { model })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let spec = SchemeSpec::from_toml(text).map_err(value_error)?;
        let model = SchemeModel::from_spec(spec).map_err(value_error)?;
        Ok(Self { model })
    }

    fn to_toml(&self) -> String {
        self.model.spec.to_toml()
    }

    #[getter]
    fn kind(&self) -> String {
        self.model.kind().to_string()
    }

    #[getter]
    fn block_length(&self) -> usize {
        self.model.spec.block_length
    }

    #[getter]
    fn bits(&self) -> u64 {
        self.model.spec.bits
    }

    #[getter]
    fn e_max(&self) -> u64 {
        self.model.spec.e_max
    }

    #[getter]
    fn e4_max(&self) -> Option<u64> {
        self.model.spec.e4_max
    }

    /// `(A, B, K1, K2, granularity)` or `None`.
    #[getter]
    fn band(&self) -> Option<Band> {
        band_tuple(self.model.spec.band)
    }

    fn trellis(&self) -> PyTrellis {
        PyTrellis {
            inner: Arc::new(self.model.codec.trellis().clone()),
        }
    }

    fn encode(&self, index: BigUint) -> PyResult<Vec<u32>> {
        self.model
            .codec
            .encode(&index)
            .map(|s| s.into_amplitudes())
            .map_err(value_error)
    }

    fn decode(&self, amplitudes: Vec<u32>) -> PyResult<BigUint> {
        self.model.codec.decode(&amplitudes).map_err(value_error)
    }

    fn encode_bits(&self, bits: Vec<bool>) -> PyResult<Vec<u32>> {
        self.model
            .codec
            .encode_bits(&bits)
            .map(|s| s.into_amplitudes())
            .map_err(value_error)
    }

    fn decode_bits(&self, amplitudes: Vec<u32>) -> PyResult<Vec<bool>> {
        self.model.codec.decode_bits(&amplitudes).map_err(value_error)
    }

    /// Position-averaged amplitude distribution.
    fn marginals(&self) -> Vec<f64> {
        self.model.marginals.clone()
    }

    fn moments<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let m = &self.model.moments;
        let d = PyDict::new(py);
        d.set_item("mean_1d_energy", m.mean_1d_energy)?;
        d.set_item("var_1d_energy", m.var_1d_energy)?;
        d.set_item("kurtosis_2d", m.kurtosis_2d)?;
        d.set_item("rate_loss", m.rate_loss)?;
        d.set_item("entropy", m.entropy)?;
        Ok(d)
    }

    /// Amplitudes of `blocks` uniformly indexed blocks.
    #[pyo3(signature = (blocks, seed=metrics::DEFAULT_SEED))]
    fn sample(&self, blocks: usize, seed: u64) -> Vec<u32> {
        metrics::generate_amplitudes(&self.model.codec, blocks, seed)
    }

    fn __repr__(&self) -> String {
        format!(
            "Scheme(kind={:?}, block_length={}, bits={}, e_max={})",
            self.kind(),
            self.block_length(),
            self.bits(),
            self.e_max()
        )
    }
}

/// Calibrates a scheme; same as `Scheme(kind, block_length, rate, e_max)`.
#[pyfunction]
#[pyo3(signature = (kind, block_length, rate, e_max=None))]
fn make_scheme(kind: &str, block_length: usize, rate: f64, e_max: Option<u64>) -> PyResult<PyScheme> {
    PyScheme::new(kind, block_length, rate, e_max)
}

/// 4D symbol energies of a dimension stream (groups of four amplitudes).
#[pyfunction]
fn energies_4d(amplitudes: Vec<u32>) -> Vec<f64> {
    metrics::raw_4d_energies(&amplitudes)
}

#[pyfunction]
#[pyo3(signature = (energies, window=metrics::EDI_WINDOW))]
fn edi(energies: Vec<f64>, window: usize) -> PyResult<f64> {
    metrics::edi(&EnergyStream::from_raw(&energies, 1), window).map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (energies, window=metrics::KURTOSIS_WINDOW))]
fn windowed_kurtosis(energies: Vec<f64>, window: usize) -> PyResult<f64> {
    metrics::windowed_kurtosis(&EnergyStream::from_raw(&energies, 1), window).map_err(value_error)
}

/// Smallest sphere energy limit holding `2^bits` sequences of length `block_length`.
#[pyfunction]
fn min_emax_for_rate(block_length: usize, bits: u64) -> PyResult<u64> {
    esskit::stats::min_emax_for_rate(&AmplitudeAlphabet::qam64(), block_length, bits, None)
        .map_err(value_error)
}

/// Net information bits per 4D symbol of PAS with shaping rate `k/N`.
#[pyfunction]
#[pyo3(signature = (shaping_rate, fec_rate, bits_per_1d=3))]
fn net_bits_per_4d(shaping_rate: f64, fec_rate: f64, bits_per_1d: u32) -> f64 {
    scheme::net_bits_per_4d(shaping_rate, bits_per_1d, fec_rate)
}

#[pymodule]
#[pyo3(name = "esskit")]
fn esskit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrellis>()?;
    m.add_class::<PyScheme>()?;
    m.add_function(wrap_pyfunction!(make_scheme, m)?)?;
    m.add_function(wrap_pyfunction!(energies_4d, m)?)?;
    m.add_function(wrap_pyfunction!(edi, m)?)?;
    m.add_function(wrap_pyfunction!(windowed_kurtosis, m)?)?;
    m.add_function(wrap_pyfunction!(min_emax_for_rate, m)?)?;
    m.add_function(wrap_pyfunction!(net_bits_per_4d, m)?)?;
    m.add("EDI_WINDOW", metrics::EDI_WINDOW)?;
    m.add("KURTOSIS_WINDOW", metrics::KURTOSIS_WINDOW)?;
    m.add("SCHEMES", SchemeKind::ALL.map(|k| k.name()).to_vec())?;
    Ok(())
}
