//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use esskit::channel::{build_wdm_field, frequency_grid, Field, FftKit, LinkScenario};
use esskit::pas::Symbol4d;
use esskit::{AmplitudeAlphabet, BandParams, BoundedTrellis, EnergyConstraintProfile, Granularity};
use num_bigint::BigUint;
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const AMPS: [u64; 4] = [1, 3, 5, 7];

/// Constraints stated directly, without going through the profile type.
#[derive(Debug, Clone, Copy)]
pub struct Raw {
    pub n: usize,
    pub e_max: u64,
    /// `(A, B, K1, K2, stride)`.
    pub band: Option<(f64, f64, f64, f64, usize)>,
    pub e4_max: Option<u64>,
}

impl Raw {
    fn prefix_ok(&self, len: usize, e: u64, e4: u64) -> bool {
        if e > self.e_max || self.e4_max.is_some_and(|m| e4 > m) {
            return false;
        }
        match self.band {
            Some((a, b, k1, k2, stride)) if len % stride == 0 => {
                let i = (len / stride) as f64;
                let e = e as f64;
                a + i * k1 <= e && e <= b + i * k2
            }
            _ => true,
        }
    }

    /// Depth-first enumeration of every admissible sequence.
    pub fn brute_count(&self) -> u64 {
        fn go(raw: &Raw, len: usize, e: u64, e4: u64) -> u64 {
            if len == raw.n {
                return 1;
            }
            AMPS.iter()
                .map(|&a| (e + a * a, e4 + a.pow(4)))
                .filter(|&(e, e4)| raw.prefix_ok(len + 1, e, e4))
                .map(|(e, e4)| go(raw, len + 1, e, e4))
                .sum()
        }
        go(self, 0, 0, 0)
    }

    pub fn trellis_count(&self) -> BigUint {
        let alphabet = AmplitudeAlphabet::qam64();
        let band = self.band.map(|(a, b, k1, k2, stride)| {
            let g = if stride == 1 { Granularity::OneD } else { Granularity::FourD };
            BandParams::new(a, b, k1, k2, g)
        });
        EnergyConstraintProfile::build(&alphabet, self.n, self.e_max, band, self.e4_max)
            .and_then(|p| BoundedTrellis::build(&alphabet, &p))
            .map(|t| t.count_sequences().clone())
            // An empty admissible set is reported as an error; its count is zero.
            .unwrap_or_default()
    }
}

/// Quarter-integer reals are exact in binary, so the float band comparison is exact.
fn quarter(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo..hi) * 4.0).round() / 4.0
}

pub fn random_raw(rng: &mut ChaCha8Rng) -> Raw {
    let n = rng.random_range(1..=10);
    let e_max = rng.random_range(n as u64..=49 * n as u64);
    let band = match rng.random_range(0..3) {
        0 => None,
        g => {
            let stride = if g == 1 { 1 } else { 4 };
            let slope = e_max as f64 * stride as f64 / n as f64;
            let k1 = quarter(rng, 0.5 * slope, 1.2 * slope);
            let k2 = quarter(rng, 0.8 * slope, 1.5 * slope);
            let a = quarter(rng, -2.0 * slope, 0.5 * slope);
            let b = a + quarter(rng, 0.0, 2.0 * slope);
            Some((a, b, k1, k2, stride))
        }
    };
    let e4_max = rng
        .random_bool(0.4)
        .then(|| rng.random_range(n as u64..=2401 * n as u64));
    Raw { n, e_max, band, e4_max }
}

/// 4D symbols with i.i.d. amplitudes drawn from `probs` over {1,3,5,7} and uniform signs.
pub fn iid_symbols(probs: &[f64], count: usize, seed: u64) -> Vec<Symbol4d> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = WeightedIndex::new(probs).unwrap();
    let mut dim = || {
        let a = AMPS[rng.sample(&pick)] as f64;
        if rng.random::<bool>() { a } else { -a }
    };
    (0..count)
        .map(|_| {
            let v = [dim(), dim(), dim(), dim()];
            [Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3])]
        })
        .collect()
}

/// Adds circular Gaussian noise of total variance `var` per complex sample.
pub fn add_awgn(tx: &[Symbol4d], var: f64, seed: u64) -> Vec<Symbol4d> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (var / 2.0).sqrt();
    let mut g = || {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * s
    };
    tx.iter().map(|t| [t[0] + g(), t[1] + g()]).collect()
}

/// Mean energy per complex sample of amplitude distribution `probs`.
pub fn symbol_energy(probs: &[f64]) -> f64 {
    2.0 * probs.iter().zip(AMPS).map(|(p, a)| p * (a * a) as f64).sum::<f64>()
}

/// Mismatched-decoding rate per 4D symbol with a Gaussian metric of known variance,
/// evaluated jointly over the 64-point 2D constellation (no per-dimension factoring).
pub fn air_oracle(probs: &[f64], rate_loss: f64, snr_db: f64, count: usize, seed: u64) -> f64 {
    let var = symbol_energy(probs) / 10f64.powf(snr_db / 10.0);
    let tx = iid_symbols(probs, count, seed);
    let rx = add_awgn(&tx, var, seed ^ 0x9e37);
    let mut points = Vec::new();
    for (i, &pi) in probs.iter().enumerate() {
        for (q, &pq) in probs.iter().enumerate() {
            for (si, sq) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let x = Complex64::new(si * AMPS[i] as f64, sq * AMPS[q] as f64);
                points.push((x, pi * pq / 4.0));
            }
        }
    }
    let mut total = 0.0;
    for (r, t) in rx.iter().zip(&tx) {
        for pol in 0..2 {
            let (y, x) = (r[pol], t[pol]);
            let own = -(y - x).norm_sqr() / var;
            let terms: Vec<f64> = points.iter().map(|(v, _)| -(y - v).norm_sqr() / var).collect();
            let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = terms.iter().zip(&points).map(|(e, (_, p))| p * (e - top).exp()).sum();
            // log2 q(y|x) / Σ P(x') q(y|x'), with the normalization of q cancelling.
            total += (own - top - denom.ln()) / std::f64::consts::LN_2;
        }
    }
    // Two 2D samples per 4D symbol.
    total / count as f64 - 4.0 * rate_loss
}

/// Undoes the accumulated dispersion of `length_km` of fiber in the frequency domain.
pub fn compensate_dispersion(field: &mut Field, beta2: f64, length_km: f64, fft: &mut FftKit) {
    let freqs = frequency_grid(field.len(), field.dt_ps);
    for pol in [&mut field.x, &mut field.y] {
        fft.forward(pol);
        for (v, f) in pol.iter_mut().zip(&freqs) {
            let w = 2.0 * std::f64::consts::PI * f;
            *v *= Complex64::cis(-beta2 / 2.0 * w * w * length_km);
        }
        fft.inverse(pol);
    }
}

/// `‖a − b‖ / ‖b‖` over both polarizations.
pub fn relative_error(a: &Field, b: &Field) -> f64 {
    let diff: f64 = a.x.iter().zip(&b.x).chain(a.y.iter().zip(&b.y)).map(|(p, q)| (p - q).norm_sqr()).sum();
    (diff / b.energy()).sqrt()
}

/// A WDM field of uniform 64-QAM channels for `scenario`.
pub fn uniform_wdm(scenario: &LinkScenario, seed: u64, fft: &mut FftKit) -> Field {
    let channels: Vec<Vec<Symbol4d>> = (0..scenario.num_channels)
        .map(|c| iid_symbols(&[0.25; 4], scenario.symbols_per_channel, seed + c as u64))
        .collect();
    build_wdm_field(scenario, &channels, fft).unwrap()
}

/// RMS width of `|x|²` on a grid centred at sample `n/2`.
pub fn rms_width(field: &Field) -> f64 {
    let n = field.len() as f64;
    let t = |k: usize| (k as f64 - n / 2.0) * field.dt_ps;
    let w: f64 = field.x.iter().map(|v| v.norm_sqr()).sum();
    let m: f64 = field.x.iter().enumerate().map(|(k, v)| t(k) * v.norm_sqr()).sum::<f64>() / w;
    (field.x.iter().enumerate().map(|(k, v)| (t(k) - m).powi(2) * v.norm_sqr()).sum::<f64>() / w).sqrt()
}

/// Unit-peak Gaussian pulse `exp(−t²/2T0²)` on X, centred at sample `n/2`.
pub fn gaussian_pulse(n: usize, dt: f64, t0: f64) -> Field {
    let x = (0..n)
        .map(|k| {
            let t = (k as f64 - n as f64 / 2.0) * dt;
            Complex64::new((-t * t / (2.0 * t0 * t0)).exp(), 0.0)
        })
        .collect();
    Field { x, y: vec![Complex64::default(); n], dt_ps: dt }
}
