use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use super::{frequency_grid, LinkScenario, StepPolicy};
use crate::error::SignalError;

/// Sampled dual-polarization complex envelope (√W).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
    pub dt_ps: f64,
}

impl Field {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Time-averaged total power, W.
    pub fn mean_power(&self) -> f64 {
        let s: f64 = self.x.iter().chain(&self.y).map(|v| v.norm_sqr()).sum();
        s / self.len() as f64
    }

    /// Energy, W·ps.
    pub fn energy(&self) -> f64 {
        self.mean_power() * self.len() as f64 * self.dt_ps
    }
}

/// FFT helper with cached plans; `inverse` is normalized.
pub struct FftKit {
    planner: FftPlanner<f64>,
    scratch: Vec<Complex64>,
}

impl Default for FftKit {
    fn default() -> Self {
        Self::new()
    }
}

impl FftKit {
    pub fn new() -> Self {
        Self {
            planner: FftPlanner::new(),
            scratch: Vec::new(),
        }
    }

    pub fn forward(&mut self, buf: &mut [Complex64]) {
        let plan = self.planner.plan_fft_forward(buf.len());
        self.scratch
            .resize(plan.get_inplace_scratch_len(), Complex64::default());
        plan.process_with_scratch(buf, &mut self.scratch);
    }

    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        let plan = self.planner.plan_fft_inverse(buf.len());
        self.scratch
            .resize(plan.get_inplace_scratch_len(), Complex64::default());
        plan.process_with_scratch(buf, &mut self.scratch);
        let norm = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|v| *v *= norm);
    }
}

/// Fiber coefficients in simulation units plus the squared angular-frequency grid.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub beta2: f64,
    pub alpha: f64,
    pub gamma: f64,
    omega2: Vec<f64>,
}

impl Propagation {
    pub fn new(beta2: f64, alpha: f64, gamma: f64, n: usize, dt_ps: f64) -> Self {
        let omega2 = frequency_grid(n, dt_ps)
            .into_iter()
            .map(|f| (2.0 * PI * f).powi(2))
            .collect();
        Self {
            beta2,
            alpha,
            gamma,
            omega2,
        }
    }

    pub fn for_scenario(s: &LinkScenario, n: usize, dt_ps: f64) -> Self {
        Self::new(s.beta2_ps2_per_km(), s.alpha_per_km(), s.gamma_per_w_km, n, dt_ps)
    }

    fn linear(&self, field: &mut Field, len: f64, fft: &mut FftKit, cache: &mut LinearCache) {
        if len == 0.0 {
            return;
        }
        if cache.len != len {
            let loss = (-self.alpha * len / 2.0).exp();
            cache.factor.clear();
            cache.factor.extend(
                self.omega2
                    .iter()
                    .map(|w2| Complex64::from_polar(loss, self.beta2 / 2.0 * w2 * len)),
            );
            cache.len = len;
        }
        for pol in [&mut field.x, &mut field.y] {
            fft.forward(pol);
            pol.iter_mut().zip(&cache.factor).for_each(|(v, f)| *v *= f);
            fft.inverse(pol);
        }
    }

    fn nonlinear(&self, field: &mut Field, h: f64) {
        let k = 8.0 / 9.0 * self.gamma * h;
        for (ex, ey) in field.x.iter_mut().zip(field.y.iter_mut()) {
            let rot = Complex64::cis(k * (ex.norm_sqr() + ey.norm_sqr()));
            *ex *= rot;
            *ey *= rot;
        }
    }
}

#[derive(Default)]
struct LinearCache {
    len: f64,
    factor: Vec<Complex64>,
}

/// Exact dispersion operator `exp(i β₂ ω² z / 2)` for one squared angular frequency.
pub fn dispersion_factor(beta2: f64, omega2: f64, z: f64) -> Complex64 {
    Complex64::cis(beta2 / 2.0 * omega2 * z)
}

/// Step sizes for one span: equal nonlinear phase per step along the decaying power
/// profile, then any step longer than the cap is split evenly.
pub fn span_steps(
    length: f64,
    alpha: f64,
    gamma: f64,
    power: f64,
    policy: &StepPolicy,
) -> Result<Vec<f64>, SignalError> {
    policy.validate()?;
    if !(length > 0.0) {
        return Err(SignalError::Config("span length must be positive".into()));
    }
    let decay = 1.0 - (-alpha * length).exp();
    let l_eff = if alpha > 0.0 { decay / alpha } else { length };
    let phase = 8.0 / 9.0 * gamma * power * l_eff;
    let n_nl = ((phase / policy.max_nl_phase_rad).ceil() as usize).max(1);
    let position = |k: usize| {
        if k == n_nl {
            length
        } else if alpha > 0.0 {
            -(1.0 - k as f64 * decay / n_nl as f64).ln() / alpha
        } else {
            length * k as f64 / n_nl as f64
        }
    };
    let mut steps = Vec::with_capacity(n_nl);
    for k in 0..n_nl {
        let h = position(k + 1) - position(k);
        let parts = ((h / policy.max_step_km).ceil() as usize).max(1);
        steps.extend(std::iter::repeat_n(h / parts as f64, parts));
    }
    Ok(steps)
}

/// Symmetric split-step over one span with adjacent half linear steps merged.
pub fn propagate_span(field: &mut Field, prop: &Propagation, steps: &[f64], fft: &mut FftKit) {
    let mut cache = LinearCache::default();
    let mut pending = 0.0;
    for &h in steps {
        prop.linear(field, pending + h / 2.0, fft, &mut cache);
        prop.nonlinear(field, h);
        pending = h / 2.0;
    }
    prop.linear(field, pending, fft, &mut cache);
}

/// Lumped amplifier: power gain `gain` followed by white ASE of the given one-sided
/// per-polarization PSD (W/Hz).
pub fn amplify<R: Rng>(field: &mut Field, gain: f64, psd_per_pol: f64, rng: Option<&mut R>) {
    let g = gain.sqrt();
    field.x.iter_mut().chain(field.y.iter_mut()).for_each(|v| *v *= g);
    if let Some(rng) = rng {
        let fs_hz = 1e12 / field.dt_ps;
        let sigma = (psd_per_pol * fs_hz / 2.0).sqrt();
        for v in field.x.iter_mut().chain(field.y.iter_mut()) {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re, im) * sigma;
        }
    }
}

/// Propagates through every span of the link, amplifying after each.
pub fn propagate<R: Rng>(
    field: &mut Field,
    scenario: &LinkScenario,
    fft: &mut FftKit,
    rng: &mut R,
) -> Result<(), SignalError> {
    scenario.validate()?;
    let prop = Propagation::for_scenario(scenario, field.len(), field.dt_ps);
    let psd = scenario.ase_psd_per_pol();
    for _ in 0..scenario.spans {
        let steps = span_steps(
            scenario.span_length_km,
            prop.alpha,
            prop.gamma,
            field.mean_power(),
            &scenario.step,
        )?;
        propagate_span(field, &prop, &steps, fft);
        amplify(
            field,
            scenario.span_gain(),
            psd,
            scenario.ase_noise.then_some(&mut *rng),
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_field(n: usize, dt: f64, power: f64, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = || {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * (power / 4.0).sqrt()
        };
        let x = (0..n).map(|_| g()).collect();
        let y = (0..n).map(|_| g()).collect();
        Field { x, y, dt_ps: dt }
    }

    #[test]
    fn steps_cover_span() {
        let policy = StepPolicy::default();
        let s = span_steps(80.0, 0.046, 1.3, 0.02, &policy).unwrap();
        assert!((s.iter().sum::<f64>() - 80.0).abs() < 1e-9);
        assert!(s.iter().all(|&h| h <= 5.0 + 1e-12));
        // Logarithmic: early steps are shorter.
        assert!(s[0] < s[s.len() - 1]);
        let finer = span_steps(80.0, 0.046, 1.3, 0.02, &policy.refined(2.0)).unwrap();
        assert!(finer.len() >= 2 * s.len() - 1);
    }

    #[test]
    fn linear_invertibility_without_nonlinearity() {
        let mut fft = FftKit::new();
        let start = random_field(1024, 1.0 / 300e-3, 1e-2, 1);
        let mut f = start.clone();
        let fwd = Propagation::new(-21.7, 0.0, 0.0, f.len(), f.dt_ps);
        let bwd = Propagation::new(21.7, 0.0, 0.0, f.len(), f.dt_ps);
        let steps = vec![10.0; 8];
        propagate_span(&mut f, &fwd, &steps, &mut fft);
        propagate_span(&mut f, &bwd, &steps, &mut fft);
        let err: f64 = f.x.iter().zip(&start.x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>()
            / start.x.iter().map(|v| v.norm_sqr()).sum::<f64>();
        assert!(err.sqrt() < 1e-6);
    }

    #[test]
    fn lossless_energy_conservation() {
        let mut fft = FftKit::new();
        let mut f = random_field(2048, 1.0 / 300e-3, 0.05, 2);
        let e0 = f.energy();
        let prop = Propagation::new(-21.7, 0.0, 1.3, f.len(), f.dt_ps);
        let steps = span_steps(100.0, 0.0, 1.3, 0.05, &StepPolicy::default()).unwrap();
        propagate_span(&mut f, &prop, &steps, &mut fft);
        assert!(((f.energy() - e0) / e0).abs() < 1e-6);
    }

    #[test]
    fn gaussian_pulse_broadening() {
        // RMS width grows as sqrt(1 + (z/L_D)^2) with L_D = T0^2/|β2|.
        let (n, dt, t0, beta2, z) = (4096, 0.25, 10.0, -21.68, 8.0);
        let t = |k: usize| (k as f64 - n as f64 / 2.0) * dt;
        let x: Vec<Complex64> = (0..n)
            .map(|k| Complex64::new((-t(k).powi(2) / (2.0 * t0 * t0)).exp(), 0.0))
            .collect();
        let mut f = Field { y: vec![Complex64::default(); n], x, dt_ps: dt };
        let rms = |f: &Field| {
            let w: f64 = f.x.iter().map(|v| v.norm_sqr()).sum();
            let m: f64 = f.x.iter().enumerate().map(|(k, v)| t(k) * v.norm_sqr()).sum::<f64>() / w;
            (f.x.iter().enumerate().map(|(k, v)| (t(k) - m).powi(2) * v.norm_sqr()).sum::<f64>() / w).sqrt()
        };
        let w0 = rms(&f);
        let prop = Propagation::new(beta2, 0.0, 0.0, n, dt);
        propagate_span(&mut f, &prop, &[z / 4.0; 4], &mut FftKit::new());
        let ld = t0 * t0 / beta2.abs();
        let expected = w0 * (1.0 + (z / ld).powi(2)).sqrt();
        assert!(((rms(&f) - expected) / expected).abs() < 5e-3);
    }

    #[test]
    fn amplifier_noise_power() {
        let mut f = Field { x: vec![Complex64::default(); 1 << 16], y: vec![Complex64::default(); 1 << 16], dt_ps: 2.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        amplify(&mut f, 10.0, 1e-18, Some(&mut rng));
        let per_pol = f.x.iter().map(|v| v.norm_sqr()).sum::<f64>() / f.len() as f64;
        let expected = 1e-18 * 1e12 / 2.0;
        assert!((per_pol / expected - 1.0).abs() < 0.02);
    }
}
