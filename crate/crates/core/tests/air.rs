mod common;

use common::{add_awgn, air_oracle, iid_symbols, symbol_energy};
use esskit::dsp::{air_4d, snr_db};
use esskit::stats::{exact_moments, induced_marginals};
use esskit::{AmplitudeAlphabet, BoundedTrellis, EnergyConstraintProfile};

const SYMBOLS: usize = 1 << 16;

fn ess_108() -> (Vec<f64>, f64) {
    let alphabet = AmplitudeAlphabet::qam64();
    let p = EnergyConstraintProfile::sphere(&alphabet, 108, 860).unwrap();
    let t = BoundedTrellis::build(&alphabet, &p).unwrap();
    let m = induced_marginals(&t, 162).unwrap().average;
    (m, exact_moments(&t, 162).unwrap().rate_loss)
}

fn estimated(probs: &[f64], rate_loss: f64, snr: f64, seed: u64) -> f64 {
    let tx = iid_symbols(probs, SYMBOLS, seed);
    let var = symbol_energy(probs) / 10f64.powf(snr / 10.0);
    let rx = add_awgn(&tx, var, seed + 1);
    assert!((snr_db(&rx, &tx).unwrap() - snr).abs() < 0.05);
    air_4d(&rx, &tx, &AmplitudeAlphabet::qam64(), probs, rate_loss).unwrap()
}

#[test]
fn shaped_air_matches_joint_oracle() {
    let (probs, rl) = ess_108();
    for snr in [8.0, 14.0, 20.0] {
        let got = estimated(&probs, rl, snr, 10);
        let want = air_oracle(&probs, rl, snr, SYMBOLS, 77);
        assert!((got - want).abs() < 0.02, "{snr} dB: {got} vs {want}");
    }
}

#[test]
fn uniform_air_saturates_and_orders() {
    let probs = [0.25; 4];
    let low = estimated(&probs, 0.0, 8.0, 20);
    let high = estimated(&probs, 0.0, 30.0, 22);
    assert!(low < high);
    assert!((high - 12.0).abs() < 0.01, "{high}");
    // Below capacity of the real AWGN channel at the same SNR, 2·2·log2(1 + snr).
    assert!(low < 2.0 * (1.0 + 10f64.powf(0.8)).log2());
}
