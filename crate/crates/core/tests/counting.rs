//! Trellis path counts against brute-force enumeration of amplitude sequences.

mod common;

use common::{random_raw, Raw};
use esskit::{AmplitudeAlphabet, BandParams, BoundedTrellis, EnergyConstraintProfile, Granularity};
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn counts_match_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut nonzero = 0;
    for case in 0..100 {
        let raw = random_raw(&mut rng);
        let want = raw.brute_count();
        let got = raw.trellis_count();
        assert_eq!(got, BigUint::from(want), "case {case}: {raw:?}");
        nonzero += usize::from(want > 0);
    }
    // The generator has to exercise non-trivial sets, not only empty ones.
    assert!(nonzero >= 60, "only {nonzero} non-empty profiles");
}

#[test]
fn unconstrained_count_is_four_to_the_n() {
    let alphabet = AmplitudeAlphabet::qam64();
    for n in 1..=12 {
        let p = EnergyConstraintProfile::sphere(&alphabet, n, 49 * n as u64).unwrap();
        let t = BoundedTrellis::build(&alphabet, &p).unwrap();
        assert_eq!(*t.count_sequences(), BigUint::from(4u32).pow(n as u32));
    }
}

#[test]
fn toy_band_prunes_the_sphere() {
    let alphabet = AmplitudeAlphabet::qam64();
    let band = BandParams::new(-24.0, 0.0, 28.0, 28.0, Granularity::FourD);
    let raw = Raw {
        n: 8,
        e_max: 48,
        band: Some((-24.0, 0.0, 28.0, 28.0, 4)),
        e4_max: None,
    };
    let banded = EnergyConstraintProfile::banded(&alphabet, 8, 48, band).unwrap();
    let sphere = EnergyConstraintProfile::sphere(&alphabet, 8, 48).unwrap();
    let tb = BoundedTrellis::build(&alphabet, &banded).unwrap();
    let ts = BoundedTrellis::build(&alphabet, &sphere).unwrap();
    assert_eq!(*tb.count_sequences(), BigUint::from(raw.brute_count()));
    assert!(tb.count_sequences() < ts.count_sequences());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counts_are_monotone_in_the_energy_limit(n in 1usize..40, e in 1u64..2000) {
        let alphabet = AmplitudeAlphabet::qam64();
        let count = |e_max: u64| {
            EnergyConstraintProfile::sphere(&alphabet, n, e_max)
                .and_then(|p| BoundedTrellis::build(&alphabet, &p))
                .map(|t| t.count_sequences().clone())
                .unwrap_or_default()
        };
        prop_assert!(count(e) <= count(e + 8));
    }

    #[test]
    fn reachable_energies_respect_residues(n in 1usize..30, slack in 0u64..200) {
        // Odd squares are 1 mod 8 and odd fourth powers are 1 mod 16.
        let alphabet = AmplitudeAlphabet::qam64();
        let p = EnergyConstraintProfile::kurtosis_limited(&alphabet, n, n as u64 * 9 + slack, u64::MAX).unwrap();
        let t = BoundedTrellis::build(&alphabet, &p).unwrap();
        for m in 0..=n {
            for (s, c) in t.layer(m) {
                prop_assert_eq!(s.energy % 8, m as u64 % 8);
                prop_assert_eq!(s.fourth % 16, m as u64 % 16);
                prop_assert!(*c > BigUint::default());
            }
        }
        prop_assert!(t.recursion_violation().is_none());
    }
}
