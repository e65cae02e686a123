use proptest::prelude::*;
use psd_diagrams::assembly::{expand_series, fdt_residual, gamma, sigma_pair, PsdReport};
use psd_diagrams::cutting::enumerate_retarded_cuts;
use psd_diagrams::diagram::ladder;
use psd_diagrams::perm::permutations;
use psd_diagrams::retarded::adjoint_deviation;
use psd_diagrams::{ApproximationSeries, Family, Perm, Propagator, SystemSpec};

fn perm_strategy(n: usize) -> impl Strategy<Value = Perm> {
    Just((0..n).collect::<Vec<usize>>()).prop_shuffle().prop_map(Perm)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sign_is_multiplicative(a in perm_strategy(5), b in perm_strategy(5)) {
        prop_assert_eq!(a.compose(&b).sign(), a.sign() * b.sign());
        prop_assert!(a.compose(&a.inverse()).is_identity());
    }

    #[test]
    fn second_born_rates_are_psd_and_obey_fdt(seed in 0u64..10_000, n in 2usize..5, beta in 0.3f64..8.0, norm in 0.1f64..1.5) {
        let prop = Propagator::new(SystemSpec::random(seed, n, beta, norm, 0.05));
        let series = expand_series(ApproximationSeries { family: Family::SecondBorn, max_order: 2 }, false).unwrap();
        let r = sigma_pair(&series, &prop).unwrap();
        let g = gamma(&r.lesser, &r.greater);
        prop_assert!(PsdReport::from_poles(&g, 1e-10).pass);
        prop_assert!(fdt_residual(&r, &g, &prop) < 1e-10);
        prop_assert!(g.max_antihermitian() < 1e-12);
    }

    #[test]
    fn gw_extension_stays_psd(seed in 0u64..10_000, beta in 0.5f64..5.0) {
        let prop = Propagator::new(SystemSpec::random(seed, 3, beta, 0.8, 0.05));
        let series = expand_series(ApproximationSeries { family: Family::Gw, max_order: 3 }, true).unwrap();
        let r = sigma_pair(&series, &prop).unwrap();
        prop_assert!(PsdReport::from_poles(&gamma(&r.lesser, &r.greater), 1e-10).pass);
    }

    #[test]
    fn adjoint_identity_on_ladder_halves(seed in 0u64..10_000, w in prop::collection::vec(-3.0f64..3.0, 3)) {
        let prop = Propagator::new(SystemSpec::random(seed, 2, 1.0, 1.0, 0.05));
        for t in enumerate_retarded_cuts(&ladder(3, false).unwrap()).unwrap().terms {
            let h = &t.left;
            let legs = vec![seed as usize % 2; h.n_legs()];
            let dev = adjoint_deviation(h, &prop, 0, &legs, &w[..h.n_slots()]).unwrap();
            prop_assert!(dev < 1e-12, "dev {}", dev);
        }
    }
}

#[test]
fn permutations_enumerates_factorial() {
    assert_eq!(permutations(&[0, 1, 2, 3]).len(), 24);
}
