use ncvx::discrepancy::{random_complete_set, rho};
use ncvx::geometry::AlphaVector;
use ncvx::harness::{Reconstructor, ReconstructionPolicy};
use ncvx::instance::{HardInstance, HardnessParams, Coupling, DEFAULT_C};
use ncvx::oracle::{CoinOracle, OracleConfig};
use ncvx::rng;
use proptest::prelude::*;

fn instance(d: u32, delta: f64, signs: &[bool], seed: u64) -> HardInstance {
    let params = HardnessParams::new(d, delta, DEFAULT_C, Coupling::Signed).unwrap();
    let alpha = AlphaVector::new(signs[..1 << d].iter().map(|&s| if s { 1 } else { -1 }).collect()).unwrap();
    HardInstance::sampled(alpha, params, seed, 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rho_is_symmetric_and_nonnegative(
        d in 1u32..=3,
        delta in 0.0f64..=0.25,
        a in prop::collection::vec(any::<bool>(), 8),
        b in prop::collection::vec(any::<bool>(), 8),
        seed in any::<u64>(),
    ) {
        let ga = instance(d, delta, &a, seed);
        let gb = instance(d, delta, &b, seed ^ 1);
        let s = random_complete_set(d, &mut rng::stream(seed, 7)).unwrap();
        let ab = rho(&ga, &gb, &s).unwrap();
        let ba = rho(&gb, &ga, &s).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(rho(&ga, &ga, &s).unwrap() >= 0.0, true);
    }

    #[test]
    fn oracle_answers_are_bounded(
        d in 1u32..=4,
        delta in 0.0f64..=0.25,
        signs in prop::collection::vec(any::<bool>(), 16),
        ell in 1usize..=16,
        x in prop::collection::vec(-1.0f64..1.0, 4),
        seed in any::<u64>(),
        t in 0usize..1000,
    ) {
        let g = instance(d, delta, &signs, seed);
        let ell = ell.min(1 << d);
        let oracle = CoinOracle::new(&g, OracleConfig::new(ell, seed)).unwrap();
        let (answer, coins) = oracle.respond(t, &x[..d as usize]).unwrap();
        prop_assert!((0.0..=DEFAULT_C).contains(&answer.value));
        prop_assert!(answer.subgradient.iter().all(|v| v.abs() <= 1.0));
        prop_assert_eq!(coins.chosen.len(), ell);
    }

    #[test]
    fn reconstructions_are_separated(
        d in 1u32..=3,
        signs in prop::collection::vec(any::<bool>(), 8),
        topk in any::<bool>(),
        points in prop::collection::vec(prop::collection::vec(-0.75f64..0.75, 3), 1..200),
        seed in any::<u64>(),
    ) {
        let g = instance(d, 0.1, &signs, seed);
        let policy = if topk {
            ReconstructionPolicy::VisitedTopK { k: 1 << d }
        } else {
            ReconstructionPolicy::SnapBest
        };
        let mut rec = Reconstructor::new(g.params(), policy);
        let oracle = CoinOracle::new(&g, OracleConfig::new(1, seed)).unwrap();
        for (t, p) in points.iter().enumerate() {
            let x = &p[..d as usize];
            let answer = oracle.respond(t, x).unwrap().0;
            rec.observe(x, answer.value);
        }
        prop_assert!(rec.snapshot().check_separation(DEFAULT_C).is_ok());
    }
}
