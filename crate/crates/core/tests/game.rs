use std::sync::Arc;

use cfiblur::basegraph::catalog;
use cfiblur::game::{duplicator_round, new_game, play, verify_round, SpoilerPolicy, Transcript};
use cfiblur::{CfiStructure, Modulus, TwistFunction};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn twisted_pair(seed: u64) -> (Arc<CfiStructure>, Arc<CfiStructure>) {
    let g = Arc::new(catalog::complete(4));
    let m = Modulus::new(2).unwrap();
    let f = TwistFunction::random(&g, m, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let g2 = TwistFunction::random(&g, m, &mut rng);
    // Force a total twist difference of 2 by adjusting edge 0.
    let diff = m.sub(m.add(f.total().value(), 2), g2.total().value());
    let e = g.edges()[0];
    let g2 = g2.twisted(&g, e.0, e.1, diff).unwrap();
    (
        Arc::new(CfiStructure::build(g.clone(), f).unwrap()),
        Arc::new(CfiStructure::build(g, g2).unwrap()),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Against random play on non-isomorphic structures the Duplicator's
    /// every answer is accepted by the referee.
    #[test]
    fn duplicator_survives_random_play(seed in any::<u64>()) {
        let (a, b) = twisted_pair(seed);
        prop_assert_ne!(a.twist().total(), b.twist().total());
        let mut state = new_game(a, b, 1, 2, &[]).unwrap();
        let t = play(&mut state, &SpoilerPolicy::Random { seed }, 5).unwrap();
        prop_assert!(t.outcome.duplicator_survived(), "{:?}", t.outcome);
        prop_assert_eq!(Transcript::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn first_answer_is_verified(seed in any::<u64>()) {
        let (a, b) = twisted_pair(seed);
        let mut state = new_game(a, b, 1, 2, &[]).unwrap();
        state.pick_up(&[0, 1]).unwrap();
        let p = duplicator_round(&state).unwrap();
        prop_assert!(verify_round(&state, &p).accepted);
    }
}

#[test]
fn exhaustive_spoiler_is_held_off() {
    let (a, b) = twisted_pair(3);
    let mut state = new_game(a, b, 1, 2, &[]).unwrap();
    let t = play(&mut state, &SpoilerPolicy::Exhaustive { depth: 2 }, 3).unwrap();
    assert!(t.outcome.duplicator_survived());
}
