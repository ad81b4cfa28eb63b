use std::sync::Arc;

use cfiblur::basegraph::catalog;
use cfiblur::gf2::{matrix_predicates, verify_blur};
use cfiblur::orbits::{aut_generators, same_orbit};
use cfiblur::similarity::{build_s_1ary, pair_orbits, psi_xi, tau_map, AuditPolicy, BoundParams, StarLayout};
use cfiblur::{Blurer, CfiStructure, Modulus, TwistFunction};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_pair(seed: u64, q: u32) -> (CfiStructure, CfiStructure) {
    let g = Arc::new(catalog::complete(4));
    let m = Modulus::new(q).unwrap();
    let f = TwistFunction::random(&g, m, &mut ChaCha8Rng::seed_from_u64(seed));
    let half = 1 << (q - 1);
    let f2 = f.clone().twisted(&g, 0, 1, half).unwrap();
    (CfiStructure::build(g.clone(), f).unwrap(), CfiStructure::build(g, f2).unwrap())
}

#[test]
fn bounds_grow_with_arity() {
    let b1 = BoundParams::new(1, 2);
    let b2 = BoundParams::new(2, 4);
    assert!(b2.q > b1.q);
    assert_eq!(b1.connectivity, 2 + 2 + 1);
    assert!(b2.girth > b1.girth);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// The 1-ary matrix blurs the pair of structures whose twists differ
    /// by half the ring on one edge, whatever the rest of the twist is.
    #[test]
    fn one_ary_blur_holds_for_random_twists(seed in any::<u64>(), q in 2u32..=3) {
        let (a, b) = random_pair(seed, q);
        let blurer = Blurer::arity1(q, 3).unwrap();
        let s = build_s_1ary(&a, &b, &[], 0, 1, &blurer, AuditPolicy::Enforce).unwrap();
        prop_assert!(s.audit.passed());
        let gens = aut_generators(&a, &[]).permutations(&a);
        prop_assert!(matrix_predicates(&s.matrix, &gens).all());
        let (pa, pb, f) = pair_orbits(&a, &b, &[], 1).unwrap();
        prop_assert!(verify_blur(&s.matrix, &pa, &pb, &f, 1).unwrap().holds());
    }

    /// The maps built on a star layout send tuples to tuples of the same
    /// orbit when the twist they realise is zero.
    #[test]
    fn star_maps_preserve_orbits(u in proptest::collection::vec(0u32..1024, 2), c in 0u32..4) {
        let g = Arc::new(catalog::hypercube(4));
        let m = Modulus::new(2).unwrap();
        let s = CfiStructure::build(g.clone(), TwistFunction::zero(&g, m)).unwrap();
        let layout = StarLayout::search(&g, 0, 1, 3, &[15]).unwrap();
        let u: Vec<u32> = u.into_iter().map(|x| x % s.universe_len() as u32).collect();
        let d = layout.d();
        let mut xi = vec![0u32; d];
        xi[1] = c;
        xi[0] = m.neg(c);
        let image = psi_xi(&s, &layout, &xi, &u).unwrap();
        prop_assert!(same_orbit(&s, &[], &u, &image));
        let a = vec![0u32; d];
        prop_assert_eq!(tau_map(&s, &layout, &a, &u).unwrap(), u.clone());
    }
}
