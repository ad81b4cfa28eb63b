use std::sync::Arc;

use cfiblur::basegraph::catalog;
use cfiblur::cfi::{cfi_query_solve, find_isomorphism, path_isomorphism, star_isomorphism, verify_isomorphism};
use cfiblur::{BaseGraph, CfiStructure, Modulus, RingValue, TwistFunction};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn twist(base: &BaseGraph, m: Modulus, seed: u64) -> TwistFunction {
    TwistFunction::random(base, m, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn shifted(f: &TwistFunction, base: &BaseGraph, shift: &[u32]) -> TwistFunction {
    let m = f.modulus();
    let vals = f.values().iter().zip(shift).map(|(&a, &b)| m.add(a, b)).collect();
    TwistFunction::from_values(base, m, vals).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// A path isomorphism changes the twist on the two end edges only and
    /// is a genuine isomorphism onto the shifted structure.
    #[test]
    fn path_isomorphism_shifts_end_edges(seed in any::<u64>(), c in 0i64..8, q in 1u32..=3) {
        let base = Arc::new(catalog::petersen());
        let m = Modulus::new(q).unwrap();
        let f = twist(&base, m, seed);
        let path = [0u32, 1, 2, 3, 4];
        let pi = path_isomorphism(&base, RingValue::new(q, c).unwrap(), &path).unwrap();
        let shift = pi.twist_shift(&base);
        let first = base.edge_index(0, 1).unwrap();
        let last = base.edge_index(3, 4).unwrap();
        for (i, &s) in shift.iter().enumerate() {
            let want = if i == first { m.reduce_signed(c) } else if i == last { m.reduce_signed(-c) } else { 0 };
            prop_assert_eq!(s, want);
        }
        let a = CfiStructure::build(base.clone(), f.clone()).unwrap();
        let b = CfiStructure::build(base.clone(), shifted(&f, &base, &shift)).unwrap();
        prop_assert!(verify_isomorphism(&pi, &a, &b));
    }

    #[test]
    fn composition_and_inverse(seed in any::<u64>(), c1 in 0i64..4, c2 in 0i64..4) {
        let base = Arc::new(catalog::hypercube(3));
        let m = Modulus::new(2).unwrap();
        let p = path_isomorphism(&base, RingValue::new(2, c1).unwrap(), &[0, 1, 3, 7]).unwrap();
        let r = star_isomorphism(
            &base,
            &[RingValue::new(2, c2).unwrap(), RingValue::new(2, -c2).unwrap()],
            &[vec![5, 1, 0], vec![6, 2, 0]],
        ).unwrap();
        let pr = p.compose(&r);
        let shift_sum: Vec<u32> = p.twist_shift(&base).iter().zip(r.twist_shift(&base))
            .map(|(&a, b)| m.add(a, b)).collect();
        prop_assert_eq!(pr.twist_shift(&base), shift_sum);
        prop_assert!(pr.compose(&pr.inverse()).is_identity());
        let f = twist(&base, m, seed);
        let a = CfiStructure::build(base.clone(), f.clone()).unwrap();
        let b = CfiStructure::build(base.clone(), shifted(&f, &base, &pr.twist_shift(&base))).unwrap();
        prop_assert!(verify_isomorphism(&pr, &a, &b));
    }

    /// Isomorphism is decided by the total twist.
    #[test]
    fn isomorphic_iff_same_total(s1 in any::<u64>(), s2 in any::<u64>(), q in 1u32..=3) {
        let base = catalog::complete(4);
        let m = Modulus::new(q).unwrap();
        let f = twist(&base, m, s1);
        let g = twist(&base, m, s2);
        let iso = find_isomorphism(&base, &f, &g);
        prop_assert_eq!(iso.is_some(), f.total() == g.total());
        if let Some(p) = iso {
            let base = Arc::new(base);
            let a = CfiStructure::build(base.clone(), f).unwrap();
            let b = CfiStructure::build(base, g).unwrap();
            prop_assert!(verify_isomorphism(&p, &a, &b));
        }
    }

    /// The query recovers the total twist from the stripped structure,
    /// and the answer does not depend on how the universe is labelled.
    #[test]
    fn query_is_labelling_invariant(seed in any::<u64>(), q in 1u32..=3, rot in any::<u32>()) {
        let base = Arc::new(catalog::prism(4));
        let m = Modulus::new(q).unwrap();
        let f = twist(&base, m, seed);
        let s = CfiStructure::build(base, f.clone()).unwrap();
        let r = s.strip();
        prop_assert_eq!(cfi_query_solve(&r).unwrap(), f.total());
        let n = s.universe_len() as u32;
        let perm: Vec<u32> = (0..n).map(|u| (u + rot % n) % n).collect();
        prop_assert_eq!(cfi_query_solve(&r.relabel(&perm)).unwrap(), f.total());
    }

    #[test]
    fn json_roundtrip_preserves_structure(seed in any::<u64>()) {
        let base = Arc::new(catalog::complete(4));
        let m = Modulus::new(2).unwrap();
        let s = CfiStructure::build(base, twist(&catalog::complete(4), m, seed)).unwrap();
        let t = CfiStructure::from_json(&s.to_json(false)).unwrap();
        prop_assert_eq!(t.twist().values(), s.twist().values());
        prop_assert_eq!(t.universe_len(), s.universe_len());
    }

    /// Translating a vertex by a gadget translation keeps it in its gadget
    /// and is undone by the negated translation.
    #[test]
    fn translations_stay_in_gadget(u in 0u32..1000, d in proptest::collection::vec(0u32..4, 3)) {
        let base = Arc::new(catalog::complete(4));
        let m = Modulus::new(2).unwrap();
        let s = CfiStructure::build(base, TwistFunction::zero(&catalog::complete(4), m)).unwrap();
        let u = u % s.universe_len() as u32;
        let x = s.origin(u);
        let total = m.sum(d.iter().copied());
        let mut d = d;
        d[2] = m.sub(d[2], total);
        let v = s.translate(u, &d);
        prop_assert_eq!(s.origin(v), x);
        let neg: Vec<u32> = d.iter().map(|&a| m.neg(a)).collect();
        prop_assert_eq!(s.translate(v, &neg), u);
    }
}
