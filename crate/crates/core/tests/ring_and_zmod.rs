use cfiblur::ring::{Modulus, RingValue};
use cfiblur::zmod::{Elimination, ZMatrix};
use proptest::prelude::*;

proptest! {
    #[test]
    fn ring_laws(q in 1u32..=8, a in any::<u32>(), b in any::<u32>(), c in any::<u32>()) {
        let m = Modulus::new(q).unwrap();
        let (a, b, c) = (a & m.mask(), b & m.mask(), c & m.mask());
        prop_assert_eq!(m.add(a, b), m.add(b, a));
        prop_assert_eq!(m.mul(a, m.add(b, c)), m.add(m.mul(a, b), m.mul(a, c)));
        prop_assert_eq!(m.sub(m.add(a, b), b), a);
        prop_assert_eq!(m.add(a, m.neg(a)), 0);
        prop_assert_eq!(m.reduce_signed(-(a as i64)), m.neg(a));
    }

    #[test]
    fn units_are_the_odd_values(q in 1u32..=10, a in any::<u32>()) {
        let m = Modulus::new(q).unwrap();
        let a = a & m.mask();
        prop_assert_eq!(m.is_unit(a), a % 2 == 1);
        match m.unit_inverse(a) {
            Some(inv) => prop_assert_eq!(m.mul(a, inv), 1 & m.mask()),
            None => prop_assert!(!m.is_unit(a)),
        }
    }

    #[test]
    fn valuation_counts_factors_of_two(q in 1u32..=10, a in 1u32..1024) {
        let m = Modulus::new(q).unwrap();
        let a = a & m.mask();
        let v = m.valuation(a);
        if a == 0 {
            prop_assert_eq!(v, q);
        } else {
            prop_assert_eq!(v, a.trailing_zeros());
        }
    }

    #[test]
    fn ring_values_match_plain_arithmetic(q in 1u32..=6, a in -100i64..100, b in -100i64..100) {
        let x = RingValue::new(q, a).unwrap();
        let y = RingValue::new(q, b).unwrap();
        let m = Modulus::new(q).unwrap();
        prop_assert_eq!((x + y).value(), m.reduce_signed(a + b));
        prop_assert_eq!((x * y).value(), m.reduce_signed(a * b));
        prop_assert_eq!((x - y).value(), m.reduce_signed(a - b));
    }

    /// Solutions returned by the elimination satisfy the system, and a
    /// system built from a known solution is always solvable.
    #[test]
    fn elimination_solves_consistent_systems(
        q in 1u32..=4,
        rows in 1usize..6,
        cols in 1usize..6,
        seed in proptest::collection::vec(any::<u32>(), 36),
        x in proptest::collection::vec(any::<u32>(), 6),
    ) {
        let m = Modulus::new(q).unwrap();
        let mut a = ZMatrix::zeros(m, rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                a.set(r, c, seed[r * 6 + c] & m.mask());
            }
        }
        let x: Vec<u32> = x[..cols].iter().map(|&v| v & m.mask()).collect();
        let b = a.mul_vec(&x);
        let elim = Elimination::new(&a);
        let y = elim.solve(&b).expect("consistent system");
        prop_assert_eq!(a.mul_vec(&y), b);
        for k in elim.kernel() {
            prop_assert!(a.mul_vec(&k).iter().all(|&v| v == 0));
        }
    }
}
