use aniso::exterior::{binomial, KVector};
use aniso::integrands::GeometricIntegrand;
use aniso::polyconvexity::{check_instance, random_decomposition, Decomposition, OrientationMode};
use aniso::qvalued::{metric_g, QPoint};
use aniso::rational_approx::{caratheodory_reduce, rational_orthogonal};
use aniso::sampling::{random_orthonormal, stream_rng};
use aniso::Rational;
use nalgebra::DVector;
use num_bigint::BigInt;
use num_traits::{One, Zero};
use proptest::prelude::*;

fn kvec(n: usize, k: usize) -> impl Strategy<Value = KVector<f64>> {
    prop::collection::vec(-1.0..1.0f64, binomial(n, k)).prop_map(move |c| KVector::new(n, k, c).unwrap())
}

fn grades() -> impl Strategy<Value = (usize, usize, usize)> {
    (2usize..=6).prop_flat_map(|n| (Just(n), 1..n)).prop_flat_map(|(n, p)| (Just(n), Just(p), 1..=n - p))
}

fn qpoints(q: usize, dim: usize) -> impl Strategy<Value = QPoint> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, dim), q)
        .prop_map(|rows| QPoint::from_rows(&rows).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wedge_is_graded_commutative(
        (a, b) in grades().prop_flat_map(|(n, p, q)| (kvec(n, p), kvec(n, q)))
    ) {
        let (p, q) = (a.grade(), b.grade());
        let sign = if p * q % 2 == 0 { 1.0 } else { -1.0 };
        let d = a.wedge(&b).unwrap().distance(&b.wedge(&a).unwrap().scale(&sign));
        prop_assert!(d < 1e-12);
    }

    #[test]
    fn double_star_sign(xi in (2usize..=6).prop_flat_map(|n| (1..=n).prop_flat_map(move |k| kvec(n, k)))) {
        let (n, k) = (xi.dim(), xi.grade());
        let sign = if k * (n - k) % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!(xi.hodge_star().hodge_star().distance(&xi.scale(&sign)) < 1e-14);
        // the star is an isometry
        prop_assert!((xi.hodge_star().norm() - xi.norm()).abs() < 1e-12);
    }

    #[test]
    fn metric_g_is_a_metric(
        (a, b, c) in (1usize..=5, 1usize..=3).prop_flat_map(|(q, d)| (qpoints(q, d), qpoints(q, d), qpoints(q, d)))
    ) {
        let ab = metric_g(&a, &b).unwrap();
        prop_assert_eq!(ab, metric_g(&b, &a).unwrap());
        prop_assert!(metric_g(&a, &a).unwrap() == 0.0);
        prop_assert!(metric_g(&a, &c).unwrap() <= ab + metric_g(&b, &c).unwrap() + 1e-12);
        let mut rev = a.points().to_vec();
        rev.reverse();
        prop_assert!(metric_g(&a, &QPoint::new(rev).unwrap()).unwrap() == 0.0);
    }

    #[test]
    fn rational_rotation_is_exactly_orthogonal(n in 1usize..=5, seed in any::<u64>(), den in 2i64..10_000) {
        let u = random_orthonormal(n, n, &mut stream_rng(seed, 0));
        let r = rational_orthogonal(&u, &BigInt::from(den));
        let rt = r.transpose();
        let prod = &rt * &r;
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { Rational::one() } else { Rational::zero() };
                prop_assert_eq!(&prod[(i, j)], &want);
            }
        }
    }

    #[test]
    fn caratheodory_keeps_the_target_exactly(
        dim in 1usize..=4,
        count in 1usize..=9,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = stream_rng(seed, 1);
        let int = |rng: &mut rand_chacha::ChaCha8Rng, lo: i64, hi: i64| Rational::from_integer(BigInt::from(rng.random_range(lo..=hi)));
        let atoms: Vec<Vec<Rational>> = (0..count).map(|_| (0..dim).map(|_| int(&mut rng, -4, 4)).collect()).collect();
        let weights: Vec<Rational> = (0..count).map(|_| int(&mut rng, 1, 6)).collect();
        let target: Vec<Rational> = (0..dim)
            .map(|r| atoms.iter().zip(&weights).fold(Rational::zero(), |acc, (a, w)| acc + a[r].clone() * w.clone()))
            .collect();
        let red = caratheodory_reduce(&target, &atoms, &weights).unwrap();
        prop_assert!(red.indices.len() <= dim);
        prop_assert!(red.weights.iter().all(|w| *w > Rational::zero()));
        for r in 0..dim {
            let sum = red.indices.iter().zip(&red.weights).fold(Rational::zero(), |acc, (&i, w)| acc + atoms[i][r].clone() * w.clone());
            prop_assert_eq!(&sum, &target[r]);
        }
    }

    #[test]
    fn area_gap_is_linear_in_mass_excess(
        (n, k) in (2usize..=5).prop_flat_map(|n| (Just(n), 1..n)),
        d in 2usize..=4,
        seed in any::<u64>(),
        c in 0.0..2.0f64,
        positive in any::<bool>(),
    ) {
        let mode = if positive { OrientationMode::Positive } else { OrientationMode::Any };
        let dec = random_decomposition(n, k, d, seed, mode).unwrap();
        prop_assert!(dec.atoms().iter().all(|a| a.weight > 0.0));
        if positive {
            prop_assert!(dec.is_positively_oriented());
        }
        let gap = check_instance(&GeometricIntegrand::area(n, k), c, &dec, mode).unwrap();
        prop_assert!((gap - (1.0 - c) * (dec.weight_sum() - 1.0)).abs() < 1e-12);
        // JSON round trip is bit-exact
        let back: Decomposition = serde_json::from_str(&serde_json::to_string(&dec).unwrap()).unwrap();
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&dec).unwrap());
    }

    #[test]
    fn qpoint_multiset_ignores_order(rows in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 2), 1..6), rot in 0usize..6) {
        let a = QPoint::from_rows(&rows).unwrap();
        let mut r = rows.clone();
        let len = r.len();
        r.rotate_left(rot % len);
        prop_assert!(a.same_multiset(&QPoint::from_rows(&r).unwrap()));
        let shifted: Vec<DVector<f64>> = a.points().iter().map(|p| p.add_scalar(1.0)).collect();
        prop_assert!((metric_g(&a, &QPoint::new(shifted).unwrap()).unwrap() - (2.0 * len as f64).sqrt()).abs() < 1e-12);
    }
}
