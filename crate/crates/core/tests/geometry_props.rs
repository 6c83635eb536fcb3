use flexfor::geometry::{
    convex_decomposition, minkowski, symmetric_difference_area, triangulate, Pq, PqPolygon,
};
use proptest::prelude::*;
use rand::SeedableRng;

fn star(radii: &[f64], center: (f64, f64), scale: f64) -> PqPolygon {
    let n = radii.len();
    let v = radii
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            Pq::new(center.0 + scale * r * a.cos(), center.1 + scale * r * a.sin())
        })
        .collect();
    PqPolygon::new(v).unwrap()
}

fn star_strategy() -> impl Strategy<Value = PqPolygon> {
    (
        prop::collection::vec(0.2f64..1.0, 3..=10),
        -3.0f64..3.0,
        -3.0f64..3.0,
        0.1f64..5.0,
    )
        .prop_map(|(r, cx, cy, s)| star(&r, (cx, cy), s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn decomposition_preserves_area(p in star_strategy()) {
        let d = convex_decomposition(&p).unwrap();
        prop_assert!(d.pieces.iter().all(|x| x.is_convex()));
        prop_assert!((d.total_area() - p.area()).abs() <= 1e-9 * p.area());
    }

    #[test]
    fn minkowski_contains_sums_and_commutes(a in star_strategy(), b in star_strategy(), seed in 0u64..1000) {
        let ab = minkowski(&a, &b).unwrap();
        let ba = minkowski(&b, &a).unwrap();
        let ta = triangulate(&a).unwrap();
        let tb = triangulate(&b).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..200 {
            let x = ta.sample_uniform(&mut rng) + tb.sample_uniform(&mut rng);
            prop_assert!(ab.contains(x));
        }
        let sd = symmetric_difference_area(&ab, &ba).unwrap();
        prop_assert!(sd < 1e-9 * ab.area(), "sd {sd} area {}", ab.area());
        prop_assert!(ab.area() >= a.area() + b.area() - 1e-9);
    }
}
