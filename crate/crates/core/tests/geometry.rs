use approx::assert_relative_eq;
use hadamard_chaining::{ModelSpace, HPoint};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spatial(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, dim)
}

fn space_and_points(count: usize) -> impl Strategy<Value = (ModelSpace, Vec<HPoint>)> {
    (2usize..=4, prop::sample::select(vec![0.5, 1.0, 2.0])).prop_flat_map(move |(n, k)| {
        prop::collection::vec(spatial(n), count).prop_map(move |xs| {
            let h = ModelSpace::new(n, k).unwrap();
            let pts = xs.iter().map(|x| h.lift(x).unwrap()).collect();
            (h, pts)
        })
    })
}

proptest! {
    #[test]
    fn distance_is_a_metric((h, p) in space_and_points(3)) {
        let (a, b, c) = (&p[0], &p[1], &p[2]);
        prop_assert!(h.distance(a, a) < 1e-7);
        prop_assert!((h.distance(a, b) - h.distance(b, a)).abs() < 1e-12);
        prop_assert!(h.distance(a, c) <= h.distance(a, b) + h.distance(b, c) + 1e-9);
    }

    #[test]
    fn exp_inverts_log((h, p) in space_and_points(2)) {
        let v = h.log_map(&p[0], &p[1]);
        prop_assert!((v.norm() - h.distance(&p[0], &p[1])).abs() < 1e-8);
        let q = h.exp_map(&v);
        prop_assert!(h.distance(&q, &p[1]) < 1e-8);
        prop_assert!(h.constraint_residual(q.coords()) < 1e-9);
    }

    #[test]
    fn geodesic_points_split_distance((h, p) in space_and_points(2), t in 0.0..1.0f64) {
        let x = h.geodesic_point(&p[0], &p[1], t).unwrap();
        let d = h.distance(&p[0], &p[1]);
        prop_assert!((h.distance(&p[0], &x) - t * d).abs() < 1e-7);
        prop_assert!((h.distance(&x, &p[1]) - (1.0 - t) * d).abs() < 1e-7);
    }

    #[test]
    fn chart_round_trip((h, p) in space_and_points(2)) {
        let chart = h.chart(&p[0]);
        let y = chart.to_chart(&p[1]);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - h.distance(&p[0], &p[1])).abs() < 1e-8);
        prop_assert!(h.distance(&chart.from_chart(&y), &p[1]) < 1e-8);
    }

    #[test]
    fn segment_distance_bounded_by_endpoints((h, p) in space_and_points(3)) {
        let d = h.distance_to_segment(&p[2], &p[0], &p[1]);
        prop_assert!(d <= h.distance(&p[2], &p[0]).min(h.distance(&p[2], &p[1])) + 1e-9);
        let mid = h.midpoint(&p[0], &p[1]);
        prop_assert!(h.distance_to_segment(&mid, &p[0], &p[1]) < 1e-7);
    }
}

#[test]
fn plane_distance_matches_cosh_formula() {
    // Upper sheet x0 = cosh r: distance from origin is r.
    let h = ModelSpace::plane();
    for r in [0.0f64, 0.3, 1.0, 5.0, 15.0] {
        let p = h.point(&[r.cosh(), r.sinh(), 0.0]).unwrap();
        assert_relative_eq!(h.distance(&h.origin(), &p), r, epsilon = 1e-9);
    }
    let h2 = ModelSpace::new(2, 2.0).unwrap();
    let v = h2.frame_vector(&h2.origin(), &[1.5, 0.0]);
    assert_relative_eq!(h2.distance(&h2.origin(), &h2.exp_map(&v)), 1.5, epsilon = 1e-12);
    assert_relative_eq!(h2.sectional_curvature(), -4.0);
}

#[test]
fn geodesic_triangle_angle_sum_is_below_pi() {
    let h = ModelSpace::plane();
    let pts = [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]].map(|x| h.lift(&x).unwrap());
    let mut sum = 0.0;
    for i in 0..3 {
        let a = h.log_map(&pts[i], &pts[(i + 1) % 3]);
        let b = h.log_map(&pts[i], &pts[(i + 2) % 3]);
        sum += (a.inner(&b) / (a.norm() * b.norm())).acos();
    }
    assert!(sum < std::f64::consts::PI - 0.1);
}

#[test]
fn rejects_off_manifold_points() {
    let h = ModelSpace::plane();
    assert!(h.point(&[1.0, 1.0, 0.0]).is_err());
    assert!(h.point(&[-1.0, 0.0, 0.0]).is_err());
    assert!(h.point(&[f64::NAN, 0.0, 0.0]).is_err());
    assert!(ModelSpace::new(1, 1.0).is_err());
    assert!(ModelSpace::new(2, 0.0).is_err());
}

#[test]
fn uniform_ball_samples_fill_volume_radially() {
    // P(d ≤ r/2) for a uniform point in B(o, r) in H² equals (cosh(r/2)−1)/(cosh r −1).
    let h = ModelSpace::plane();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let r: f64 = 3.0;
    let n = 40_000;
    let sampler = h.ball_sampler(&h.origin(), r).unwrap();
    let inside = (0..n)
        .filter(|_| {
            let p = sampler.sample(&mut rng);
            h.distance(&h.origin(), &p) <= r / 2.0
        })
        .count() as f64
        / n as f64;
    let expect = ((r / 2.0).cosh() - 1.0) / (r.cosh() - 1.0);
    let se = (expect * (1.0 - expect) / n as f64).sqrt();
    assert!((inside - expect).abs() < 4.0 * se, "{inside} vs {expect}");
}
