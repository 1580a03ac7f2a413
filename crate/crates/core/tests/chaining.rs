use hadamard_chaining::chaining::*;
use hadamard_chaining::covering::IndexedMetric;
use hadamard_chaining::ModelSpace;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(max: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0..1.0f64, dim), 1..=max)
}

// All set partitions of 0..n as label vectors.
fn partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for p in &out {
            let blocks = p.iter().copied().max().map_or(0, |b| b + 1);
            for b in 0..=blocks {
                let mut q = p.clone();
                q.push(b);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

// Up to six points: level 0 is the whole set, level 1 has at most four parts,
// level 2 may be singletons. So γ = Δ(T) + 2^(1/α)·min over 4-part partitions
// of the largest part diameter.
fn gamma_oracle(m: &FiniteMetricSpace, alpha: f64) -> f64 {
    let n = m.len();
    let diam = m.diameter();
    if n <= 4 {
        return diam;
    }
    let best = partitions(n)
        .into_iter()
        .filter(|p| *p.iter().max().unwrap() < 4)
        .map(|p| {
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if p[i] == p[j] {
                        worst = worst.max(m.dist(i, j));
                    }
                }
            }
            worst
        })
        .fold(f64::INFINITY, f64::min);
    diam + 2f64.powf(1.0 / alpha) * best
}

#[test]
fn hand_values() {
    let two = FiniteMetricSpace::from_vectors(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
    assert!((exact_gamma_small(&two, 2.0).unwrap() - 5.0).abs() < 1e-12);
    let s = 0.7;
    let tri = FiniteMetricSpace::new(
        vec!["x".into(), "y".into(), "z".into()],
        vec![vec![0.0, s, s], vec![s, 0.0, s], vec![s, s, 0.0]],
    )
    .unwrap();
    assert!((exact_gamma_small(&tri, 2.0).unwrap() - s).abs() < 1e-12);
    assert!((exact_gamma_small(&tri, 1.0).unwrap() - s).abs() < 1e-12);
    let single = FiniteMetricSpace::from_vectors(&[vec![1.0]]).unwrap();
    assert_eq!(exact_gamma_small(&single, 2.0).unwrap(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn exact_matches_partition_oracle(v in cloud(6, 2), alpha in prop::sample::select(vec![1.0, 2.0])) {
        let m = FiniteMetricSpace::from_vectors(&v).unwrap();
        let e = exact_gamma_small(&m, alpha).unwrap();
        prop_assert!((e - gamma_oracle(&m, alpha)).abs() < 1e-12);
    }

    #[test]
    fn greedy_dominates_exact(v in cloud(5, 3)) {
        let m = FiniteMetricSpace::from_vectors(&v).unwrap();
        let g = greedy_gamma(&m, 2.0).unwrap();
        g.validate().unwrap();
        prop_assert!(g.value >= exact_gamma_small(&m, 2.0).unwrap() - 1e-12);
        prop_assert!((chain_value(&m, &g.partitions, 2.0) - g.value).abs() < 1e-12);
    }

    #[test]
    fn exact_is_monotone_under_subsets(v in cloud(6, 2), keep in prop::collection::vec(any::<bool>(), 6)) {
        let m = FiniteMetricSpace::from_vectors(&v).unwrap();
        let idx: Vec<usize> = (0..m.len()).filter(|&i| keep[i]).collect();
        prop_assume!(!idx.is_empty());
        let sub = m.restrict(&idx).unwrap();
        prop_assert!(exact_gamma_small(&sub, 2.0).unwrap() <= exact_gamma_small(&m, 2.0).unwrap() + 1e-12);
    }

    #[test]
    fn functionals_are_homogeneous(v in cloud(40, 2), c in 0.1..10.0f64) {
        let m = FiniteMetricSpace::from_vectors(&v).unwrap();
        prop_assume!(m.diameter() > 1e-9);
        let s = m.scaled(c).unwrap();
        let (g, gs) = (greedy_gamma(&m, 2.0).unwrap().value, greedy_gamma(&s, 2.0).unwrap().value);
        prop_assert!((gs - c * g).abs() <= 1e-9 * gs.max(1.0));
        let d = dudley_integral(&m, 2.0, &dudley_grid(m.diameter(), DUDLEY_GRID_POINTS).unwrap()).unwrap();
        let ds = dudley_integral(&s, 2.0, &dudley_grid(s.diameter(), DUDLEY_GRID_POINTS).unwrap()).unwrap();
        prop_assert!((ds - c * d).abs() <= 1e-9 * ds.max(1.0));
    }

    #[test]
    fn greedy_ignores_labels(v in cloud(40, 2), rot in 0usize..40) {
        let mut w = v.clone();
        let r = rot % w.len();
        w.rotate_left(r);
        let a = greedy_gamma(&FiniteMetricSpace::from_vectors(&v).unwrap(), 2.0).unwrap();
        let b = greedy_gamma(&FiniteMetricSpace::from_vectors(&w).unwrap(), 2.0).unwrap();
        prop_assert_eq!(a.value, b.value);
    }

    #[test]
    fn greedy_respects_caps(v in cloud(300, 2)) {
        let m = FiniteMetricSpace::from_vectors(&v).unwrap();
        let g = greedy_gamma(&m, 2.0).unwrap();
        g.validate().unwrap();
        prop_assert_eq!(g.part_count(0), 1);
        prop_assert_eq!(g.part_count(g.partitions.len() - 1), m.len());
    }
}

#[test]
fn greedy_within_dudley_factor() {
    for seed in 0..30u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = r.random_range(2..=256);
        let d = r.random_range(1..=4);
        let v: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random::<f64>()).collect()).collect();
        let m = FiniteMetricSpace::from_vectors(&v).unwrap();
        let g = greedy_gamma(&m, 2.0).unwrap().value;
        let du = dudley_integral(&m, 2.0, &dudley_grid(m.diameter(), DUDLEY_GRID_POINTS).unwrap()).unwrap();
        assert!(g <= 8.0 * du, "seed {seed}: {g} vs {du}");
    }
}

#[test]
fn dudley_grid_is_converged() {
    for seed in 0..50u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = r.random_range(3..=256);
        let d = r.random_range(1..=4);
        let v: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random::<f64>()).collect()).collect();
        let m = FiniteMetricSpace::from_vectors(&v).unwrap();
        let diam = m.diameter();
        let a = dudley_integral(&m, 2.0, &dudley_grid(diam, DUDLEY_GRID_POINTS).unwrap()).unwrap();
        let b = dudley_integral(&m, 2.0, &dudley_grid(diam, 4 * DUDLEY_GRID_POINTS).unwrap()).unwrap();
        assert!((a - b).abs() < 0.05 * b, "seed {seed}: {a} vs {b}");
    }
}

#[test]
fn dudley_two_points() {
    let m = FiniteMetricSpace::from_vectors(&[vec![0.0], vec![2.0]]).unwrap();
    let du = dudley_integral(&m, 2.0, &dudley_grid(2.0, DUDLEY_GRID_POINTS).unwrap()).unwrap();
    assert!((du - 2.0 * 2f64.ln().sqrt()).abs() < 1e-12);
    assert!(dudley_integral(&m, 2.0, &[0.5, 1.0]).is_err());
}

#[test]
fn hyperbolic_points_form_a_metric_space() {
    let h = ModelSpace::plane();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = h.ball_sampler(&h.origin(), 2.0).unwrap();
    let pts: Vec<_> = (0..20).map(|_| s.sample(&mut rng)).collect();
    let m = FiniteMetricSpace::from_points(&h, &pts);
    assert_eq!(m.len(), 20);
    assert!((m.dist(3, 7) - h.distance(&pts[3], &pts[7])).abs() < 1e-12);
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(m.labels()).unwrap();
        for i in 0..m.len() {
            w.write_record((0..m.len()).map(|j| format!("{:e}", m.dist(i, j)))).unwrap();
        }
    }
    let back = FiniteMetricSpace::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.labels(), m.labels());
    assert_eq!(back.dist(2, 9), m.dist(2, 9));
}

#[test]
fn gaussian_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    // E max(0, σg) = σ/√(2π).
    let sigma = 2.5;
    let pair = GaussianIndexSet::new(vec![vec![0.0, 0.0], vec![sigma, 0.0]]).unwrap();
    let s = gaussian_sup_mc(&pair, 100_000, &mut rng).unwrap();
    let want = sigma / (2.0 * std::f64::consts::PI).sqrt();
    assert!((s.mean_sup - want).abs() <= 3.0 * s.stderr, "{s:?}");
    // E max(g1, g2) = 1/√π for independent standard normals.
    let orth = GaussianIndexSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let s = gaussian_sup_mc(&orth, 100_000, &mut rng).unwrap();
    assert!((s.mean_sup - 1.0 / std::f64::consts::PI.sqrt()).abs() <= 3.0 * s.stderr, "{s:?}");
    assert!(gaussian_sup_mc(&orth, MIN_TRIALS - 1, &mut rng).is_err());
}

#[test]
fn fernique_band_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..5 {
        let n = rng.random_range(2..40);
        let v: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let b = fernique_band(&GaussianIndexSet::new(v).unwrap(), 2.0, 5_000, &mut rng).unwrap();
        assert!(!b.flag.is_fail());
        let (lo, hi) = (b.l_lower.unwrap(), b.l_upper.unwrap());
        assert!((lo * hi - 1.0).abs() < 1e-12);
        assert!(lo > 0.0 && hi.is_finite());
    }
    let same = GaussianIndexSet::new(vec![vec![1.0], vec![1.0]]).unwrap();
    let b = fernique_band(&same, 2.0, 5_000, &mut rng).unwrap();
    assert!(b.l_lower.is_none() && !b.flag.is_fail());
}

#[test]
fn rejects_non_metrics() {
    let l = || vec!["a".to_string(), "b".into(), "c".into()];
    let triangle = vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]];
    assert!(FiniteMetricSpace::new(l(), triangle).is_err());
    let negative = vec![vec![0.0, -1.0, 1.0], vec![-1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
    assert!(FiniteMetricSpace::new(l(), negative).is_err());
    assert!(FiniteMetricSpace::new(l(), vec![vec![0.0; 2]; 3]).is_err());
    assert!(FiniteMetricSpace::read_csv("a,b\n0,1\n".as_bytes()).is_err());
}
