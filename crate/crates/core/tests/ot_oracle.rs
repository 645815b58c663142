use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wdm_core::ot::*;

mod common;
use common::*;

fn distribution() -> impl Strategy<Value = DiscreteDistribution> {
    (1usize..5).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), n),
            prop::collection::vec(0.01f64..1.0, n),
        )
            .prop_map(|(p, w)| dist(p, &w))
    })
}

#[test]
fn primal_matches_brute_force_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let metric = GroundMetric::euclidean_l1_product();
    for _ in 0..60 {
        let p = random_dist(&mut rng, 4, 2);
        let q = random_dist(&mut rng, 4, 2);
        let lp = wasserstein_discrete(&p, &q, &metric).unwrap();
        let cost = metric.cost_matrix(&p, &q).unwrap();
        let brute = brute_force_ot(&cost, &p.mass, &q.mass);
        assert!((lp - brute).abs() <= 1e-9, "lp {lp} brute {brute}");
    }
}

#[test]
fn primal_equals_dual_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let metrics = [GroundMetric::euclidean_l1_product(), GroundMetric::euclidean_l2_product()];
    for t in 0..100 {
        let p = random_dist(&mut rng, 6, 3);
        let q = random_dist(&mut rng, 6, 3);
        let metric = &metrics[t % 2];
        let primal = wasserstein_discrete(&p, &q, metric).unwrap();
        let dual = kr_dual_discrete(&p, &q, metric).unwrap();
        assert!((primal - dual.value).abs() <= 1e-6, "instance {t}: {primal} vs {}", dual.value);
        assert_eq!(dual.potentials[0], 0.0);
        for a in 0..dual.support.len() {
            for b in 0..dual.support.len() {
                let d = metric.distance(&dual.support[a], &dual.support[b]).unwrap();
                assert!(dual.potentials[a] - dual.potentials[b] <= d + 1e-9);
            }
        }
    }
}

#[test]
fn coupling_has_the_right_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = random_dist(&mut rng, 5, 2);
    let q = random_dist(&mut rng, 5, 2);
    let t = optimal_transport(&p, &q, &GroundMetric::euclidean_l2_product()).unwrap();
    for (i, row) in t.coupling.rows().into_iter().enumerate() {
        assert!((row.sum() - p.mass[i]).abs() < 1e-12);
    }
    for (j, col) in t.coupling.columns().into_iter().enumerate() {
        assert!((col.sum() - q.mass[j]).abs() < 1e-12);
    }
    assert!(t.coupling.iter().all(|&v| v >= 0.0));
}

#[test]
fn explicit_metric_dual_uses_the_given_support() {
    let m = ndarray::array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]];
    let metric = GroundMetric::explicit(m).unwrap();
    let pts: Vec<Point> = (0..3).map(Point::label).collect();
    let p = DiscreteDistribution::new(pts.clone(), vec![1.0, 0.0, 0.0]).unwrap();
    let q = DiscreteDistribution::new(pts, vec![0.0, 0.0, 1.0]).unwrap();
    assert!((wasserstein_discrete(&p, &q, &metric).unwrap() - 2.0).abs() < 1e-12);
    assert!((kr_dual_discrete(&p, &q, &metric).unwrap().value - 2.0).abs() < 1e-12);
}

#[test]
fn mi_reference_values() {
    let bits = DiscreteJoint::from_labels(ndarray::array![[0.5, 0.0], [0.0, 0.5]]).unwrap();
    assert!((mi_discrete(&bits) - std::f64::consts::LN_2).abs() < 1e-12);
    let n = 2860;
    let diag = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 / n as f64 } else { 0.0 });
    let joint = DiscreteJoint::from_labels(diag).unwrap();
    assert!((mi_discrete(&joint) - (n as f64).ln()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wasserstein_is_a_metric(p in distribution(), q in distribution(), r in distribution()) {
        let metric = GroundMetric::euclidean_l1_product();
        let pq = wasserstein_discrete(&p, &q, &metric).unwrap();
        let qp = wasserstein_discrete(&q, &p, &metric).unwrap();
        let pr = wasserstein_discrete(&p, &r, &metric).unwrap();
        let rq = wasserstein_discrete(&r, &q, &metric).unwrap();
        prop_assert!(pq >= 0.0);
        prop_assert!((pq - qp).abs() < 1e-9);
        prop_assert!(pq <= pr + rq + 1e-9);
        prop_assert!(wasserstein_discrete(&p, &p, &metric).unwrap().abs() < 1e-9);
    }

    #[test]
    fn independent_joints_have_zero_dependency(
        a in prop::collection::vec(0.05f64..1.0, 1..4),
        b in prop::collection::vec(0.05f64..1.0, 1..4),
    ) {
        let (a, b) = (normalize(&a), normalize(&b));
        let mass = Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j]);
        let s = mass.sum();
        let joint = DiscreteJoint::from_labels(mass.mapv(|v| v / s)).unwrap();
        prop_assert!(mi_discrete(&joint).abs() < 1e-12);
        prop_assert!(wdm_discrete(&joint, &GroundMetric::euclidean_l1_product()).unwrap() < 1e-9);
    }

    #[test]
    fn mi_is_nonnegative_and_bounded(w in prop::collection::vec(0.01f64..1.0, 9)) {
        let m = normalize(&w);
        let joint = DiscreteJoint::from_labels(Array2::from_shape_vec((3, 3), m).unwrap()).unwrap();
        let mi = mi_discrete(&joint);
        prop_assert!(mi >= -1e-12);
        prop_assert!(mi <= 3f64.ln() + 1e-12);
    }
}
