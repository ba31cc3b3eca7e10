use hyperwalk::ball::ball;
use hyperwalk::tree::{
    boundary_action, estimate_delta, gromov_busemann_cocycle, horofunction_eval, ray_convergence,
    BoundaryPoint, DeltaMode, TreeMetric,
};
use hyperwalk::walk::{sample_trajectory_indexed, StepDistribution};
use hyperwalk::{FreeWord, GroupElement, GroupSpec, Letter, WordMetric};
use proptest::prelude::*;
use rand::Rng;

fn f2() -> GroupSpec {
    GroupSpec::free(2).unwrap()
}

fn word(codes: &[u8]) -> GroupElement {
    GroupElement::Free(FreeWord::reduce(codes.iter().map(|&c| Letter(c))))
}

/// A random reduced prefix of the given depth.
fn random_point(rng: &mut impl Rng, depth: usize) -> BoundaryPoint {
    let mut letters: Vec<Letter> = vec![Letter(rng.random_range(0..4))];
    while letters.len() < depth {
        let l = Letter(rng.random_range(0..4));
        if l != letters.last().unwrap().inverse() {
            letters.push(l);
        }
    }
    BoundaryPoint::new(letters).unwrap()
}

#[test]
fn ball_of_the_tree_is_zero_hyperbolic() {
    let spec = f2();
    let pts = ball(&spec, 4).unwrap();
    let d = estimate_delta(&WordMetric(&spec), &pts, DeltaMode::Exhaustive).unwrap();
    assert_eq!(d, 0.0);
}

#[test]
fn free_product_delta_is_small() {
    let spec = GroupSpec::free_product(vec![2, 3]).unwrap();
    let pts = ball(&spec, 6).unwrap();
    let d = estimate_delta(&WordMetric(&spec), &pts, DeltaMode::Sampled { tuples: 200_000, seed: 1 }).unwrap();
    assert!(d <= 2.0, "delta {d}");
}

#[test]
fn cocycle_identity_on_random_triples() {
    let mut rng = hyperwalk::walk::stream_rng(99, 0);
    for metric in [TreeMetric::word(2), TreeMetric::new(vec![0.7, 0.7, 1.9, 1.9]).unwrap()] {
        for _ in 0..1000 {
            let len = rng.random_range(0..12);
            let codes: Vec<u8> = (0..len).map(|_| rng.random_range(0..4)).collect();
            let g = word(&codes);
            let xi = random_point(&mut rng, 30);
            let mut eta = random_point(&mut rng, 30);
            while eta == xi {
                eta = random_point(&mut rng, 30);
            }
            let c = gromov_busemann_cocycle(&g, &xi, &eta, &metric).unwrap();
            assert!((c.lhs - c.rhs).abs() < 1e-9, "{} vs {}", c.lhs, c.rhs);
        }
    }
}

proptest! {
    #[test]
    fn action_cocycle_and_equivariance(
        g in prop::collection::vec(0u8..4, 0..8),
        h in prop::collection::vec(0u8..4, 0..8),
        x in prop::collection::vec(0u8..4, 0..8),
        seed in 0u64..1000,
    ) {
        let metric = TreeMetric::word(2);
        let spec = f2();
        let (g, h, x) = (word(&g), word(&h), word(&x));
        let mut rng = hyperwalk::walk::stream_rng(seed, 0);
        let xi = random_point(&mut rng, 40);
        // (gh).xi = g.(h.xi) and the normalizing shifts add up
        let gh = spec.multiply(&g, &h).unwrap();
        let a_h = boundary_action(&h, &xi, &metric).unwrap();
        let a_g_h = boundary_action(&g, &a_h.point, &metric).unwrap();
        let a_gh = boundary_action(&gh, &xi, &metric).unwrap();
        prop_assert_eq!(&a_gh.point, &a_g_h.point);
        prop_assert!((a_gh.cocycle - (a_g_h.cocycle + a_h.cocycle)).abs() < 1e-12);
        // h_{g xi}(g x) = h_xi(x) - h_xi(g^-1)
        let gx = spec.multiply(&g, &x).unwrap();
        let ginv = spec.invert(&g).unwrap();
        let lhs = horofunction_eval(&a_g_h.point, &spec.multiply(&g, &gx).unwrap(), &metric).unwrap();
        let rhs = horofunction_eval(&a_h.point, &gx, &metric).unwrap()
            - horofunction_eval(&a_h.point, &ginv, &metric).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }
}

#[test]
fn walks_converge_to_the_boundary() {
    let mu = StepDistribution::uniform_generators(&f2());
    let runs = 1000;
    let stabilized = (0..runs)
        .filter(|&i| {
            let t = sample_trajectory_indexed(&mu, 1000, 7, i);
            ray_convergence(&t, 5).unwrap().stabilized
        })
        .count();
    assert!(stabilized as f64 >= 0.99 * runs as f64, "{stabilized}/{runs}");
}
