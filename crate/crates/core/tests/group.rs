use std::collections::{HashMap, VecDeque};

use hyperwalk::ball::{ball, free_ball_size};
use hyperwalk::{FreeWord, GroupElement, GroupSpec, LampState, Letter, Metric, WordMetric};
use proptest::prelude::*;

fn f2() -> GroupSpec {
    GroupSpec::free(2).unwrap()
}

fn word_strategy(rank: u8, max_len: usize) -> impl Strategy<Value = GroupElement> {
    prop::collection::vec(0..2 * rank, 0..max_len)
        .prop_map(|codes| GroupElement::Free(FreeWord::reduce(codes.into_iter().map(Letter))))
}

fn lamp_strategy() -> impl Strategy<Value = GroupElement> {
    (prop::collection::vec((-4i64..4, -3i64..3), 0..5), -5i64..5)
        .prop_map(|(lamps, p)| GroupElement::Lamp(LampState::new(lamps, p)))
}

fn product_strategy(spec: GroupSpec) -> impl Strategy<Value = GroupElement> {
    let gens = spec.generators();
    prop::collection::vec(0..gens.len(), 0..12).prop_map(move |ix| {
        let mut z = spec.identity();
        for i in ix {
            spec.right_mul_assign(&mut z, &gens[i]).unwrap();
        }
        z
    })
}

fn check_group_laws(spec: &GroupSpec, x: &GroupElement, y: &GroupElement, z: &GroupElement) {
    let xy_z = spec.multiply(&spec.multiply(x, y).unwrap(), z).unwrap();
    let x_yz = spec.multiply(x, &spec.multiply(y, z).unwrap()).unwrap();
    assert_eq!(xy_z, x_yz);
    let xinv = spec.invert(x).unwrap();
    assert_eq!(spec.multiply(x, &xinv).unwrap(), spec.identity());
    assert_eq!(spec.word_length(&xinv).unwrap(), spec.word_length(x).unwrap());
    let m = WordMetric(spec);
    let (dxy, dyz, dxz) = (
        m.distance(x, y).unwrap(),
        m.distance(y, z).unwrap(),
        m.distance(x, z).unwrap(),
    );
    assert!(dxz <= dxy + dyz);
    assert_eq!(dxy, m.distance(y, x).unwrap());
}

proptest! {
    #[test]
    fn free_group_laws(x in word_strategy(3, 20), y in word_strategy(3, 20), z in word_strategy(3, 20)) {
        check_group_laws(&GroupSpec::free(3).unwrap(), &x, &y, &z);
    }

    #[test]
    fn lamplighter_laws(x in lamp_strategy(), y in lamp_strategy(), z in lamp_strategy()) {
        check_group_laws(&GroupSpec::lamplighter(), &x, &y, &z);
    }

    #[test]
    fn free_product_laws(
        x in product_strategy(GroupSpec::free_product(vec![2, 3]).unwrap()),
        y in product_strategy(GroupSpec::free_product(vec![2, 3]).unwrap()),
        z in product_strategy(GroupSpec::free_product(vec![2, 3]).unwrap()),
    ) {
        check_group_laws(&GroupSpec::free_product(vec![2, 3]).unwrap(), &x, &y, &z);
    }

    #[test]
    fn display_parse_roundtrip(x in word_strategy(2, 15)) {
        let spec = f2();
        let s = spec.display(&x);
        prop_assert_eq!(spec.parse_element(&s).unwrap(), x);
    }
}

/// Breadth-first distances in the Cayley graph.
fn bfs(spec: &GroupSpec, radius: u64) -> HashMap<GroupElement, u64> {
    let gens = spec.generators();
    let mut dist = HashMap::from([(spec.identity(), 0u64)]);
    let mut queue = VecDeque::from([spec.identity()]);
    while let Some(g) = queue.pop_front() {
        let d = dist[&g];
        if d == radius {
            continue;
        }
        for s in &gens {
            let h = spec.multiply(&g, s).unwrap();
            dist.entry(h.clone()).or_insert_with(|| {
                queue.push_back(h);
                d + 1
            });
        }
    }
    dist
}

#[test]
fn word_length_matches_cayley_graph_distance() {
    for spec in [
        GroupSpec::lamplighter(),
        GroupSpec::free_product(vec![2, 3]).unwrap(),
        GroupSpec::free_product(vec![3, 4, 2]).unwrap(),
        f2(),
    ] {
        let dist = bfs(&spec, 6);
        for (g, d) in &dist {
            assert_eq!(spec.word_length(g).unwrap(), *d, "{}", spec.display(g));
        }
        let b = ball(&spec, 6).unwrap();
        assert_eq!(b.len(), dist.len());
    }
}

#[test]
fn lamplighter_example_length() {
    let spec = GroupSpec::lamplighter();
    let g = spec.parse_element("lamps{-1:1,1:1}@0").unwrap();
    assert_eq!(spec.word_length(&g).unwrap(), 6);
    assert_eq!(bfs(&spec, 6)[&g], 6);
}

#[test]
fn free_ball_counts() {
    assert_eq!(free_ball_size(2, 4), Some(161));
    assert_eq!(ball(&f2(), 4).unwrap().len(), 161);
    assert_eq!(bfs(&f2(), 4).len(), 161);
}
