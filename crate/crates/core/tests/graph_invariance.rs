use comformer_core::fixtures::{generate, Family, FixtureSpec};
use comformer_core::geometry::{random_rotation, Crystal, Lattice, Vec3};
use comformer_core::graph::{
    build_equivariant_graph, build_invariant_graph, compare_graphs, graph_deviation, periodic_knn, CrystalGraph,
};
use comformer_core::symmetry::{
    apply_isometry, apply_unimodular, fuzz_invariance, mirror, random_unimodular, shift_origin, FuzzOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixtures() -> Vec<Crystal> {
    vec![
        generate(&FixtureSpec::new(Family::TriclinicRandom, 5, 1)).unwrap(),
        generate(&FixtureSpec::new(Family::TriclinicRandom, 11, 2)).unwrap(),
        generate(&FixtureSpec::new(Family::ChiralHelix, 4, 0)).unwrap(),
    ]
}

#[test]
fn se3_invariance_hundred_isometries() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for c in fixtures() {
        let g = build_invariant_graph(&c, 12).unwrap();
        for _ in 0..100 {
            let rot = random_rotation(rng.random());
            let t = Vec3::from_fn(|_, _| rng.random_range(-10.0..10.0));
            let moved = apply_isometry(&c, &rot, &t).unwrap();
            let gm = build_invariant_graph(&moved, 12).unwrap();
            assert!(compare_graphs(&g, &gm, 1e-9).unwrap(), "deviation {}", graph_deviation(&g, &gm).unwrap());
        }
    }
}

#[test]
fn periodic_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for c in fixtures() {
        assert!(!build_invariant_graph(&c, 12).unwrap().lattice_repr.diagnostics.is_degenerate());
        let g = build_invariant_graph(&c, 12).unwrap();
        for _ in 0..50 {
            let t = Vec3::from_fn(|_, _| rng.random_range(0.0..1.0));
            let shifted = build_invariant_graph(&shift_origin(&c, &t), 12).unwrap();
            assert!(compare_graphs(&g, &shifted, 1e-9).unwrap());
            let u = random_unimodular(&mut rng);
            let redescribed = build_invariant_graph(&apply_unimodular(&c, &u).unwrap(), 12).unwrap();
            assert!(compare_graphs(&g, &redescribed, 1e-9).unwrap());
        }
        assert!(compare_graphs(&g, &build_invariant_graph(&c.wrap_to_cell(), 12).unwrap(), 1e-9).unwrap());
    }
}

#[test]
fn so3_equivariance_index_matched() {
    for c in fixtures() {
        let g = build_equivariant_graph(&c, 12).unwrap();
        for seed in 0..20 {
            let rot = random_rotation(seed);
            let moved = apply_isometry(&c, &rot, &Vec3::new(1.0, -2.0, 0.5)).unwrap();
            let gm = build_equivariant_graph(&moved, 12).unwrap();
            assert_eq!(g.edges.len(), gm.edges.len());
            for (a, b) in g.edges.iter().zip(&gm.edges) {
                assert_eq!((a.src, a.dst, a.image, a.designated), (b.src, b.dst, b.image, b.designated));
                assert!((rot * a.vec.unwrap() - b.vec.unwrap()).amax() < 1e-9);
            }
        }
    }
}

#[test]
fn fuzz_report_clean_on_fixtures() {
    for (i, c) in fixtures().iter().enumerate() {
        let rep = fuzz_invariance(c, 12, 30, i as u64, &FuzzOptions::default()).unwrap();
        assert_eq!(rep.failed, 0, "{rep:?}");
    }
}

fn max_angle_triple_difference(a: &CrystalGraph, b: &CrystalGraph) -> f64 {
    // per node, the sorted non-designated angle triples compared position by position
    let triples = |g: &CrystalGraph, i: usize| {
        let mut t: Vec<[f64; 4]> = g
            .edges
            .iter()
            .filter(|e| e.dst == i)
            .map(|e| {
                let x = e.angles.unwrap();
                [e.dist, x[0], x[1], x[2]]
            })
            .collect();
        t.sort_by(|p, q| p.partial_cmp(q).unwrap());
        t
    };
    let mut worst: f64 = 0.0;
    for i in 0..a.num_nodes() {
        for (p, q) in triples(a, i).iter().zip(triples(b, i)) {
            for m in 1..4 {
                worst = worst.max((p[m] - q[m]).abs());
            }
        }
    }
    worst
}

#[test]
fn chirality_detected_and_achiral_unchanged() {
    let helix = generate(&FixtureSpec::new(Family::ChiralHelix, 4, 0)).unwrap();
    let g = build_invariant_graph(&helix, 12).unwrap();
    let gm = build_invariant_graph(&mirror(&helix, &Vec3::z()).unwrap(), 12).unwrap();
    assert!(!compare_graphs(&g, &gm, 1e-9).unwrap());
    assert!(max_angle_triple_difference(&g, &gm) > 1e-3);

    let l = Lattice::cubic(5.64).unwrap();
    let frac: Vec<Vec3> = [
        [0.0, 0.0, 0.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
        [0.5, 0.5, 0.0],
        [0.5, 0.5, 0.5],
        [0.5, 0.0, 0.0],
        [0.0, 0.5, 0.0],
        [0.0, 0.0, 0.5],
    ]
    .map(Vec3::from)
    .to_vec();
    let rocksalt = Crystal::from_fractional(l, &frac, vec![11, 11, 11, 11, 17, 17, 17, 17]).unwrap();
    let g = build_invariant_graph(&rocksalt, 12).unwrap();
    let gm = build_invariant_graph(&mirror(&rocksalt, &Vec3::x()).unwrap(), 12).unwrap();
    assert!(compare_graphs(&g, &gm, 1e-9).unwrap());
}

#[test]
fn mirror_twice_restores_fingerprint() {
    let helix = generate(&FixtureSpec::new(Family::ChiralHelix, 5, 3)).unwrap();
    let n = Vec3::new(1.0, 2.0, -0.5).normalize();
    let twice = mirror(&mirror(&helix, &n).unwrap(), &n).unwrap();
    let g = build_invariant_graph(&helix, 12).unwrap();
    assert!(compare_graphs(&g, &build_invariant_graph(&twice, 12).unwrap(), 1e-9).unwrap());
}

#[test]
fn edge_count_matches_knn_plus_self_edges() {
    for c in fixtures() {
        for k in [1, 6, 12, 25] {
            let g = build_invariant_graph(&c, k).unwrap_or_else(|_| {
                comformer_core::graph::build_graph_unchecked(&c, k, comformer_core::GraphKind::Invariant).unwrap()
            });
            let lists = periodic_knn(&c, k).unwrap();
            let knn: usize = lists.iter().map(|l| l.neighbors.len()).sum();
            assert!(knn >= c.len() * k);
            assert_eq!(g.edges.len(), knn + 3 * c.len());
            for (i, l) in lists.iter().enumerate() {
                assert_eq!(g.per_node_radius[i], l.radius);
                assert!(g.edges.iter().filter(|e| e.dst == i && e.designated.is_some()).count() == 3);
            }
        }
    }
}

#[test]
fn designated_self_edges_use_repr_coefficients() {
    let c = generate(&FixtureSpec::new(Family::TriclinicRandom, 6, 4)).unwrap();
    let g = build_invariant_graph(&c, 12).unwrap();
    for e in g.edges.iter().filter(|e| e.designated.is_some()) {
        let m = e.designated.unwrap() as usize;
        assert_eq!(e.src, e.dst);
        assert_eq!(e.image, g.lattice_repr.coeffs[m]);
        assert!((e.dist - g.lattice_repr.vectors[m].norm()).abs() < 1e-12);
    }
}
