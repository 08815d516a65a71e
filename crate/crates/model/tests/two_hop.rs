use comformer_core::fixtures::{generate, Family, FixtureSpec};
use comformer_core::graph::{build_equivariant_graph, build_invariant_graph};
use comformer_model::two_hop_angle_check;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn layer_matches_path_sum_on_random_crystals() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..20 {
        let fam = if seed % 2 == 0 { Family::TriclinicRandom } else { Family::Orthorhombic };
        let c = generate(&FixtureSpec::new(fam, rng.random_range(1..=10), seed)).unwrap();
        let g = build_equivariant_graph(&c, 12).unwrap();
        let scalars: Vec<f64> = (0..c.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c1 = rng.random_range(0.5..2.0);
        let rep = two_hop_angle_check(&g, c1, &scalars).unwrap();
        assert!(rep.max_relative_error() < 1e-10, "seed {seed}: {}", rep.max_relative_error());
    }
}

#[test]
fn invariant_graphs_are_rejected() {
    let c = generate(&FixtureSpec::new(Family::Cubic, 1, 0)).unwrap();
    let g = build_invariant_graph(&c, 6).unwrap();
    assert!(two_hop_angle_check(&g, 1.0, &[1.0]).is_err());
}
