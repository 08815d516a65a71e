//! Values recorded from the seeded implementation after checking each one
//! against a direct loop-level computation.

use comformer_core::fixtures::{generate, Family, FixtureSpec};
use comformer_core::graph::build_graph;
use comformer_model::layers::NodeLayer;
use comformer_model::nn::{sigmoid, silu, softplus, Linear, Matrix, NormMode};
use comformer_model::{Model, ModelConfig, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

fn linear_row(l: &Linear, x: &[f64]) -> Vec<f64> {
    (0..l.output_dim()).map(|c| l.bias[(0, c)] + x.iter().enumerate().map(|(r, v)| v * l.weight[(r, c)]).sum::<f64>()).collect()
}

#[test]
fn sodium_embedding_at_seed_zero() {
    let m = Model::new(ModelConfig::default(), Variant::Equivariant).unwrap();
    let got = m.params.species.embed(&[11]).unwrap();
    let row: Vec<f64> = m.params.species.table.row(11).iter().copied().collect();
    let oracle = linear_row(&m.params.species.proj, &row);
    for c in 0..got.ncols() {
        assert!(close(got[(0, c)], oracle[c]));
    }
    let frozen = [0.3101161923583129, -0.24288454158929895, -0.8610139690040216, -0.2759899571154066];
    for (c, v) in frozen.iter().enumerate() {
        assert!(close(got[(0, c)], *v), "channel {c}: {}", got[(0, c)]);
    }
}

#[test]
fn two_node_layer_output() {
    let layer = NodeLayer::new(3, 1e-5, 0.1, &mut ChaCha8Rng::seed_from_u64(7));
    let nodes = Matrix::from_row_slice(2, 3, &[0.1, -0.2, 0.3, 0.5, 0.0, -0.4]);
    let edges = Matrix::from_row_slice(3, 3, &[0.2, 0.2, -0.1, 0.0, 0.7, 0.1, -0.3, 0.4, 0.6]);
    let (src, dst) = ([0, 1, 1], [1, 0, 1]);
    let out = layer.forward(&nodes, &edges, &src, &dst, &mut NormMode::Running);

    // loop oracle; fresh batch norms are x / sqrt(1 + eps)
    let bn = |x: f64| x / (1.0 + 1e-5f64).sqrt();
    let mlp = |m: &comformer_model::nn::Mlp, x: &[f64]| {
        let h: Vec<f64> = linear_row(&m.first, x).into_iter().map(silu).collect();
        linear_row(&m.second, &h)
    };
    let row = |m: &Matrix, r: usize| m.row(r).iter().copied().collect::<Vec<f64>>();
    let mut agg = [[0.0; 3]; 2];
    for e in 0..3 {
        let (i, j) = (dst[e], src[e]);
        let q = linear_row(&layer.query, &row(&nodes, i));
        let ee = linear_row(&layer.edge, &row(&edges, e));
        let k = [linear_row(&layer.key, &row(&nodes, i)), linear_row(&layer.key, &row(&nodes, j)), ee.clone()].concat();
        let v = [linear_row(&layer.value, &row(&nodes, i)), linear_row(&layer.value, &row(&nodes, j)), ee].concat();
        let (sk, sv) = (mlp(&layer.key_mlp, &k), mlp(&layer.value_mlp, &v));
        for c in 0..3 {
            let alpha = q[c] * sk[c] / 3f64.sqrt();
            agg[i][c] += sigmoid(bn(alpha)) * sv[c];
        }
    }
    let frozen = [0.7149688092362948, 0.5304702193407191, 0.7940033171607415, 0.9042795692339405, 0.558117877245288, 0.42920874445960044];
    for i in 0..2 {
        for c in 0..3 {
            let oracle = softplus(nodes[(i, c)] + bn(agg[i][c]));
            assert!(close(out[(i, c)], oracle));
            assert!(close(out[(i, c)], frozen[3 * i + c]), "({i}, {c}): {}", out[(i, c)]);
        }
    }
}

#[test]
fn forward_scalars_on_polonium() {
    let c = generate(&FixtureSpec::new(Family::Cubic, 1, 0)).unwrap();
    for (v, frozen) in [(Variant::Invariant, 0.2541096626478864), (Variant::Equivariant, -0.07115789955457939)] {
        let m = Model::new(ModelConfig::default(), v).unwrap();
        let p = m.forward(&build_graph(&c, 12, v.graph_kind()).unwrap()).unwrap();
        assert!(close(p, frozen), "{v}: {p}");
    }
}
