//! Network outputs against plain-loop reimplementations reading the same
//! parameters by name.

use lullaby_autodiff::{Graph, ParamStore, Tensor};
use lullaby_core::env::PolicyInput;
use lullaby_nets::{
    attention, Architecture, LstmPolicyConfig, MlpEncoderConfig, Policy, PolicyConfig, TransformerPolicyConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Mat = Vec<Vec<f64>>;

fn param(store: &ParamStore, name: &str) -> Mat {
    let t = store.get(store.id(name).unwrap());
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn vecmat(x: &[f64], w: &Mat) -> Vec<f64> {
    let mut out = vec![0.0; w[0].len()];
    for (xi, row) in x.iter().zip(w) {
        for (o, wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
    out
}

fn affine(x: &[f64], store: &ParamStore, name: &str) -> Vec<f64> {
    let mut y = vecmat(x, &param(store, &format!("{name}.w")));
    for (v, b) in y.iter_mut().zip(&param(store, &format!("{name}.b"))[0]) {
        *v += b;
    }
    y
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn encoder(store: &ParamStore, layers: usize, column: &[f64]) -> Vec<f64> {
    let mut h = column.to_vec();
    for l in 0..layers {
        h = affine(&h, store, &format!("encoder.{l}"))
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
    }
    h
}

fn random_input(k: usize, rng: &mut ChaCha8Rng) -> PolicyInput {
    PolicyInput::new(k, 14, (0..k * 14).map(|_| rng.random()).collect()).unwrap()
}

fn lstm_reference(p: &Policy, input: &PolicyInput) -> (Vec<f64>, f64) {
    let cfg = p.config();
    let store = p.params();
    let mut seq: Vec<Vec<f64>> = (0..input.k)
        .map(|t| encoder(store, cfg.encoder.layers, input.row(t)))
        .collect();
    let h_dim = cfg.lstm.hidden;
    for l in 0..cfg.lstm.num_layers {
        let w_ih = param(store, &format!("lstm.{l}.w_ih"));
        let w_hh = param(store, &format!("lstm.{l}.w_hh"));
        let b = &param(store, &format!("lstm.{l}.b"))[0];
        let (mut h, mut c) = (vec![0.0; h_dim], vec![0.0; h_dim]);
        let mut out = Vec::new();
        for x in &seq {
            let zx = vecmat(x, &w_ih);
            let zh = vecmat(&h, &w_hh);
            for j in 0..h_dim {
                let z = |gate: usize| zx[gate * h_dim + j] + zh[gate * h_dim + j] + b[gate * h_dim + j];
                let (i, f, g, o) = (sigmoid(z(0)), sigmoid(z(1)), z(2).tanh(), sigmoid(z(3)));
                c[j] = f * c[j] + i * g;
                h[j] = o * c[j].tanh();
            }
            out.push(h.clone());
        }
        seq = out;
    }
    let last = seq.last().unwrap();
    (affine(last, store, "head.actor"), affine(last, store, "head.critic")[0])
}

fn layer_norm(x: &[f64], store: &ParamStore, name: &str) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let g = &param(store, &format!("{name}.g"))[0];
    let b = &param(store, &format!("{name}.b"))[0];
    x.iter()
        .zip(g.iter().zip(b))
        .map(|(v, (g, b))| (v - mean) / (var + 1e-5).sqrt() * g + b)
        .collect()
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn transformer_reference(p: &Policy, input: &PolicyInput) -> (Vec<f64>, f64) {
    let cfg = p.config();
    let store = p.params();
    let t = &cfg.transformer;
    let cls = param(store, "tf.cls");
    let pos = param(store, "tf.pos");
    let mut x: Vec<Vec<f64>> = std::iter::once(cls[0].clone())
        .chain((0..input.k).map(|c| encoder(store, cfg.encoder.layers, input.row(c))))
        .zip(&pos)
        .map(|(tok, p)| tok.iter().zip(p).map(|(a, b)| a + b).collect())
        .collect();
    let dh = t.embed_dim / t.heads;
    for l in 0..t.encoder_layers {
        let y: Vec<Vec<f64>> = x.iter().map(|r| layer_norm(r, store, &format!("tf.{l}.ln1"))).collect();
        let proj = |w: &str| -> Mat {
            y.iter()
                .map(|r| vecmat(r, &param(store, &format!("tf.{l}.{w}"))))
                .collect()
        };
        let (q, k, v) = (proj("wq"), proj("wk"), proj("wv"));
        let mut attended = vec![vec![0.0; t.embed_dim]; x.len()];
        for h in 0..t.heads {
            let cols = h * dh..(h + 1) * dh;
            for i in 0..x.len() {
                let scores: Vec<f64> = (0..x.len())
                    .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let w = softmax(&scores);
                for c in cols.clone() {
                    attended[i][c] = (0..x.len()).map(|j| w[j] * v[j][c]).sum();
                }
            }
        }
        for (xi, a) in x.iter_mut().zip(&attended) {
            for (xv, o) in xi.iter_mut().zip(affine(a, store, &format!("tf.{l}.out"))) {
                *xv += o;
            }
        }
        for xi in x.iter_mut() {
            let y = layer_norm(xi, store, &format!("tf.{l}.ln2"));
            let hidden: Vec<f64> = affine(&y, store, &format!("tf.{l}.ff1"))
                .into_iter()
                .map(|v| v.max(0.0))
                .collect();
            for (xv, o) in xi.iter_mut().zip(affine(&hidden, store, &format!("tf.{l}.ff2"))) {
                *xv += o;
            }
        }
    }
    let top = layer_norm(&x[0], store, "tf.ln_f");
    (affine(&top, store, "head.actor"), affine(&top, store, "head.critic")[0])
}

fn assert_close(arch: Architecture, got: &lullaby_nets::PolicyOutput, want: &(Vec<f64>, f64)) {
    for (a, b) in got.logits.iter().zip(&want.0) {
        assert!((a - b).abs() < 1e-8, "{arch}: logit {a} vs {b}");
    }
    assert!(
        (got.value - want.1).abs() < 1e-8,
        "{arch}: value {} vs {}",
        got.value,
        want.1
    );
}

#[test]
fn lstm_matches_the_scripted_recurrence() {
    let cfg = PolicyConfig {
        encoder: MlpEncoderConfig { layers: 2, width: 16 },
        lstm: LstmPolicyConfig {
            hidden: 12,
            num_layers: 2,
            dropout: 0.1,
        },
        actor_init_scale: 1.0,
        ..PolicyConfig::default()
    };
    let p = Policy::new(cfg, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let input = random_input(5, &mut rng);
    assert_close(
        Architecture::Lstm,
        &p.evaluate(&input).unwrap(),
        &lstm_reference(&p, &input),
    );
}

#[test]
fn transformer_matches_the_scripted_encoder() {
    let cfg = PolicyConfig {
        arch: Architecture::Transformer,
        encoder: MlpEncoderConfig { layers: 2, width: 16 },
        transformer: TransformerPolicyConfig {
            encoder_layers: 2,
            heads: 4,
            embed_dim: 16,
            ff_dim: 24,
        },
        actor_init_scale: 1.0,
        ..PolicyConfig::default()
    };
    let p = Policy::new(cfg, 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let input = random_input(5, &mut rng);
    assert_close(
        Architecture::Transformer,
        &p.evaluate(&input).unwrap(),
        &transformer_reference(&p, &input),
    );
}

#[test]
fn zero_lstm_emits_the_actor_bias() {
    let mut p = Policy::new(PolicyConfig::default(), 3).unwrap();
    let bias_id = p.params().id("head.actor.b").unwrap();
    let ids: Vec<_> = p.params().ids().collect();
    for id in ids {
        let t = p.params_mut().get_mut(id);
        *t = Tensor::zeros(t.rows(), t.cols());
    }
    let b: Vec<f64> = (0..11).map(|i| 0.1 * i as f64 - 0.3).collect();
    *p.params_mut().get_mut(bias_id) = Tensor::row_vector(&b);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = p.evaluate(&random_input(5, &mut rng)).unwrap();
    assert_eq!(out.logits, b);
    assert_eq!(out.value, 0.0);
}

#[test]
fn zero_encoder_gives_zero_embeddings_and_columns_map_pointwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = Policy::new(PolicyConfig::default(), 4).unwrap();
    let column: Vec<f64> = (0..14).map(|_| rng.random()).collect();
    let other: Vec<f64> = (0..14).map(|_| rng.random()).collect();
    let embed = |p: &Policy, cols: &[&Vec<f64>]| {
        let data = cols.iter().flat_map(|c| c.iter().copied()).collect();
        let mut g = Graph::new();
        let v = p
            .encode_states(&mut g, &PolicyInput::new(cols.len(), 14, data).unwrap())
            .unwrap();
        g.value(v).clone()
    };
    let same = embed(&p, &[&column, &column, &column, &column, &column]);
    assert!((1..5).all(|r| same.row(r) == same.row(0)));
    let ab = embed(&p, &[&column, &other, &column, &other, &column]);
    let ba = embed(&p, &[&other, &column, &other, &column, &other]);
    assert_eq!(ab.row(0), ba.row(1));
    assert_eq!(ab.row(1), ba.row(0));

    let mut zero = p.clone();
    let ids: Vec<_> = zero
        .params()
        .ids()
        .filter(|&id| zero.params().name(id).starts_with("encoder."))
        .collect();
    for id in ids {
        let t = zero.params_mut().get_mut(id);
        *t = Tensor::zeros(t.rows(), t.cols());
    }
    assert!(embed(&zero, &[&column, &other, &column, &other, &column])
        .data()
        .iter()
        .all(|&v| v == 0.0));
}

#[test]
fn zero_queries_and_keys_attend_uniformly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tokens = 6;
    let v = Tensor::uniform(tokens, 4, 1.0, &mut rng);
    let mut g = Graph::new();
    let q = g.constant(Tensor::zeros(tokens, 4));
    let k = g.constant(Tensor::zeros(tokens, 4));
    let vv = g.constant(v.clone());
    let (out, weights) = attention(&mut g, q, k, vv).unwrap();
    assert!(g
        .value(weights)
        .data()
        .iter()
        .all(|&w| (w - 1.0 / tokens as f64).abs() < 1e-15));
    for c in 0..4 {
        let mean = (0..tokens).map(|r| v.get(r, c)).sum::<f64>() / tokens as f64;
        for r in 0..tokens {
            assert!((g.value(out).get(r, c) - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn single_column_attention_only_mixes_the_two_tokens() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let q = Tensor::uniform(2, 4, 1.0, &mut rng);
    let k = Tensor::uniform(2, 4, 1.0, &mut rng);
    let v = Tensor::uniform(2, 4, 1.0, &mut rng);
    let mut g = Graph::new();
    let (qv, kv, vv) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
    let (out, _) = attention(&mut g, qv, kv, vv).unwrap();
    let s: Vec<f64> = (0..2)
        .map(|j| (0..4).map(|c| q.get(0, c) * k.get(j, c)).sum::<f64>() / 2.0)
        .collect();
    let w0 = 1.0 / (1.0 + (s[1] - s[0]).exp());
    for c in 0..4 {
        let want = w0 * v.get(0, c) + (1.0 - w0) * v.get(1, c);
        assert!((g.value(out).get(0, c) - want).abs() < 1e-12);
    }
}
