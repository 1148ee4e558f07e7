use lullaby_autodiff::gradcheck::{max_relative_error, numeric_gradient};
use lullaby_autodiff::{Axis, Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
const REL_TOL: f64 = 1e-4;
const ABS_FLOOR: f64 = 1e-6;
const INSTANCES: u64 = 10;

/// Random tensor whose entries stay away from zero so kinks (relu, clamp,
/// minimum) are never within one finite-difference step.
fn away_from_zero(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let mag = 0.1 + rng.random::<f64>();
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

fn shape(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(1..5), rng.random_range(1..6))
}

/// Builds `sum(w ⊙ op(inputs))` with a fixed random weighting so every
/// output element contributes a distinct amount to the loss.
fn check_op<F>(name: &str, inputs: Vec<Tensor>, op: F)
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let eval = |values: &[Tensor]| -> (f64, Vec<Option<Tensor>>) {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.input(t.clone())).collect();
        let out = op(&mut g, &vars);
        let s = g.value(out).shape();
        let weights: Vec<f64> = (0..s[0] * s[1])
            .map(|i| 0.5 + 0.37 * ((i * 7 + 3) % 11) as f64 / 11.0)
            .collect();
        let w = g.constant(Tensor::from_vec(s[0], s[1], weights).unwrap());
        let weighted = g.mul(out, w).unwrap();
        let loss = g.sum(weighted).unwrap();
        let value = g.value(loss).item();
        let grads = g.backward(loss).unwrap();
        (value, vars.iter().map(|v| grads.wrt(*v).cloned()).collect())
    };
    let (_, analytic) = eval(&inputs);
    for (i, input) in inputs.iter().enumerate() {
        let numeric = numeric_gradient(input, H, |probe| {
            let mut values = inputs.clone();
            values[i] = probe.clone();
            eval(&values).0
        });
        let a = analytic[i]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(input.rows(), input.cols()));
        let err = max_relative_error(&a, &numeric, ABS_FLOOR);
        assert!(err <= REL_TOL, "{name}: input {i} rel err {err:e}");
    }
}

fn for_instances(mut body: impl FnMut(&mut ChaCha8Rng)) {
    for seed in 0..INSTANCES {
        body(&mut ChaCha8Rng::seed_from_u64(seed));
    }
}

#[test]
fn matmul_gradients() {
    for_instances(|rng| {
        let (m, k) = shape(rng);
        let n = rng.random_range(1..5);
        check_op(
            "matmul",
            vec![away_from_zero(m, k, rng), away_from_zero(k, n, rng)],
            |g, v| g.matmul(v[0], v[1]).unwrap(),
        );
    });
}

#[test]
fn elementwise_binary_gradients() {
    for_instances(|rng| {
        let (m, n) = shape(rng);
        let a = away_from_zero(m, n, rng);
        let b = away_from_zero(m, n, rng);
        check_op("add", vec![a.clone(), b.clone()], |g, v| g.add(v[0], v[1]).unwrap());
        check_op("sub", vec![a.clone(), b.clone()], |g, v| g.sub(v[0], v[1]).unwrap());
        check_op("mul", vec![a.clone(), b.clone()], |g, v| g.mul(v[0], v[1]).unwrap());
        // offset b so the two operands never tie within a step
        let b_shift = a.zip_map(&b, |x, y| x + y.signum() * (0.05 + y.abs()));
        check_op("minimum", vec![a.clone(), b_shift], |g, v| {
            g.minimum(v[0], v[1]).unwrap()
        });
        let row = away_from_zero(1, n, rng);
        check_op("add_row", vec![a, row], |g, v| g.add_row(v[0], v[1]).unwrap());
    });
}

#[test]
fn elementwise_unary_gradients() {
    for_instances(|rng| {
        let (m, n) = shape(rng);
        let x = away_from_zero(m, n, rng);
        check_op("relu", vec![x.clone()], |g, v| g.relu(v[0]).unwrap());
        check_op("tanh", vec![x.clone()], |g, v| g.tanh(v[0]).unwrap());
        check_op("sigmoid", vec![x.clone()], |g, v| g.sigmoid(v[0]).unwrap());
        check_op("exp", vec![x.clone()], |g, v| g.exp(v[0]).unwrap());
        check_op("square", vec![x.clone()], |g, v| g.square(v[0]).unwrap());
        check_op("scale", vec![x.clone()], |g, v| g.scale(v[0], -1.7).unwrap());
        check_op("add_scalar", vec![x.clone()], |g, v| g.add_scalar(v[0], 0.3).unwrap());
        check_op("transpose", vec![x.clone()], |g, v| g.transpose(v[0]).unwrap());
        let positive = x.map(f64::abs);
        check_op("log", vec![positive], |g, v| g.log(v[0]).unwrap());
        // clamp limits placed between sample values, never on them
        check_op("clamp", vec![x], |g, v| g.clamp(v[0], -0.55, 0.62).unwrap());
    });
}

#[test]
fn softmax_and_log_softmax_gradients() {
    for_instances(|rng| {
        let (m, n) = shape(rng);
        let x = away_from_zero(m, n, rng);
        check_op("softmax cols", vec![x.clone()], |g, v| {
            g.softmax(v[0], Axis::Cols).unwrap()
        });
        check_op("softmax rows", vec![x.clone()], |g, v| {
            g.softmax(v[0], Axis::Rows).unwrap()
        });
        check_op("log_softmax", vec![x], |g, v| g.log_softmax(v[0]).unwrap());
    });
}

#[test]
fn layer_norm_gradients() {
    for_instances(|rng| {
        let m = rng.random_range(1..5);
        let n = rng.random_range(2..7);
        let inputs = vec![
            away_from_zero(m, n, rng),
            away_from_zero(1, n, rng),
            away_from_zero(1, n, rng),
        ];
        check_op("layer_norm", inputs, |g, v| g.layer_norm(v[0], v[1], v[2]).unwrap());
    });
}

#[test]
fn dropout_gradient_follows_mask() {
    for_instances(|rng| {
        let (m, n) = shape(rng);
        let x = away_from_zero(m, n, rng);
        let seed = rng.random::<u64>();
        check_op("dropout", vec![x], move |g, v| {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
            g.dropout(v[0], 0.3, true, &mut mask_rng).unwrap()
        });
    });
}

#[test]
fn structural_gradients() {
    for_instances(|rng| {
        let (m, n) = shape(rng);
        let a = away_from_zero(m, n, rng);
        let b = away_from_zero(m + 1, n, rng);
        let c = away_from_zero(m, n + 2, rng);
        check_op("concat rows", vec![a.clone(), b.clone()], |g, v| {
            g.concat(&[v[0], v[1]], Axis::Rows).unwrap()
        });
        check_op("concat cols", vec![a.clone(), c.clone()], |g, v| {
            g.concat(&[v[0], v[1]], Axis::Cols).unwrap()
        });
        check_op("slice rows", vec![b.clone()], move |g, v| {
            g.slice(v[0], Axis::Rows, 1, m).unwrap()
        });
        check_op("slice cols", vec![c.clone()], move |g, v| {
            g.slice(v[0], Axis::Cols, 1, n).unwrap()
        });
        let picks: Vec<usize> = (0..m).map(|r| (r * 3) % n).collect();
        check_op("pick", vec![a.clone()], move |g, v| g.pick(v[0], &picks).unwrap());
        let rows: Vec<usize> = vec![m, 0, m, (m + 1) / 2];
        check_op("gather_rows", vec![b], move |g, v| g.gather_rows(v[0], &rows).unwrap());
        check_op("sum", vec![a.clone()], |g, v| g.sum(v[0]).unwrap());
        check_op("mean", vec![a.clone()], |g, v| g.mean(v[0]).unwrap());
        check_op("sum_along cols", vec![a.clone()], |g, v| {
            g.sum_along(v[0], Axis::Cols).unwrap()
        });
        check_op("sum_along rows", vec![a], |g, v| g.sum_along(v[0], Axis::Rows).unwrap());
    });
}

#[test]
fn two_layer_mlp_matches_finite_differences() {
    for_instances(|rng| {
        let batch = rng.random_range(1..4);
        let (d, h, o) = (rng.random_range(2..6), rng.random_range(2..8), rng.random_range(1..4));
        let inputs = vec![
            away_from_zero(batch, d, rng),
            away_from_zero(d, h, rng),
            away_from_zero(1, h, rng),
            away_from_zero(h, o, rng),
            away_from_zero(1, o, rng),
        ];
        check_op("mlp", inputs, |g, v| {
            let z = g.matmul(v[0], v[1]).unwrap();
            let z = g.add_row(z, v[2]).unwrap();
            let z = g.tanh(z).unwrap();
            let z = g.matmul(z, v[3]).unwrap();
            let z = g.add_row(z, v[4]).unwrap();
            let s = g.square(z).unwrap();
            g.mean(s).unwrap()
        });
    });
}
