//! Encoder plus sequence module, producing one feature row per batch item.

use lullaby_autodiff::{Axis, Graph, ParamId, ParamStore, Tensor, Var};
use rand::Rng;

use crate::config::{Architecture, PolicyConfig};
use crate::error::Result;

pub(crate) fn kaiming(fan_in: usize, rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::uniform(rows, cols, (6.0 / fan_in as f64).sqrt(), rng)
}

pub(crate) fn lecun(fan_in: usize, rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::uniform(rows, cols, (3.0 / fan_in as f64).sqrt(), rng)
}

#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn forward(&self, store: &ParamStore, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let y = g.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = g.param(store, b);
                Ok(g.add_row(y, b)?)
            }
            None => Ok(y),
        }
    }
}

pub(crate) fn linear(store: &mut ParamStore, name: &str, init: Tensor, bias: bool) -> Result<Linear> {
    let cols = init.cols();
    let w = store.insert(format!("{name}.w"), init)?;
    let b = if bias {
        Some(store.insert(format!("{name}.b"), Tensor::zeros(1, cols))?)
    } else {
        None
    };
    Ok(Linear { w, b })
}

#[derive(Debug, Clone)]
struct LayerNorm {
    gain: ParamId,
    bias: ParamId,
}

impl LayerNorm {
    fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gain: store.insert(format!("{name}.g"), Tensor::filled(1, dim, 1.0))?,
            bias: store.insert(format!("{name}.b"), Tensor::zeros(1, dim))?,
        })
    }

    fn forward(&self, store: &ParamStore, g: &mut Graph, x: Var) -> Result<Var> {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        Ok(g.layer_norm(x, gain, bias)?)
    }
}

#[derive(Debug, Clone)]
struct LstmLayer {
    w_ih: ParamId,
    w_hh: ParamId,
    b: ParamId,
    hidden: usize,
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    ln1: LayerNorm,
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    out: Linear,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

#[derive(Debug, Clone)]
enum Sequence {
    Lstm {
        layers: Vec<LstmLayer>,
        dropout: f64,
    },
    Transformer {
        cls: ParamId,
        pos: ParamId,
        layers: Vec<EncoderLayer>,
        final_ln: LayerNorm,
        heads: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Trunk {
    encoder: Vec<Linear>,
    sequence: Sequence,
    k: usize,
}

impl Trunk {
    pub fn build(cfg: &PolicyConfig, prefix: &str, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        let width = cfg.encoder.width;
        let mut encoder = Vec::with_capacity(cfg.encoder.layers);
        let mut fan_in = cfg.input_dim;
        for l in 0..cfg.encoder.layers {
            let init = kaiming(fan_in, fan_in, width, rng);
            encoder.push(linear(store, &format!("{prefix}encoder.{l}"), init, true)?);
            fan_in = width;
        }
        let sequence = match cfg.arch {
            Architecture::Lstm => {
                let h = cfg.lstm.hidden;
                let mut layers = Vec::with_capacity(cfg.lstm.num_layers);
                let mut input = width;
                for l in 0..cfg.lstm.num_layers {
                    let name = format!("{prefix}lstm.{l}");
                    let bound = 1.0 / (h as f64).sqrt();
                    let w_ih = store.insert(format!("{name}.w_ih"), Tensor::uniform(input, 4 * h, bound, rng))?;
                    let w_hh = store.insert(format!("{name}.w_hh"), Tensor::uniform(h, 4 * h, bound, rng))?;
                    let mut bias = Tensor::zeros(1, 4 * h);
                    for j in h..2 * h {
                        bias.set(0, j, 1.0);
                    }
                    let b = store.insert(format!("{name}.b"), bias)?;
                    layers.push(LstmLayer {
                        w_ih,
                        w_hh,
                        b,
                        hidden: h,
                    });
                    input = h;
                }
                Sequence::Lstm {
                    layers,
                    dropout: cfg.lstm.dropout,
                }
            }
            Architecture::Transformer => {
                let t = &cfg.transformer;
                let e = t.embed_dim;
                let cls = store.insert(
                    format!("{prefix}tf.cls"),
                    Tensor::uniform(1, e, 0.02 * 3f64.sqrt(), rng),
                )?;
                let pos = store.insert(
                    format!("{prefix}tf.pos"),
                    Tensor::uniform(cfg.seq_len + 1, e, 0.02 * 3f64.sqrt(), rng),
                )?;
                let mut layers = Vec::with_capacity(t.encoder_layers);
                for l in 0..t.encoder_layers {
                    let name = format!("{prefix}tf.{l}");
                    let ln1 = LayerNorm::new(store, &format!("{name}.ln1"), e)?;
                    let wq = store.insert(format!("{name}.wq"), lecun(e, e, e, rng))?;
                    let wk = store.insert(format!("{name}.wk"), lecun(e, e, e, rng))?;
                    let wv = store.insert(format!("{name}.wv"), lecun(e, e, e, rng))?;
                    let out = linear(store, &format!("{name}.out"), lecun(e, e, e, rng), true)?;
                    let ln2 = LayerNorm::new(store, &format!("{name}.ln2"), e)?;
                    let ff1 = linear(store, &format!("{name}.ff1"), kaiming(e, e, t.ff_dim, rng), true)?;
                    let ff2 = linear(store, &format!("{name}.ff2"), lecun(t.ff_dim, t.ff_dim, e, rng), true)?;
                    layers.push(EncoderLayer {
                        ln1,
                        wq,
                        wk,
                        wv,
                        out,
                        ln2,
                        ff1,
                        ff2,
                    });
                }
                let final_ln = LayerNorm::new(store, &format!("{prefix}tf.ln_f"), e)?;
                Sequence::Transformer {
                    cls,
                    pos,
                    layers,
                    final_ln,
                    heads: t.heads,
                }
            }
        };
        Ok(Self {
            encoder,
            sequence,
            k: cfg.seq_len,
        })
    }

    /// Shared MLP applied to every row of the `(batch * k) x input_dim` input.
    pub fn encode(&self, store: &ParamStore, g: &mut Graph, x: Var) -> Result<Var> {
        let mut h = x;
        for layer in &self.encoder {
            let z = layer.forward(store, g, h)?;
            h = g.relu(z)?;
        }
        Ok(h)
    }

    pub fn features<R: Rng + ?Sized>(
        &self,
        store: &ParamStore,
        g: &mut Graph,
        x: Var,
        batch: usize,
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let emb = self.encode(store, g, x)?;
        match &self.sequence {
            Sequence::Lstm { layers, dropout } => self.lstm(store, g, emb, batch, layers, *dropout, train, rng),
            Sequence::Transformer {
                cls,
                pos,
                layers,
                final_ln,
                heads,
            } => self.transformer(store, g, emb, batch, *cls, *pos, layers, final_ln, *heads),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn lstm<R: Rng + ?Sized>(
        &self,
        store: &ParamStore,
        g: &mut Graph,
        emb: Var,
        batch: usize,
        layers: &[LstmLayer],
        dropout: f64,
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let k = self.k;
        let mut inputs: Vec<Var> = (0..k)
            .map(|t| {
                let rows: Vec<usize> = (0..batch).map(|b| b * k + t).collect();
                g.gather_rows(emb, &rows)
            })
            .collect::<std::result::Result<_, _>>()?;
        for (li, layer) in layers.iter().enumerate() {
            let h_dim = layer.hidden;
            let w_ih = g.param(store, layer.w_ih);
            let w_hh = g.param(store, layer.w_hh);
            let bias = g.param(store, layer.b);
            let mut h: Option<Var> = None;
            let mut c: Option<Var> = None;
            let mut outputs = Vec::with_capacity(k);
            for &x_t in &inputs {
                let mut z = g.matmul(x_t, w_ih)?;
                if let Some(h) = h {
                    let r = g.matmul(h, w_hh)?;
                    z = g.add(z, r)?;
                }
                z = g.add_row(z, bias)?;
                let i = g.slice(z, Axis::Cols, 0, h_dim)?;
                let i = g.sigmoid(i)?;
                let f = g.slice(z, Axis::Cols, h_dim, h_dim)?;
                let f = g.sigmoid(f)?;
                let cand = g.slice(z, Axis::Cols, 2 * h_dim, h_dim)?;
                let cand = g.tanh(cand)?;
                let o = g.slice(z, Axis::Cols, 3 * h_dim, h_dim)?;
                let o = g.sigmoid(o)?;
                let ig = g.mul(i, cand)?;
                let c_new = match c {
                    Some(c) => {
                        let fc = g.mul(f, c)?;
                        g.add(fc, ig)?
                    }
                    None => ig,
                };
                let tc = g.tanh(c_new)?;
                let h_new = g.mul(o, tc)?;
                outputs.push(h_new);
                h = Some(h_new);
                c = Some(c_new);
            }
            if li + 1 < layers.len() {
                for out in &mut outputs {
                    *out = g.dropout(*out, dropout, train, rng)?;
                }
            }
            inputs = outputs;
        }
        Ok(*inputs.last().expect("k >= 1"))
    }

    #[allow(clippy::too_many_arguments)]
    fn transformer(
        &self,
        store: &ParamStore,
        g: &mut Graph,
        emb: Var,
        batch: usize,
        cls: ParamId,
        pos: ParamId,
        layers: &[EncoderLayer],
        final_ln: &LayerNorm,
        heads: usize,
    ) -> Result<Var> {
        let k = self.k;
        let tokens = k + 1;
        let cls = g.param(store, cls);
        let mut parts = Vec::with_capacity(2 * batch);
        for b in 0..batch {
            parts.push(cls);
            parts.push(g.slice(emb, Axis::Rows, b * k, k)?);
        }
        let seq = g.concat(&parts, Axis::Rows)?;
        let pos = g.param(store, pos);
        let pos_rows: Vec<usize> = (0..batch).flat_map(|_| 0..tokens).collect();
        let pos = g.gather_rows(pos, &pos_rows)?;
        let mut x = g.add(seq, pos)?;
        for layer in layers {
            let y = layer.ln1.forward(store, g, x)?;
            let wq = g.param(store, layer.wq);
            let wk = g.param(store, layer.wk);
            let wv = g.param(store, layer.wv);
            let q = g.matmul(y, wq)?;
            let kk = g.matmul(y, wk)?;
            let v = g.matmul(y, wv)?;
            let attended = multi_head(g, q, kk, v, batch, tokens, heads)?;
            let projected = layer.out.forward(store, g, attended)?;
            x = g.add(x, projected)?;
            let y = layer.ln2.forward(store, g, x)?;
            let hidden = layer.ff1.forward(store, g, y)?;
            let hidden = g.relu(hidden)?;
            let ff = layer.ff2.forward(store, g, hidden)?;
            x = g.add(x, ff)?;
        }
        let x = final_ln.forward(store, g, x)?;
        let heads_rows: Vec<usize> = (0..batch).map(|b| b * tokens).collect();
        Ok(g.gather_rows(x, &heads_rows)?)
    }
}

/// Scaled dot-product attention for one sequence and one head. Returns the
/// attended values and the attention weights.
pub fn attention(g: &mut Graph, q: Var, k: Var, v: Var) -> Result<(Var, Var)> {
    let d = g.value(q).cols();
    let kt = g.transpose(k)?;
    let scores = g.matmul(q, kt)?;
    let scores = g.scale(scores, 1.0 / (d as f64).sqrt())?;
    let weights = g.softmax(scores, Axis::Cols)?;
    Ok((g.matmul(weights, v)?, weights))
}

fn multi_head(g: &mut Graph, q: Var, k: Var, v: Var, batch: usize, tokens: usize, heads: usize) -> Result<Var> {
    let e = g.value(q).cols();
    let dh = e / heads;
    let mut per_item = Vec::with_capacity(batch);
    for b in 0..batch {
        let (qb, kb, vb) = (
            g.slice(q, Axis::Rows, b * tokens, tokens)?,
            g.slice(k, Axis::Rows, b * tokens, tokens)?,
            g.slice(v, Axis::Rows, b * tokens, tokens)?,
        );
        let mut per_head = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = g.slice(qb, Axis::Cols, h * dh, dh)?;
            let kh = g.slice(kb, Axis::Cols, h * dh, dh)?;
            let vh = g.slice(vb, Axis::Cols, h * dh, dh)?;
            per_head.push(attention(g, qh, kh, vh)?.0);
        }
        per_item.push(if heads == 1 {
            per_head[0]
        } else {
            g.concat(&per_head, Axis::Cols)?
        });
    }
    Ok(if batch == 1 {
        per_item[0]
    } else {
        g.concat(&per_item, Axis::Rows)?
    })
}
