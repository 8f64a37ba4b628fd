//! Layers built from tape primitives. Each layer only stores [`ParamId`]s;
//! values live in the [`ParamStore`] so one store can back many tapes.

use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: store.add_xavier(format!("{name}.weight"), fan_in, fan_out, rng),
            bias: Some(store.add_zeros(format!("{name}.bias"), &[1, fan_out])),
            fan_in,
            fan_out,
        }
    }

    pub fn without_bias(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: store.add_xavier(format!("{name}.weight"), fan_in, fan_out, rng),
            bias: None,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let w = t.param(self.weight);
        let y = t.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = t.param(b);
                t.add_row(y, b)
            }
            None => y,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gamma: store.add_filled(format!("{name}.gamma"), &[1, dim], 1.0),
            beta: store.add_zeros(format!("{name}.beta"), &[1, dim]),
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let g = t.param(self.gamma);
        let b = t.param(self.beta);
        t.layer_norm(x, g, b)
    }
}

/// Two linear maps with a GELU in between.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_hidden: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            hidden: Linear::new(store, &format!("{name}.fc1"), d_in, d_hidden, rng),
            out: Linear::new(store, &format!("{name}.fc2"), d_hidden, d_out, rng),
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let h = self.hidden.forward(t, x);
        let h = t.gelu(h);
        self.out.forward(t, h)
    }
}

/// Learned lookup table, one row per index.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub count: usize,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, name: &str, count: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            table: store.add_xavier(format!("{name}.table"), count, dim, rng),
            count,
        }
    }

    pub fn row(&self, t: &mut Tape, index: usize) -> Var {
        assert!(index < self.count, "embedding index {index} >= {}", self.count);
        let tab = t.param(self.table);
        t.slice_rows(tab, index, 1)
    }

    /// All rows, `[count, dim]`.
    pub fn all(&self, t: &mut Tape) -> Var {
        t.param(self.table)
    }
}

/// Scaled dot-product attention over `heads` heads, with input and output
/// projections.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim {dim} not divisible by {heads} heads");
        Self {
            q: Linear::new(store, &format!("{name}.q"), dim, dim, rng),
            // a key bias only shifts every score of a query equally
            k: Linear::without_bias(store, &format!("{name}.k"), dim, dim, rng),
            v: Linear::new(store, &format!("{name}.v"), dim, dim, rng),
            o: Linear::new(store, &format!("{name}.o"), dim, dim, rng),
            heads,
            dim,
        }
    }

    /// `mask` is `[n_query * n_key]` row-major, `true` = attend. A query
    /// whose keys are all masked receives a zero context vector (its output
    /// is the output-projection bias).
    pub fn forward(&self, t: &mut Tape, query: Var, key: Var, value: Var, mask: Option<&[bool]>) -> Var {
        let q = self.q.forward(t, query);
        let k = self.k.forward(t, key);
        let v = self.v.forward(t, value);
        let ctx = multi_head_attention(t, q, k, v, mask, self.heads);
        self.o.forward(t, ctx)
    }
}

/// Core of [`MultiHeadAttention`] on already-projected `q`, `k`, `v`.
pub fn multi_head_attention(t: &mut Tape, q: Var, k: Var, v: Var, mask: Option<&[bool]>, heads: usize) -> Var {
    let dim = t.value(q).cols();
    assert_eq!(dim % heads, 0, "feature dim {dim} not divisible by {heads}");
    assert_eq!(t.value(k).rows(), t.value(v).rows(), "key/value count mismatch");
    if let Some(m) = mask {
        assert_eq!(m.len(), t.value(q).rows() * t.value(k).rows(), "mask shape");
    }
    let dh = dim / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                t.slice_cols(q, h * dh, dh),
                t.slice_cols(k, h * dh, dh),
                t.slice_cols(v, h * dh, dh),
            )
        };
        let s = t.matmul_nt(qh, kh);
        let s = t.scale(s, scale);
        let w = t.softmax(s, mask);
        outs.push(t.matmul(w, vh));
    }
    if heads == 1 {
        outs[0]
    } else {
        t.concat_cols(&outs)
    }
}

/// Pre-norm transformer block: attention then feed-forward, both residual.
#[derive(Clone, Debug)]
pub struct AttentionBlock {
    pub norm_q: LayerNorm,
    pub norm_kv: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm_ff: LayerNorm,
    pub ff: Mlp,
}

impl AttentionBlock {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, ff_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            norm_q: LayerNorm::new(store, &format!("{name}.norm_q"), dim),
            norm_kv: LayerNorm::new(store, &format!("{name}.norm_kv"), dim),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, rng),
            norm_ff: LayerNorm::new(store, &format!("{name}.norm_ff"), dim),
            ff: Mlp::new(store, &format!("{name}.ff"), dim, ff_dim, dim, rng),
        }
    }

    pub fn self_attend(&self, t: &mut Tape, x: Var, mask: Option<&[bool]>) -> Var {
        let h = self.norm_q.forward(t, x);
        let a = self.attn.forward(t, h, h, h, mask);
        let x = t.add(x, a);
        self.feed_forward(t, x)
    }

    pub fn cross_attend(&self, t: &mut Tape, x: Var, context: Var, mask: Option<&[bool]>) -> Var {
        let h = self.norm_q.forward(t, x);
        let c = self.norm_kv.forward(t, context);
        let a = self.attn.forward(t, h, c, c, mask);
        let x = t.add(x, a);
        self.feed_forward(t, x)
    }

    fn feed_forward(&self, t: &mut Tape, x: Var) -> Var {
        let h = self.norm_ff.forward(t, x);
        let f = self.ff.forward(t, h);
        t.add(x, f)
    }
}

/// Key mask broadcast over `n_query` rows.
pub fn key_mask(n_query: usize, keys: &[bool]) -> Vec<bool> {
    let mut m = Vec::with_capacity(n_query * keys.len());
    for _ in 0..n_query {
        m.extend_from_slice(keys);
    }
    m
}

#[derive(Clone, Debug)]
pub struct LstmCell {
    /// `[input, 4*hidden]`, gate order i, f, g, o.
    pub w_input: ParamId,
    /// `[hidden, 4*hidden]`
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w_input: store.add_xavier(format!("{name}.w_input"), input, 4 * hidden, rng),
            w_hidden: store.add_xavier(format!("{name}.w_hidden"), hidden, 4 * hidden, rng),
            bias: store.add_zeros(format!("{name}.bias"), &[1, 4 * hidden]),
            hidden,
        }
    }

    pub fn step(&self, t: &mut Tape, x: Var, h: Var, c: Var) -> (Var, Var) {
        let wx = t.param(self.w_input);
        let wh = t.param(self.w_hidden);
        let b = t.param(self.bias);
        lstm_step(t, x, h, c, wx, wh, b)
    }
}

/// Standard LSTM update on batched rows:
/// `c' = σ(f)⊙c + σ(i)⊙tanh(g)`, `h' = σ(o)⊙tanh(c')`.
pub fn lstm_step(t: &mut Tape, x: Var, h: Var, c: Var, w_input: Var, w_hidden: Var, bias: Var) -> (Var, Var) {
    let hd = t.value(h).cols();
    assert_eq!(t.value(w_input).cols(), 4 * hd, "lstm gate width");
    assert_eq!(t.value(w_hidden).rows(), hd, "lstm hidden width");
    assert_eq!(t.value(c).cols(), hd, "lstm cell width");
    let gx = t.matmul(x, w_input);
    let gh = t.matmul(h, w_hidden);
    let gates = t.add(gx, gh);
    let gates = t.add_row(gates, bias);
    let i = t.slice_cols(gates, 0, hd);
    let f = t.slice_cols(gates, hd, hd);
    let g = t.slice_cols(gates, 2 * hd, hd);
    let o = t.slice_cols(gates, 3 * hd, hd);
    let i = t.sigmoid(i);
    let f = t.sigmoid(f);
    let g = t.tanh(g);
    let o = t.sigmoid(o);
    let keep = t.mul(f, c);
    let write = t.mul(i, g);
    let c_next = t.add(keep, write);
    let tc = t.tanh(c_next);
    let h_next = t.mul(o, tc);
    (h_next, c_next)
}
