//! Transformer building blocks on top of the tape.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{Graph, NodeId, ParamId, ParamStore, Result, Tensor, TensorError};

/// One forward pass: a fresh tape plus read access to the parameters.
pub struct Fwd<'a> {
    pub g: Graph,
    pub store: &'a ParamStore,
    dropout: f64,
    rng: Option<ChaCha8Rng>,
}

impl<'a> Fwd<'a> {
    pub fn eval(store: &'a ParamStore) -> Self {
        Fwd {
            g: Graph::new(),
            store,
            dropout: 0.0,
            rng: None,
        }
    }

    pub fn train(store: &'a ParamStore, dropout: f64, seed: u64) -> Self {
        Fwd {
            g: Graph::new(),
            store,
            dropout,
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn p(&mut self, id: ParamId) -> NodeId {
        self.g.param(self.store, id)
    }

    /// Inverted dropout; identity at evaluation time.
    pub fn dropout(&mut self, x: NodeId) -> Result<NodeId> {
        let p = self.dropout;
        let Some(rng) = self.rng.as_mut().filter(|_| p > 0.0) else {
            return Ok(x);
        };
        let v = self.g.value(x);
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..v.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let mask = Tensor::new(v.shape().to_vec(), mask)?;
        let m = self.g.constant(mask);
        self.g.mul(x, m)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, din: usize, dout: usize, rng: &mut impl Rng) -> Self {
        Linear {
            w: store.xavier(format!("{name}.w"), din, dout, rng),
            b: store.filled(format!("{name}.b"), dout, 0.0),
        }
    }

    pub fn forward(&self, cx: &mut Fwd, x: NodeId) -> Result<NodeId> {
        let (w, b) = (cx.p(self.w), cx.p(self.b));
        let y = cx.g.matmul(x, w)?;
        cx.g.add_bias(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: store.filled(format!("{name}.gamma"), dim, 1.0),
            beta: store.filled(format!("{name}.beta"), dim, 0.0),
        }
    }

    pub fn forward(&self, cx: &mut Fwd, x: NodeId) -> Result<NodeId> {
        let (g, b) = (cx.p(self.gamma), cx.p(self.beta));
        cx.g.layer_norm(x, g, b)
    }
}

/// `softmax(q·kᵀ / √d) · v`, returning the output and the weight matrix.
///
/// `keep[i * tk + j]` says whether query `i` may attend to key `j`.
pub fn scaled_dot_product_attention(
    g: &mut Graph,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    keep: Option<&[bool]>,
) -> Result<(NodeId, NodeId)> {
    let d = g.value(q).cols();
    let scores = g.matmul_nt(q, k)?;
    let scores = g.scale(scores, 1.0 / (d as f64).sqrt());
    let weights = g.softmax(scores, keep)?;
    let out = g.matmul(weights, v)?;
    Ok((out, weights))
}

fn attention_keep(tq: usize, tk: usize, key_mask: Option<&[bool]>, causal: bool) -> Option<Vec<bool>> {
    if key_mask.is_none() && !causal {
        return None;
    }
    let mut keep = vec![true; tq * tk];
    for i in 0..tq {
        for j in 0..tk {
            let live = key_mask.is_none_or(|m| m[j]);
            keep[i * tk + j] = live && (!causal || j <= i);
        }
    }
    Some(keep)
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut impl Rng) -> Self {
        MultiHeadAttention {
            q: Linear::new(store, &format!("{name}.q"), dim, dim, rng),
            k: Linear::new(store, &format!("{name}.k"), dim, dim, rng),
            v: Linear::new(store, &format!("{name}.v"), dim, dim, rng),
            o: Linear::new(store, &format!("{name}.o"), dim, dim, rng),
            heads,
        }
    }

    /// Attends from `query` rows to `memory` rows. `key_mask` marks live keys.
    pub fn forward(
        &self,
        cx: &mut Fwd,
        query: NodeId,
        memory: NodeId,
        key_mask: Option<&[bool]>,
        causal: bool,
    ) -> Result<NodeId> {
        Ok(self.forward_with_weights(cx, query, memory, key_mask, causal)?.0)
    }

    pub fn forward_with_weights(
        &self,
        cx: &mut Fwd,
        query: NodeId,
        memory: NodeId,
        key_mask: Option<&[bool]>,
        causal: bool,
    ) -> Result<(NodeId, Vec<NodeId>)> {
        let q = self.q.forward(cx, query)?;
        let k = self.k.forward(cx, memory)?;
        let v = self.v.forward(cx, memory)?;
        let (tq, tk, dim) = (cx.g.value(q).rows(), cx.g.value(k).rows(), cx.g.value(q).cols());
        if let Some(m) = key_mask {
            if m.len() != tk {
                return Err(TensorError::Contract(format!("key mask of {} for {tk} keys", m.len())));
            }
        }
        let keep = attention_keep(tq, tk, key_mask, causal);
        let hd = dim / self.heads;
        let mut outs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = cx.g.slice_cols(q, h * hd, (h + 1) * hd)?;
            let kh = cx.g.slice_cols(k, h * hd, (h + 1) * hd)?;
            let vh = cx.g.slice_cols(v, h * hd, (h + 1) * hd)?;
            let (o, w) = scaled_dot_product_attention(&mut cx.g, qh, kh, vh, keep.as_deref())?;
            outs.push(o);
            weights.push(w);
        }
        let cat = if outs.len() == 1 {
            outs[0]
        } else {
            cx.g.concat_cols(&outs)?
        };
        Ok((self.o.forward(cx, cat)?, weights))
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub l1: Linear,
    pub l2: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        FeedForward {
            l1: Linear::new(store, &format!("{name}.l1"), dim, hidden, rng),
            l2: Linear::new(store, &format!("{name}.l2"), hidden, dim, rng),
        }
    }

    pub fn forward(&self, cx: &mut Fwd, x: NodeId) -> Result<NodeId> {
        let h = self.l1.forward(cx, x)?;
        let h = cx.g.relu(h);
        let h = cx.dropout(h)?;
        self.l2.forward(cx, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub ffn: usize,
    pub max_positions: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            layers: 2,
            heads: 4,
            dim: 64,
            ffn: 128,
            max_positions: 64,
            dropout: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(TensorError::Contract(format!(
                "model dim {} not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TensorError::Contract(format!("dropout {}", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    ln1: LayerNorm,
    attn: MultiHeadAttention,
    ln2: LayerNorm,
    ffn: FeedForward,
}

/// Pre-norm transformer encoder with token, position and optional segment
/// embeddings.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub tok: ParamId,
    pub pos: ParamId,
    pub seg: Option<ParamId>,
    layers: Vec<EncoderLayer>,
    ln_f: LayerNorm,
    pub config: EncoderConfig,
}

impl Encoder {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        vocab: usize,
        segments: usize,
        config: EncoderConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let tok = store.normal(format!("{name}.tok"), vocab, d, rng);
        let pos = store.normal(format!("{name}.pos"), config.max_positions, d, rng);
        let seg = (segments > 0).then(|| store.normal(format!("{name}.seg"), segments, d, rng));
        let layers = (0..config.layers)
            .map(|i| {
                let p = format!("{name}.layer{i}");
                EncoderLayer {
                    ln1: LayerNorm::new(store, &format!("{p}.ln1"), d),
                    attn: MultiHeadAttention::new(store, &format!("{p}.attn"), d, config.heads, rng),
                    ln2: LayerNorm::new(store, &format!("{p}.ln2"), d),
                    ffn: FeedForward::new(store, &format!("{p}.ffn"), d, config.ffn, rng),
                }
            })
            .collect();
        let ln_f = LayerNorm::new(store, &format!("{name}.ln_f"), d);
        Ok(Encoder {
            tok,
            pos,
            seg,
            layers,
            ln_f,
            config,
        })
    }

    pub fn forward(
        &self,
        cx: &mut Fwd,
        ids: &[usize],
        positions: &[usize],
        segments: Option<&[usize]>,
        key_mask: Option<&[bool]>,
    ) -> Result<NodeId> {
        if let Some(&p) = positions.iter().find(|&&p| p >= self.config.max_positions) {
            return Err(TensorError::Contract(format!(
                "position {p} beyond {} positions",
                self.config.max_positions
            )));
        }
        let tok = cx.p(self.tok);
        let pos = cx.p(self.pos);
        let mut x = cx.g.embedding(tok, ids)?;
        let pe = cx.g.embedding(pos, positions)?;
        x = cx.g.add(x, pe)?;
        if let (Some(seg), Some(s)) = (self.seg, segments) {
            let table = cx.p(seg);
            let se = cx.g.embedding(table, s)?;
            x = cx.g.add(x, se)?;
        }
        x = cx.dropout(x)?;
        for layer in &self.layers {
            let h = layer.ln1.forward(cx, x)?;
            let h = layer.attn.forward(cx, h, h, key_mask, false)?;
            let h = cx.dropout(h)?;
            x = cx.g.add(x, h)?;
            let h = layer.ln2.forward(cx, x)?;
            let h = layer.ffn.forward(cx, h)?;
            let h = cx.dropout(h)?;
            x = cx.g.add(x, h)?;
        }
        self.ln_f.forward(cx, x)
    }
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    ln1: LayerNorm,
    self_attn: MultiHeadAttention,
    ln2: LayerNorm,
    cross_attn: MultiHeadAttention,
    ln3: LayerNorm,
    ffn: FeedForward,
}

/// Pre-norm transformer decoder: causal self-attention, cross-attention to a
/// memory, feed-forward. Inputs arrive already embedded.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub pos: ParamId,
    layers: Vec<DecoderLayer>,
    ln_f: LayerNorm,
    pub config: EncoderConfig,
}

impl Decoder {
    pub fn new(store: &mut ParamStore, name: &str, config: EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let pos = store.normal(format!("{name}.pos"), config.max_positions, d, rng);
        let layers = (0..config.layers)
            .map(|i| {
                let p = format!("{name}.layer{i}");
                DecoderLayer {
                    ln1: LayerNorm::new(store, &format!("{p}.ln1"), d),
                    self_attn: MultiHeadAttention::new(store, &format!("{p}.self"), d, config.heads, rng),
                    ln2: LayerNorm::new(store, &format!("{p}.ln2"), d),
                    cross_attn: MultiHeadAttention::new(store, &format!("{p}.cross"), d, config.heads, rng),
                    ln3: LayerNorm::new(store, &format!("{p}.ln3"), d),
                    ffn: FeedForward::new(store, &format!("{p}.ffn"), d, config.ffn, rng),
                }
            })
            .collect();
        let ln_f = LayerNorm::new(store, &format!("{name}.ln_f"), d);
        Ok(Decoder {
            pos,
            layers,
            ln_f,
            config,
        })
    }

    pub fn forward(
        &self,
        cx: &mut Fwd,
        inputs: NodeId,
        memory: NodeId,
        memory_mask: Option<&[bool]>,
    ) -> Result<NodeId> {
        let t = cx.g.value(inputs).rows();
        if t > self.config.max_positions {
            return Err(TensorError::Contract(format!(
                "decoder input of {t} beyond {} positions",
                self.config.max_positions
            )));
        }
        let positions: Vec<usize> = (0..t).collect();
        let pos = cx.p(self.pos);
        let pe = cx.g.embedding(pos, &positions)?;
        let mut x = cx.g.add(inputs, pe)?;
        x = cx.dropout(x)?;
        for layer in &self.layers {
            let h = layer.ln1.forward(cx, x)?;
            let h = layer.self_attn.forward(cx, h, h, None, true)?;
            let h = cx.dropout(h)?;
            x = cx.g.add(x, h)?;
            let h = layer.ln2.forward(cx, x)?;
            let h = layer.cross_attn.forward(cx, h, memory, memory_mask, false)?;
            let h = cx.dropout(h)?;
            x = cx.g.add(x, h)?;
            let h = layer.ln3.forward(cx, x)?;
            let h = layer.ffn.forward(cx, h)?;
            let h = cx.dropout(h)?;
            x = cx.g.add(x, h)?;
        }
        self.ln_f.forward(cx, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_key_attention_returns_its_value() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::matrix(3, 2, vec![0.1, -4.0, 7.0, 2.0, 0.0, 0.0]).unwrap());
        let k = g.constant(Tensor::matrix(1, 2, vec![0.5, 0.5]).unwrap());
        let v = g.constant(Tensor::matrix(1, 3, vec![1.5, -2.0, 3.0]).unwrap());
        let (out, w) = scaled_dot_product_attention(&mut g, q, k, v, None).unwrap();
        for r in 0..3 {
            assert_eq!(g.value(out).row(r), &[1.5, -2.0, 3.0]);
            assert_eq!(g.value(w).row(r), &[1.0]);
        }
    }

    #[test]
    fn attention_rows_are_normalized() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::matrix(2, 2, vec![0.3, 1.0, -1.0, 2.0]).unwrap());
        let k = g.constant(Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap());
        let v = g.constant(Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap());
        let (_, w) = scaled_dot_product_attention(&mut g, q, k, v, None).unwrap();
        for r in 0..2 {
            assert!((g.value(w).row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_of_constant_row_is_zero_before_affine() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(1, 4, vec![2.5; 4]).unwrap());
        let gamma = g.constant(Tensor::vector(vec![1.0; 4]));
        let beta = g.constant(Tensor::vector(vec![0.0; 4]));
        let y = g.layer_norm(x, gamma, beta).unwrap();
        assert!(g.value(y).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn layer_norm_rows_have_zero_mean_unit_variance() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(2, 3, vec![1.0, 2.0, 6.0, -3.0, 0.0, 0.5]).unwrap());
        let gamma = g.constant(Tensor::vector(vec![1.0; 3]));
        let beta = g.constant(Tensor::vector(vec![0.0; 3]));
        let y = g.layer_norm(x, gamma, beta).unwrap();
        for r in 0..2 {
            let row = g.value(y).row(r);
            let mean = row.iter().sum::<f64>() / 3.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn encoder_rejects_indivisible_heads() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = EncoderConfig {
            dim: 10,
            heads: 4,
            ..Default::default()
        };
        assert!(Encoder::new(&mut store, "e", 5, 0, cfg, &mut rng).is_err());
    }

    #[test]
    fn causal_mask_hides_future() {
        let keep = attention_keep(3, 3, None, true).unwrap();
        assert_eq!(keep, vec![true, false, false, true, true, false, true, true, true]);
        let keep = attention_keep(1, 3, Some(&[true, false, true]), false).unwrap();
        assert_eq!(keep, vec![true, false, true]);
    }
}
