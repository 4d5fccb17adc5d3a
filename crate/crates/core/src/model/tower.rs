//! A small post-LN transformer encoder plus the token-wise importance head,
//! with hand-written backward passes.
//!
//! A [`Tower`] maps a token sequence to a dense, nonnegative vocabulary-sized
//! vector by summing the rectified per-token logits. The same structure backs
//! the importance predictor, the gating controller and the asymmetric query
//! encoder; only the parameters differ.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    gelu, gelu_grad, layer_norm, layer_norm_row, layer_norm_row_backward, linear, Matrix, LAYER_NORM_EPS,
};
use crate::text::{TokenSeq, CLS_ID, SEP_ID};

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerDims {
    pub vocab_size: usize,
    pub d: usize,
    pub d_ff: usize,
    pub n_layers: usize,
    pub max_len: usize,
}

impl TowerDims {
    pub fn validate(&self) -> Result<()> {
        if self.d < 4 || self.n_layers < 1 || self.d_ff < 1 || self.max_len < 2 || self.vocab_size < 5 {
            return Err(Error::InvalidArgument(format!("invalid tower dimensions {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ln1_gamma: Matrix,
    pub ln1_beta: Matrix,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub ln2_gamma: Matrix,
    pub ln2_beta: Matrix,
}

impl LayerParams {
    fn init<R: Rng + ?Sized>(d: usize, d_ff: usize, rng: &mut R) -> Self {
        LayerParams {
            wq: Matrix::random_normal(d, d, INIT_STD, rng),
            wk: Matrix::random_normal(d, d, INIT_STD, rng),
            wv: Matrix::random_normal(d, d, INIT_STD, rng),
            wo: Matrix::random_normal(d, d, INIT_STD, rng),
            ln1_gamma: Matrix::filled(1, d, 1.0),
            ln1_beta: Matrix::zeros(1, d),
            w1: Matrix::random_normal(d_ff, d, INIT_STD, rng),
            b1: Matrix::zeros(1, d_ff),
            w2: Matrix::random_normal(d, d_ff, INIT_STD, rng),
            b2: Matrix::zeros(1, d),
            ln2_gamma: Matrix::filled(1, d, 1.0),
            ln2_beta: Matrix::zeros(1, d),
        }
    }

    fn fields(&self) -> [(&'static str, &Matrix); 12] {
        [
            ("wq", &self.wq),
            ("wk", &self.wk),
            ("wv", &self.wv),
            ("wo", &self.wo),
            ("ln1_gamma", &self.ln1_gamma),
            ("ln1_beta", &self.ln1_beta),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
            ("ln2_gamma", &self.ln2_gamma),
            ("ln2_beta", &self.ln2_beta),
        ]
    }

    fn fields_mut(&mut self) -> [&mut Matrix; 12] {
        [
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ln1_gamma,
            &mut self.ln1_beta,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.ln2_gamma,
            &mut self.ln2_beta,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// Word embeddings `E` (v x d); also the output projection of the head.
    pub embedding: Matrix,
    pub position: Matrix,
    pub layers: Vec<LayerParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceHead {
    pub transform_w: Matrix,
    pub transform_b: Matrix,
    pub ln_gamma: Matrix,
    pub ln_beta: Matrix,
    pub output_bias: Matrix,
}

impl ImportanceHead {
    /// Dense logits of one contextual embedding over the vocabulary:
    /// `layer_norm(gelu(h W_t^T + b_t)) E^T + b`.
    pub fn token_importance(&self, h: &[f64], embedding: &Matrix) -> Result<Vec<f64>> {
        if embedding.rows() != self.output_bias.cols() || embedding.cols() != h.len() {
            return Err(Error::shape("token_importance", "embedding does not match head"));
        }
        let z = linear(h, &self.transform_w, self.transform_b.data())?;
        let a: Vec<f64> = z.into_iter().map(gelu).collect();
        let u = layer_norm(&a, self.ln_gamma.data(), self.ln_beta.data(), LAYER_NORM_EPS)?;
        linear(&u, embedding, self.output_bias.data())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tower {
    pub encoder: EncoderParams,
    pub head: ImportanceHead,
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct TowerCache {
    ids: Vec<u32>,
    layers: Vec<LayerCache>,
    hidden: Matrix,
    head_z: Matrix,
    head_xhat: Matrix,
    head_inv_std: Vec<f64>,
    head_u: Matrix,
    /// Per-token logits `I_i` (L x v).
    pub logits: Matrix,
    /// Which positions take part in the summation.
    pub included: Vec<bool>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    x_in: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    attn: Matrix,
    ctx: Matrix,
    xhat1: Matrix,
    inv_std1: Vec<f64>,
    y: Matrix,
    f1: Matrix,
    act: Matrix,
    xhat2: Matrix,
    inv_std2: Vec<f64>,
}

fn apply_layer_norm(x: &Matrix, gamma: &Matrix, beta: &Matrix) -> (Matrix, Matrix, Vec<f64>) {
    let (rows, cols) = x.shape();
    let mut out = Matrix::zeros(rows, cols);
    let mut xhat = Matrix::zeros(rows, cols);
    let mut inv = Vec::with_capacity(rows);
    let ones = vec![1.0; cols];
    let zeros = vec![0.0; cols];
    for r in 0..rows {
        let s = layer_norm_row(x.row(r), &ones, &zeros, LAYER_NORM_EPS, xhat.row_mut(r));
        inv.push(s);
        for c in 0..cols {
            out.set(r, c, xhat.get(r, c) * gamma.data()[c] + beta.data()[c]);
        }
    }
    (out, xhat, inv)
}

fn layer_norm_backward(
    dy: &Matrix,
    xhat: &Matrix,
    inv_std: &[f64],
    gamma: &Matrix,
    dgamma: &mut Matrix,
    dbeta: &mut Matrix,
) -> Matrix {
    let (rows, cols) = dy.shape();
    let mut dx = Matrix::zeros(rows, cols);
    for r in 0..rows {
        layer_norm_row_backward(
            dy.row(r),
            xhat.row(r),
            gamma.data(),
            inv_std[r],
            dgamma.data_mut(),
            dbeta.data_mut(),
            dx.row_mut(r),
        );
    }
    dx
}

fn softmax_rows(s: &mut Matrix) {
    for r in 0..s.rows() {
        let row = s.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(dims: &TowerDims, rng: &mut R) -> Self {
        EncoderParams {
            embedding: Matrix::random_normal(dims.vocab_size, dims.d, INIT_STD, rng),
            position: Matrix::random_normal(dims.max_len, dims.d, INIT_STD, rng),
            layers: (0..dims.n_layers).map(|_| LayerParams::init(dims.d, dims.d_ff, rng)).collect(),
        }
    }

    pub fn d(&self) -> usize {
        self.embedding.cols()
    }

    pub fn max_len(&self) -> usize {
        self.position.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    fn forward(&self, ids: &[u32]) -> Result<(Matrix, Vec<LayerCache>)> {
        let len = ids.len();
        if len > self.max_len() {
            return Err(Error::SequenceTooLong {
                len,
                max_len: self.max_len(),
            });
        }
        let d = self.d();
        let mut x = Matrix::zeros(len, d);
        for (i, &id) in ids.iter().enumerate() {
            if id as usize >= self.vocab_size() {
                return Err(Error::InvalidArgument(format!("token id {id} out of vocabulary")));
            }
            let e = self.embedding.row(id as usize);
            let p = self.position.row(i);
            for (c, slot) in x.row_mut(i).iter_mut().enumerate() {
                *slot = e[c] + p[c];
            }
        }
        let scale = 1.0 / (d as f64).sqrt();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let q = x.matmul_t(&layer.wq);
            let k = x.matmul_t(&layer.wk);
            let v = x.matmul_t(&layer.wv);
            let mut attn = q.matmul_t(&k);
            attn.scale(scale);
            softmax_rows(&mut attn);
            let ctx = attn.matmul(&v);
            let mut r1 = ctx.matmul_t(&layer.wo);
            r1.axpy(1.0, &x);
            let (y, xhat1, inv_std1) = apply_layer_norm(&r1, &layer.ln1_gamma, &layer.ln1_beta);
            let mut f1 = y.matmul_t(&layer.w1);
            f1.add_row_broadcast(layer.b1.data());
            let mut act = f1.clone();
            act.data_mut().iter_mut().for_each(|z| *z = gelu(*z));
            let mut r2 = act.matmul_t(&layer.w2);
            r2.add_row_broadcast(layer.b2.data());
            r2.axpy(1.0, &y);
            let (out, xhat2, inv_std2) = apply_layer_norm(&r2, &layer.ln2_gamma, &layer.ln2_beta);
            caches.push(LayerCache {
                x_in: x,
                q,
                k,
                v,
                attn,
                ctx,
                xhat1,
                inv_std1,
                y,
                f1,
                act,
                xhat2,
                inv_std2,
            });
            x = out;
        }
        Ok((x, caches))
    }

    fn backward(&self, ids: &[u32], caches: &[LayerCache], dh: Matrix, grads: &mut EncoderParams) {
        let scale = 1.0 / (self.d() as f64).sqrt();
        let mut dx = dh;
        for (li, (layer, c)) in self.layers.iter().zip(caches).enumerate().rev() {
            let g = &mut grads.layers[li];

            let dr2 = layer_norm_backward(&dx, &c.xhat2, &c.inv_std2, &layer.ln2_gamma, &mut g.ln2_gamma, &mut g.ln2_beta);
            // feed-forward block
            dr2.t_matmul_acc(&c.act, &mut g.w2);
            dr2.sum_rows_into(g.b2.data_mut());
            let mut dact = dr2.matmul(&layer.w2);
            for (da, &z) in dact.data_mut().iter_mut().zip(c.f1.data()) {
                *da *= gelu_grad(z);
            }
            dact.t_matmul_acc(&c.y, &mut g.w1);
            dact.sum_rows_into(g.b1.data_mut());
            let mut dy = dact.matmul(&layer.w1);
            dy.axpy(1.0, &dr2);

            let dr1 = layer_norm_backward(&dy, &c.xhat1, &c.inv_std1, &layer.ln1_gamma, &mut g.ln1_gamma, &mut g.ln1_beta);
            // attention block
            dr1.t_matmul_acc(&c.ctx, &mut g.wo);
            let dctx = dr1.matmul(&layer.wo);
            let dattn = dctx.matmul_t(&c.v);
            let mut dv = Matrix::zeros(c.v.rows(), c.v.cols());
            c.attn.t_matmul_acc(&dctx, &mut dv);
            let len = c.attn.rows();
            let mut ds = Matrix::zeros(len, len);
            for i in 0..len {
                let a = c.attn.row(i);
                let da = dattn.row(i);
                let inner: f64 = a.iter().zip(da).map(|(x, y)| x * y).sum();
                for j in 0..len {
                    ds.set(i, j, a[j] * (da[j] - inner) * scale);
                }
            }
            let dq = ds.matmul(&c.k);
            let mut dk = Matrix::zeros(len, c.k.cols());
            ds.t_matmul_acc(&c.q, &mut dk);

            let mut dx_in = dr1;
            dq.t_matmul_acc(&c.x_in, &mut g.wq);
            dx_in.axpy(1.0, &dq.matmul(&layer.wq));
            dk.t_matmul_acc(&c.x_in, &mut g.wk);
            dx_in.axpy(1.0, &dk.matmul(&layer.wk));
            dv.t_matmul_acc(&c.x_in, &mut g.wv);
            dx_in.axpy(1.0, &dv.matmul(&layer.wv));
            dx = dx_in;
        }
        for (i, &id) in ids.iter().enumerate() {
            let src = dx.row(i);
            for (slot, &v) in grads.embedding.row_mut(id as usize).iter_mut().zip(src) {
                *slot += v;
            }
            for (slot, &v) in grads.position.row_mut(i).iter_mut().zip(src) {
                *slot += v;
            }
        }
    }
}

/// Contextual embeddings `h_0..h_{L-1}` of a token sequence.
pub fn encode(seq: &TokenSeq, params: &EncoderParams) -> Result<Matrix> {
    params.forward(seq.ids()).map(|(h, _)| h)
}

/// `I = sum_i relu(I_i)` over the given token-wise logits.
pub fn passage_importance(token_logits: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = token_logits.first().ok_or(Error::EmptyInput("passage_importance needs at least one token"))?;
    let mut out = vec![0.0; first.len()];
    for row in token_logits {
        if row.len() != out.len() {
            return Err(Error::shape("passage_importance", "ragged token logits"));
        }
        for (o, &x) in out.iter_mut().zip(row) {
            *o += x.max(0.0);
        }
    }
    Ok(out)
}

impl ImportanceHead {
    pub fn init<R: Rng + ?Sized>(dims: &TowerDims, rng: &mut R) -> Self {
        ImportanceHead {
            transform_w: Matrix::random_normal(dims.d, dims.d, INIT_STD, rng),
            transform_b: Matrix::zeros(1, dims.d),
            ln_gamma: Matrix::filled(1, dims.d, 1.0),
            ln_beta: Matrix::zeros(1, dims.d),
            output_bias: Matrix::zeros(1, dims.vocab_size),
        }
    }
}

impl Tower {
    pub fn init<R: Rng + ?Sized>(dims: &TowerDims, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        let encoder = EncoderParams::init(dims, rng);
        let head = ImportanceHead::init(dims, rng);
        Ok(Tower { encoder, head })
    }

    pub fn dims(&self) -> TowerDims {
        TowerDims {
            vocab_size: self.encoder.vocab_size(),
            d: self.encoder.d(),
            d_ff: self.encoder.layers.first().map_or(0, |l| l.w1.rows()),
            n_layers: self.encoder.layers.len(),
            max_len: self.encoder.max_len(),
        }
    }

    /// Tensor names are prefixed `enc.` / `imp.`.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![
            ("enc.embedding".to_string(), &self.encoder.embedding),
            ("enc.position".to_string(), &self.encoder.position),
        ];
        for (i, layer) in self.encoder.layers.iter().enumerate() {
            for (name, m) in layer.fields() {
                out.push((format!("enc.layer{i}.{name}"), m));
            }
        }
        let h = &self.head;
        out.extend([
            ("imp.transform_w".to_string(), &h.transform_w),
            ("imp.transform_b".to_string(), &h.transform_b),
            ("imp.ln_gamma".to_string(), &h.ln_gamma),
            ("imp.ln_beta".to_string(), &h.ln_beta),
            ("imp.output_bias".to_string(), &h.output_bias),
        ]);
        out
    }

    /// Same order as [`Tower::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = vec![&mut self.encoder.embedding, &mut self.encoder.position];
        for layer in &mut self.encoder.layers {
            out.extend(layer.fields_mut());
        }
        let h = &mut self.head;
        out.extend([
            &mut h.transform_w,
            &mut h.transform_b,
            &mut h.ln_gamma,
            &mut h.ln_beta,
            &mut h.output_bias,
        ]);
        out
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        self.named_tensors().into_iter().map(|(_, m)| m).collect()
    }

    /// Rebuilds a tower from named tensors (prefix already stripped).
    pub fn from_named(tensors: &mut std::collections::HashMap<String, Matrix>, dims: &TowerDims) -> Result<Self> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut tower = Tower::init(dims, &mut rng)?;
        let names: Vec<String> = tower.named_tensors().into_iter().map(|(n, _)| n).collect();
        for (name, slot) in names.iter().zip(tower.tensors_mut()) {
            let m = tensors
                .remove(name)
                .ok_or_else(|| Error::BadCheckpoint(format!("missing tensor `{name}`")))?;
            if m.shape() != slot.shape() {
                return Err(Error::BadCheckpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    m.shape(),
                    slot.shape()
                )));
            }
            *slot = m;
        }
        Ok(tower)
    }

    pub fn zeros_like(&self) -> Tower {
        let mut z = self.clone();
        for m in z.tensors_mut() {
            m.fill(0.0);
        }
        z
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &Tower) {
        let others = other.tensors();
        for (m, o) in self.tensors_mut().into_iter().zip(others) {
            m.axpy(alpha, o);
        }
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|m| m.data().len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|m| m.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for m in self.tensors_mut() {
            let n = m.data().len();
            m.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter length");
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.is_finite())
    }

    /// Dense nonnegative importance `I = sum_i relu(I_i)` with its cache.
    ///
    /// With `include_special = false` the `[CLS]`/`[SEP]` positions still feed
    /// the encoder but are left out of the summation.
    pub fn forward(&self, seq: &TokenSeq, include_special: bool) -> Result<(Vec<f64>, TowerCache)> {
        let ids = seq.ids();
        let (hidden, layers) = self.encoder.forward(ids)?;
        let h = &self.head;
        let mut head_z = hidden.matmul_t(&h.transform_w);
        head_z.add_row_broadcast(h.transform_b.data());
        let mut act = head_z.clone();
        act.data_mut().iter_mut().for_each(|z| *z = gelu(*z));
        let (head_u, head_xhat, head_inv_std) = apply_layer_norm(&act, &h.ln_gamma, &h.ln_beta);
        let mut logits = head_u.matmul_t(&self.encoder.embedding);
        logits.add_row_broadcast(h.output_bias.data());

        let included: Vec<bool> = ids
            .iter()
            .map(|&id| include_special || (id != CLS_ID && id != SEP_ID))
            .collect();
        let mut importance = vec![0.0; logits.cols()];
        for (i, inc) in included.iter().enumerate() {
            if !inc {
                continue;
            }
            for (o, &x) in importance.iter_mut().zip(logits.row(i)) {
                if x > 0.0 {
                    *o += x;
                }
            }
        }
        Ok((
            importance,
            TowerCache {
                ids: ids.to_vec(),
                layers,
                hidden,
                head_z,
                head_xhat,
                head_inv_std,
                head_u,
                logits,
                included,
            },
        ))
    }

    pub fn importance(&self, seq: &TokenSeq, include_special: bool) -> Result<Vec<f64>> {
        self.forward(seq, include_special).map(|(i, _)| i)
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d I`.
    pub fn backward(&self, cache: &TowerCache, d_importance: &[f64], grads: &mut Tower) {
        let len = cache.ids.len();
        let v = self.encoder.vocab_size();
        debug_assert_eq!(d_importance.len(), v);
        let mut dlogits = Matrix::zeros(len, v);
        for i in 0..len {
            if !cache.included[i] {
                continue;
            }
            let src = cache.logits.row(i);
            for (t, slot) in dlogits.row_mut(i).iter_mut().enumerate() {
                if src[t] > 0.0 {
                    *slot = d_importance[t];
                }
            }
        }
        let h = &self.head;
        let gh = &mut grads.head;
        dlogits.sum_rows_into(gh.output_bias.data_mut());
        dlogits.t_matmul_acc(&cache.head_u, &mut grads.encoder.embedding);
        let du = dlogits.matmul(&self.encoder.embedding);
        let mut dz = layer_norm_backward(&du, &cache.head_xhat, &cache.head_inv_std, &h.ln_gamma, &mut gh.ln_gamma, &mut gh.ln_beta);
        for (g, &z) in dz.data_mut().iter_mut().zip(cache.head_z.data()) {
            *g *= gelu_grad(z);
        }
        dz.t_matmul_acc(&cache.hidden, &mut gh.transform_w);
        dz.sum_rows_into(gh.transform_b.data_mut());
        let dh = dz.matmul(&h.transform_w);
        self.encoder.backward(&cache.ids, &cache.layers, dh, &mut grads.encoder);
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error};

    fn dims() -> TowerDims {
        TowerDims {
            vocab_size: 12,
            d: 4,
            d_ff: 6,
            n_layers: 2,
            max_len: 8,
        }
    }

    fn seq(ids: &[u32]) -> TokenSeq {
        TokenSeq::from_ids(ids.to_vec()).unwrap()
    }

    fn random_tower(seed: u64) -> Tower {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Tower::init(&dims(), &mut rng).unwrap();
        // larger weights so every nonlinearity is exercised
        for m in t.tensors_mut() {
            for x in m.data_mut() {
                *x += rng.random_range(-0.5..0.5);
            }
        }
        t
    }

    #[test]
    fn encode_single_token_shape() {
        let t = random_tower(1);
        let h = encode(&seq(&[CLS_ID]), &t.encoder).unwrap();
        assert_eq!(h.shape(), (1, 4));
        assert!(h.is_finite());
    }

    #[test]
    fn encode_rejects_long_sequences() {
        let t = random_tower(1);
        let ids: Vec<u32> = std::iter::once(CLS_ID).chain(std::iter::repeat(5).take(8)).collect();
        assert!(matches!(encode(&seq(&ids), &t.encoder), Err(Error::SequenceTooLong { .. })));
    }

    #[test]
    fn encode_is_position_aware() {
        let t = random_tower(2);
        let a = encode(&seq(&[CLS_ID, 5, 6, 7]), &t.encoder).unwrap();
        let b = encode(&seq(&[CLS_ID, 6, 5, 7]), &t.encoder).unwrap();
        assert_ne!(a.row(1), b.row(2));
        assert_ne!(a.row(2), b.row(1));
    }

    #[test]
    fn encode_is_deterministic() {
        let a = encode(&seq(&[CLS_ID, 5, 9]), &random_tower(3).encoder).unwrap();
        let b = encode(&seq(&[CLS_ID, 5, 9]), &random_tower(3).encoder).unwrap();
        assert_eq!(a.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn token_importance_with_zero_embedding_is_bias() {
        let mut t = random_tower(4);
        t.encoder.embedding.fill(0.0);
        t.head.output_bias.fill(0.75);
        let out = t.head.token_importance(&[0.3, -1.0, 2.0, 0.1], &t.encoder.embedding).unwrap();
        assert_eq!(out.len(), 12);
        assert!(out.iter().all(|&x| x == 0.75));
    }

    #[test]
    fn token_importance_hand_fixture() {
        // d = 2, v = 5
        let head = ImportanceHead {
            transform_w: Matrix::identity(2),
            transform_b: Matrix::row_vector(vec![0.0, 0.0]),
            ln_gamma: Matrix::row_vector(vec![1.0, 1.0]),
            ln_beta: Matrix::row_vector(vec![0.0, 0.0]),
            output_bias: Matrix::row_vector(vec![0.0, 0.1, 0.2, 0.3, 0.4]),
        };
        let e = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![2.0, -1.0],
            vec![0.0, 0.0],
        ])
        .unwrap();
        // h = [1, -1]: gelu -> [0.8413447460685429, -0.15865525393145707];
        // layer norm of two values with a large gap -> [1, -1] up to eps;
        // logits = [1, -1, 0, 3] + bias.
        let out = head.token_importance(&[1.0, -1.0], &e).unwrap();
        let expect = [1.0, -0.9, 0.2, 3.3, 0.4];
        for (o, x) in out.iter().zip(expect) {
            assert!((o - x).abs() < 1e-9, "{out:?}");
        }
    }

    #[test]
    fn passage_importance_examples() {
        let out = passage_importance(&[vec![1.0, -2.0], vec![-1.0, 3.0]]).unwrap();
        assert_eq!(out, vec![1.0, 3.0]);
        assert_eq!(passage_importance(&[vec![-1.0, -0.5]]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(passage_importance(&[vec![2.5, -0.5]]).unwrap(), vec![2.5, 0.0]);
        assert!(passage_importance(&[]).is_err());
    }

    #[test]
    fn forward_matches_per_token_composition() {
        let t = random_tower(5);
        let s = seq(&[CLS_ID, 5, 9, 11]);
        let h = encode(&s, &t.encoder).unwrap();
        let per_token: Vec<Vec<f64>> = (0..h.rows())
            .map(|i| t.head.token_importance(h.row(i), &t.encoder.embedding).unwrap())
            .collect();
        let expect = passage_importance(&per_token).unwrap();
        let got = t.importance(&s, true).unwrap();
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn excluding_special_positions_drops_cls() {
        let t = random_tower(6);
        let s = seq(&[CLS_ID]);
        let got = t.importance(&s, false).unwrap();
        assert!(got.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..5 {
            let base = random_tower(100 + seed);
            let s = seq(&[CLS_ID, 4, 7, 7, 10]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let weights: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let loss = |t: &Tower| -> f64 {
                let i = t.importance(&s, true).unwrap();
                i.iter().zip(&weights).map(|(a, b)| a * b).sum()
            };
            let (_, cache) = base.forward(&s, true).unwrap();
            let mut grads = base.zeros_like();
            base.backward(&cache, &weights, &mut grads);
            let analytic = grads.to_flat();
            let mut probe = base.clone();
            let numeric = finite_diff_grad(
                |theta| {
                    probe.set_flat(theta);
                    loss(&probe)
                },
                &base.to_flat(),
                1e-6,
            );
            let err = relative_error(&analytic, &numeric);
            assert!(err < 1e-6, "seed {seed}: relative error {err}");
        }
    }
}
