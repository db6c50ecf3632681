//! Post-norm transformer encoder with GELU feed-forward blocks and a tied
//! masked-language-model head. Forward and backward passes are written
//! out by hand over one sequence at a time; padded positions are never
//! materialized, so attention only ever sees attended tokens.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::config::EncoderConfig;
use super::params::{LayerNormParams, LayerParams, Params};
use crate::error::Result;

const LN_EPS: f64 = 1e-12;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    pub params: Params,
}

pub fn init_encoder(config: &EncoderConfig) -> Result<EncoderModel> {
    config.validate()?;
    Ok(EncoderModel {
        config: config.clone(),
        params: Params::init(config),
    })
}

pub(crate) struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, p: &LayerNormParams) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let centered = x - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = centered * inv_std.view().insert_axis(Axis(1));
    let y = &xhat * &p.gamma + &p.beta;
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward(dy: &Array2<f64>, cache: &LnCache, p: &LayerNormParams, g: &mut LayerNormParams) -> Array2<f64> {
    g.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    g.beta += &dy.sum_axis(Axis(0));
    let dxhat = dy * &p.gamma;
    let d = dy.ncols() as f64;
    let mean_dxhat = dxhat.sum_axis(Axis(1)) / d;
    let mean_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / d;
    let mut dx = dxhat - mean_dxhat.view().insert_axis(Axis(1));
    dx -= &(&cache.xhat * &mean_dxhat_xhat.view().insert_axis(Axis(1)));
    dx * cache.inv_std.view().insert_axis(Axis(1))
}

fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + (GELU_C * (z + GELU_A * z * z * z)).tanh())
}

fn gelu_grad(z: f64) -> f64 {
    let t = (GELU_C * (z + GELU_A * z * z * z)).tanh();
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * z * z)
}

fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
}

fn affine(x: &ArrayView2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(w) + b
}

/// `acc += a^T b`
fn add_at_b(acc: &mut Array2<f64>, a: &ArrayView2<f64>, b: &ArrayView2<f64>) {
    general_mat_mul(1.0, &a.t(), b, 1.0, acc);
}

fn dropout_mask<R: Rng>(shape: (usize, usize), p: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.random_bool(p) { 0.0 } else { keep })
}

struct LayerCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    drop_attn: Option<Array2<f64>>,
    ln1: LnCache,
    h1: Array2<f64>,
    z: Array2<f64>,
    g: Array2<f64>,
    drop_ffn: Option<Array2<f64>>,
    ln2: LnCache,
}

/// Activations of one forward pass, kept for the backward pass.
pub struct ForwardCache {
    ids: Vec<u32>,
    emb_ln: LnCache,
    emb_drop: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    /// Final hidden states, one row per attended position.
    pub hidden: Array2<f64>,
}

impl EncoderModel {
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Runs the encoder over the attended ids of one sequence. Dropout is
    /// active only when `rng` is given.
    pub fn forward<R: Rng>(&self, ids: &[u32], mut rng: Option<&mut R>) -> ForwardCache {
        let c = &self.config;
        let p = &self.params;
        let n = ids.len();
        assert!(n <= c.max_len, "sequence longer than max_len");
        let d = c.hidden;
        let dh = c.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let drop = c.dropout;

        let mut e = Array2::zeros((n, d));
        for (i, &id) in ids.iter().enumerate() {
            let mut row = e.row_mut(i);
            row += &p.tok_emb.row(id as usize);
            row += &p.pos_emb.row(i);
        }
        let (mut x, emb_ln) = layer_norm(&e, &p.emb_ln);
        let emb_drop = match rng.as_deref_mut() {
            Some(r) if drop > 0.0 => {
                let m = dropout_mask((n, d), drop, r);
                x *= &m;
                Some(m)
            }
            _ => None,
        };

        let mut layers = Vec::with_capacity(c.layers);
        for lp in &p.layers {
            let xv = x.view();
            let q = affine(&xv, &lp.wq, &lp.bq);
            let k = affine(&xv, &lp.wk, &lp.bk);
            let v = affine(&xv, &lp.wv, &lp.bv);
            let mut ctx = Array2::zeros((n, d));
            let mut probs = Vec::with_capacity(c.heads);
            for h in 0..c.heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let mut sc = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                softmax_rows(&mut sc);
                ctx.slice_mut(cols).assign(&sc.dot(&v.slice(cols)));
                probs.push(sc);
            }
            let mut a = affine(&ctx.view(), &lp.wo, &lp.bo);
            let drop_attn = match rng.as_deref_mut() {
                Some(r) if drop > 0.0 => {
                    let m = dropout_mask((n, d), drop, r);
                    a *= &m;
                    Some(m)
                }
                _ => None,
            };
            let (h1, ln1) = layer_norm(&(&x + &a), &lp.ln1);
            let z = affine(&h1.view(), &lp.w1, &lp.b1);
            let g = z.mapv(gelu);
            let mut f = affine(&g.view(), &lp.w2, &lp.b2);
            let drop_ffn = match rng.as_deref_mut() {
                Some(r) if drop > 0.0 => {
                    let m = dropout_mask((n, d), drop, r);
                    f *= &m;
                    Some(m)
                }
                _ => None,
            };
            let (out, ln2) = layer_norm(&(&h1 + &f), &lp.ln2);
            layers.push(LayerCache {
                x,
                q,
                k,
                v,
                probs,
                ctx,
                drop_attn,
                ln1,
                h1,
                z,
                g,
                drop_ffn,
                ln2,
            });
            x = out;
        }
        ForwardCache {
            ids: ids.to_vec(),
            emb_ln,
            emb_drop,
            layers,
            hidden: x,
        }
    }

    /// Final hidden states without dropout.
    pub fn hidden_states(&self, ids: &[u32]) -> Array2<f64> {
        self.forward::<rand_chacha::ChaCha8Rng>(ids, None).hidden
    }

    /// MLM logits (`rows.len() x vocab`) for selected hidden rows.
    pub fn mlm_logits(&self, hidden_rows: &ArrayView2<f64>) -> Array2<f64> {
        hidden_rows.dot(&self.params.tok_emb.t()) + &self.params.mlm_bias
    }

    /// Accumulates gradients into `grads` given the gradient of the loss
    /// with respect to the final hidden states.
    pub fn backward(&self, cache: &ForwardCache, d_hidden: Array2<f64>, grads: &mut Params) {
        let c = &self.config;
        let p = &self.params;
        let dh = c.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dx = d_hidden;

        for (li, lc) in cache.layers.iter().enumerate().rev() {
            let lp: &LayerParams = &p.layers[li];
            let lg: &mut LayerParams = &mut grads.layers[li];

            let d_r2 = layer_norm_backward(&dx, &lc.ln2, &lp.ln2, &mut lg.ln2);
            let mut d_f = d_r2.clone();
            if let Some(m) = &lc.drop_ffn {
                d_f *= m;
            }
            add_at_b(&mut lg.w2, &lc.g.view(), &d_f.view());
            lg.b2 += &d_f.sum_axis(Axis(0));
            let d_g = d_f.dot(&lp.w2.t());
            let d_z = d_g * &lc.z.mapv(gelu_grad);
            add_at_b(&mut lg.w1, &lc.h1.view(), &d_z.view());
            lg.b1 += &d_z.sum_axis(Axis(0));
            let d_h1 = d_r2 + d_z.dot(&lp.w1.t());

            let d_r1 = layer_norm_backward(&d_h1, &lc.ln1, &lp.ln1, &mut lg.ln1);
            let mut d_a = d_r1.clone();
            if let Some(m) = &lc.drop_attn {
                d_a *= m;
            }
            add_at_b(&mut lg.wo, &lc.ctx.view(), &d_a.view());
            lg.bo += &d_a.sum_axis(Axis(0));
            let d_ctx = d_a.dot(&lp.wo.t());

            let n = d_ctx.nrows();
            let mut d_q = Array2::zeros((n, c.hidden));
            let mut d_k = Array2::zeros((n, c.hidden));
            let mut d_v = Array2::zeros((n, c.hidden));
            for h in 0..c.heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let pr = &lc.probs[h];
                let d_ch = d_ctx.slice(cols);
                let d_p = d_ch.dot(&lc.v.slice(cols).t());
                d_v.slice_mut(cols).assign(&pr.t().dot(&d_ch));
                let row_dot = (&d_p * pr).sum_axis(Axis(1));
                let d_s = (d_p - &row_dot.insert_axis(Axis(1))) * pr * scale;
                d_q.slice_mut(cols).assign(&d_s.dot(&lc.k.slice(cols)));
                d_k.slice_mut(cols).assign(&d_s.t().dot(&lc.q.slice(cols)));
            }
            let xv = lc.x.view();
            add_at_b(&mut lg.wq, &xv, &d_q.view());
            add_at_b(&mut lg.wk, &xv, &d_k.view());
            add_at_b(&mut lg.wv, &xv, &d_v.view());
            lg.bq += &d_q.sum_axis(Axis(0));
            lg.bk += &d_k.sum_axis(Axis(0));
            lg.bv += &d_v.sum_axis(Axis(0));
            let mut d_x = d_r1;
            general_mat_mul(1.0, &d_q, &lp.wq.t(), 1.0, &mut d_x);
            general_mat_mul(1.0, &d_k, &lp.wk.t(), 1.0, &mut d_x);
            general_mat_mul(1.0, &d_v, &lp.wv.t(), 1.0, &mut d_x);
            dx = d_x;
        }

        if let Some(m) = &cache.emb_drop {
            dx *= m;
        }
        let d_e = layer_norm_backward(&dx, &cache.emb_ln, &p.emb_ln, &mut grads.emb_ln);
        for (i, &id) in cache.ids.iter().enumerate() {
            let row = d_e.row(i);
            let mut t = grads.tok_emb.row_mut(id as usize);
            t += &row;
            let mut pe = grads.pos_emb.row_mut(i);
            pe += &row;
        }
    }

    /// Cross-entropy over the given `(row, label)` targets of one forward
    /// pass. Returns the summed loss and, when `grads` is given, adds the
    /// gradient of `weight * summed loss` to it.
    pub(crate) fn mlm_targets_loss(
        &self,
        cache: &ForwardCache,
        targets: &[(usize, u32)],
        weight: f64,
        grads: Option<&mut Params>,
    ) -> f64 {
        if targets.is_empty() {
            return 0.0;
        }
        let d = self.config.hidden;
        let mut rows = Array2::zeros((targets.len(), d));
        for (j, &(pos, _)) in targets.iter().enumerate() {
            rows.row_mut(j).assign(&cache.hidden.row(pos));
        }
        let mut logits = self.mlm_logits(&rows.view());
        let mut loss = 0.0;
        for (j, &(_, label)) in targets.iter().enumerate() {
            let mut row = logits.row_mut(j);
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[label as usize];
            // convert to d(loss)/d(logits) in place
            row.mapv_inplace(|v| (v - lse).exp());
            row[label as usize] -= 1.0;
        }
        if let Some(grads) = grads {
            logits *= weight;
            let d_logits = logits;
            add_at_b(&mut grads.tok_emb, &d_logits.view(), &rows.view());
            grads.mlm_bias += &d_logits.sum_axis(Axis(0));
            let d_rows = d_logits.dot(&self.params.tok_emb);
            let mut d_hidden = Array2::zeros(cache.hidden.raw_dim());
            for (j, &(pos, _)) in targets.iter().enumerate() {
                let mut r = d_hidden.row_mut(pos);
                r += &d_rows.row(j);
            }
            self.backward(cache, d_hidden, grads);
        }
        loss
    }
}

/// Mean of the hidden rows in `range`.
pub(crate) fn mean_rows(hidden: &Array2<f64>, range: std::ops::Range<usize>) -> Array1<f64> {
    let n = range.len() as f64;
    hidden.slice(s![range, ..]).sum_axis(Axis(0)) / n
}
