//! Parameter tensors of the encoder and their flat views.

use ndarray::{Array1, Array2};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::EncoderConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNormParams {
    fn new(d: usize) -> Self {
        Self {
            gamma: Array1::ones(d),
            beta: Array1::zeros(d),
        }
    }

    fn zeros(d: usize) -> Self {
        Self {
            gamma: Array1::zeros(d),
            beta: Array1::zeros(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln1: LayerNormParams,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub ln2: LayerNormParams,
}

/// All trainable tensors. Gradients and optimizer moments use the same
/// type. The MLM decoder is tied to `tok_emb`; only its bias is separate.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub emb_ln: LayerNormParams,
    pub layers: Vec<LayerParams>,
    pub mlm_bias: Array1<f64>,
}

type Visitor<'a> = dyn FnMut(&str, &[usize], &[f64]) + 'a;

impl Params {
    pub fn zeros(c: &EncoderConfig) -> Self {
        let (d, f) = (c.hidden, c.ffn_dim());
        let layer = || LayerParams {
            wq: Array2::zeros((d, d)),
            bq: Array1::zeros(d),
            wk: Array2::zeros((d, d)),
            bk: Array1::zeros(d),
            wv: Array2::zeros((d, d)),
            bv: Array1::zeros(d),
            wo: Array2::zeros((d, d)),
            bo: Array1::zeros(d),
            ln1: LayerNormParams::zeros(d),
            w1: Array2::zeros((d, f)),
            b1: Array1::zeros(f),
            w2: Array2::zeros((f, d)),
            b2: Array1::zeros(d),
            ln2: LayerNormParams::zeros(d),
        };
        Self {
            tok_emb: Array2::zeros((c.vocab_size, d)),
            pos_emb: Array2::zeros((c.max_len, d)),
            emb_ln: LayerNormParams::zeros(d),
            layers: (0..c.layers).map(|_| layer()).collect(),
            mlm_bias: Array1::zeros(c.vocab_size),
        }
    }

    /// Weights uniform with standard deviation `1/sqrt(hidden)`, biases
    /// zero, layer-norm scales one.
    pub fn init(c: &EncoderConfig) -> Self {
        let mut p = Self::zeros(c);
        let bound = (3.0 / c.hidden as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let mut fill = |a: &mut Array2<f64>| a.iter_mut().for_each(|x| *x = dist.sample(&mut rng));
        fill(&mut p.tok_emb);
        fill(&mut p.pos_emb);
        p.emb_ln = LayerNormParams::new(c.hidden);
        for l in &mut p.layers {
            fill(&mut l.wq);
            fill(&mut l.wk);
            fill(&mut l.wv);
            fill(&mut l.wo);
            fill(&mut l.w1);
            fill(&mut l.w2);
            l.ln1 = LayerNormParams::new(c.hidden);
            l.ln2 = LayerNormParams::new(c.hidden);
        }
        p
    }

    /// Tensor names and shapes in canonical (serialization) order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit(&mut |name, shape, _| out.push((name.to_owned(), shape.to_vec())));
        out
    }

    fn visit(&self, f: &mut Visitor) {
        fn s2(a: &Array2<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        fn s1(a: &Array1<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        f("tok_emb", self.tok_emb.shape(), s2(&self.tok_emb));
        f("pos_emb", self.pos_emb.shape(), s2(&self.pos_emb));
        f("emb_ln.gamma", self.emb_ln.gamma.shape(), s1(&self.emb_ln.gamma));
        f("emb_ln.beta", self.emb_ln.beta.shape(), s1(&self.emb_ln.beta));
        for (i, l) in self.layers.iter().enumerate() {
            let n = |s: &str| format!("layer{i}.{s}");
            f(&n("wq"), l.wq.shape(), s2(&l.wq));
            f(&n("bq"), l.bq.shape(), s1(&l.bq));
            f(&n("wk"), l.wk.shape(), s2(&l.wk));
            f(&n("bk"), l.bk.shape(), s1(&l.bk));
            f(&n("wv"), l.wv.shape(), s2(&l.wv));
            f(&n("bv"), l.bv.shape(), s1(&l.bv));
            f(&n("wo"), l.wo.shape(), s2(&l.wo));
            f(&n("bo"), l.bo.shape(), s1(&l.bo));
            f(&n("ln1.gamma"), l.ln1.gamma.shape(), s1(&l.ln1.gamma));
            f(&n("ln1.beta"), l.ln1.beta.shape(), s1(&l.ln1.beta));
            f(&n("w1"), l.w1.shape(), s2(&l.w1));
            f(&n("b1"), l.b1.shape(), s1(&l.b1));
            f(&n("w2"), l.w2.shape(), s2(&l.w2));
            f(&n("b2"), l.b2.shape(), s1(&l.b2));
            f(&n("ln2.gamma"), l.ln2.gamma.shape(), s1(&l.ln2.gamma));
            f(&n("ln2.beta"), l.ln2.beta.shape(), s1(&l.ln2.beta));
        }
        f("mlm_bias", self.mlm_bias.shape(), s1(&self.mlm_bias));
    }

    /// Flat immutable views in canonical order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![
            self.tok_emb.as_slice().unwrap(),
            self.pos_emb.as_slice().unwrap(),
            self.emb_ln.gamma.as_slice().unwrap(),
            self.emb_ln.beta.as_slice().unwrap(),
        ];
        for l in &self.layers {
            v.extend([
                l.wq.as_slice().unwrap(),
                l.bq.as_slice().unwrap(),
                l.wk.as_slice().unwrap(),
                l.bk.as_slice().unwrap(),
                l.wv.as_slice().unwrap(),
                l.bv.as_slice().unwrap(),
                l.wo.as_slice().unwrap(),
                l.bo.as_slice().unwrap(),
                l.ln1.gamma.as_slice().unwrap(),
                l.ln1.beta.as_slice().unwrap(),
                l.w1.as_slice().unwrap(),
                l.b1.as_slice().unwrap(),
                l.w2.as_slice().unwrap(),
                l.b2.as_slice().unwrap(),
                l.ln2.gamma.as_slice().unwrap(),
                l.ln2.beta.as_slice().unwrap(),
            ]);
        }
        v.push(self.mlm_bias.as_slice().unwrap());
        v
    }

    /// Flat mutable views in canonical order.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![
            self.tok_emb.as_slice_mut().unwrap(),
            self.pos_emb.as_slice_mut().unwrap(),
            self.emb_ln.gamma.as_slice_mut().unwrap(),
            self.emb_ln.beta.as_slice_mut().unwrap(),
        ];
        for l in &mut self.layers {
            v.extend([
                l.wq.as_slice_mut().unwrap(),
                l.bq.as_slice_mut().unwrap(),
                l.wk.as_slice_mut().unwrap(),
                l.bk.as_slice_mut().unwrap(),
                l.wv.as_slice_mut().unwrap(),
                l.bv.as_slice_mut().unwrap(),
                l.wo.as_slice_mut().unwrap(),
                l.bo.as_slice_mut().unwrap(),
                l.ln1.gamma.as_slice_mut().unwrap(),
                l.ln1.beta.as_slice_mut().unwrap(),
                l.w1.as_slice_mut().unwrap(),
                l.b1.as_slice_mut().unwrap(),
                l.w2.as_slice_mut().unwrap(),
                l.b2.as_slice_mut().unwrap(),
                l.ln2.gamma.as_slice_mut().unwrap(),
                l.ln2.beta.as_slice_mut().unwrap(),
            ]);
        }
        v.push(self.mlm_bias.as_slice_mut().unwrap());
        v
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn locate(&self, mut index: usize) -> (usize, usize) {
        for (t, s) in self.slices().iter().enumerate() {
            if index < s.len() {
                return (t, index);
            }
            index -= s.len();
        }
        panic!("parameter index out of range");
    }

    /// Reads the scalar at a flat index (canonical order).
    pub fn get_flat(&self, index: usize) -> f64 {
        let (t, i) = self.locate(index);
        self.slices()[t][i]
    }

    pub fn set_flat(&mut self, index: usize, value: f64) {
        let (t, i) = self.locate(index);
        self.slices_mut()[t][i] = value;
    }

    pub fn fill(&mut self, value: f64) {
        for s in self.slices_mut() {
            s.fill(value);
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).map(|x| x * x).sum()
    }

    pub fn scale(&mut self, alpha: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|x| *x *= alpha);
        }
    }

    /// `self += other`
    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }
}
