//! Parameter store and hand-written forward/backward for the toy model's
//! building blocks. Weight gradients are only formed for trainable tensors;
//! frozen tensors keep an all-zero gradient buffer.

use ndarray::{s, Array1, Array2, Axis};
use serde::Serialize;

use super::Real;

pub type ParamId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Frozen,
    Trainable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub name: String,
    pub value: Array2<F>,
    pub tag: Tag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<F> {
    tensors: Vec<Tensor<F>>,
}

impl<F> Default for ParamStore<F> {
    fn default() -> Self {
        ParamStore {
            tensors: Vec::new(),
        }
    }
}

impl<F: Real> ParamStore<F> {
    pub fn add(&mut self, name: impl Into<String>, value: Array2<F>, tag: Tag) -> ParamId {
        self.tensors.push(Tensor {
            name: name.into(),
            value,
            tag,
        });
        self.tensors.len() - 1
    }

    pub fn get(&self, id: ParamId) -> &Array2<F> {
        &self.tensors[id].value
    }

    pub fn tensors(&self) -> &[Tensor<F>] {
        &self.tensors
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.tensors[id]
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.tensors[id].tag == Tag::Trainable
    }

    pub fn trainable_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.tensors.len()).filter(|&i| self.is_trainable(i))
    }
}

/// Gradient buffers, one per tensor in the store.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<F> {
    pub tensors: Vec<Array2<F>>,
}

impl<F: Real> Grads<F> {
    pub fn zeros_like(store: &ParamStore<F>) -> Self {
        Grads {
            tensors: store
                .tensors()
                .iter()
                .map(|t| Array2::zeros(t.value.dim()))
                .collect(),
        }
    }

    fn accumulate(
        &mut self,
        store: &ParamStore<F>,
        id: ParamId,
        delta: impl FnOnce() -> Array2<F>,
    ) {
        if store.is_trainable(id) {
            self.tensors[id] += &delta();
        }
    }
}

fn relu<F: Real>(x: &Array2<F>) -> Array2<F> {
    x.mapv(|v| v.max(F::zero()))
}

fn relu_backward<F: Real>(pre: &Array2<F>, dy: &Array2<F>) -> Array2<F> {
    let mut dx = dy.clone();
    dx.zip_mut_with(pre, |d, &p| {
        if p <= F::zero() {
            *d = F::zero();
        }
    });
    dx
}

/// `y = x W + b` with `W: in × out`, `b: 1 × out`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn forward<F: Real>(&self, st: &ParamStore<F>, x: &Array2<F>) -> Array2<F> {
        x.dot(st.get(self.w)) + st.get(self.b)
    }

    pub fn backward<F: Real>(
        &self,
        st: &ParamStore<F>,
        x: &Array2<F>,
        dy: &Array2<F>,
        g: &mut Grads<F>,
    ) -> Array2<F> {
        g.accumulate(st, self.w, || x.t().dot(dy));
        g.accumulate(st, self.b, || dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
        dy.dot(&st.get(self.w).t())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

pub struct LayerNormCache<F> {
    xhat: Array2<F>,
    inv_std: Array1<F>,
}

const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn forward<F: Real>(
        &self,
        st: &ParamStore<F>,
        x: &Array2<F>,
    ) -> (Array2<F>, LayerNormCache<F>) {
        let n = F::from_usize(x.ncols()).unwrap();
        let eps = F::from_f64(LN_EPS).unwrap();
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, istd) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|&v| v * v).sum::<F>() / n;
            *istd = F::one() / (var + eps).sqrt();
            let s = *istd;
            row.mapv_inplace(|v| v * s);
        }
        let y = &xhat * st.get(self.gamma) + st.get(self.beta);
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward<F: Real>(
        &self,
        st: &ParamStore<F>,
        cache: &LayerNormCache<F>,
        dy: &Array2<F>,
        g: &mut Grads<F>,
    ) -> Array2<F> {
        g.accumulate(st, self.gamma, || {
            (dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0))
        });
        g.accumulate(st, self.beta, || dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
        let n = F::from_usize(dy.ncols()).unwrap();
        let dxhat = dy * st.get(self.gamma);
        let mut dx = Array2::zeros(dy.dim());
        for (((mut out, dh), xh), &istd) in dx
            .rows_mut()
            .into_iter()
            .zip(dxhat.rows())
            .zip(cache.xhat.rows())
            .zip(cache.inv_std.iter())
        {
            let sum_dh = dh.sum();
            let sum_dh_xh = dh.dot(&xh);
            for ((o, &d), &x) in out.iter_mut().zip(dh.iter()).zip(xh.iter()) {
                *o = istd / n * (n * d - sum_dh - x * sum_dh_xh);
            }
        }
        dx
    }
}

/// Multi-head scaled dot-product attention with separate query/key-value inputs.
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub n_heads: usize,
    pub causal: bool,
}

pub struct AttentionCache<F> {
    xq: Array2<F>,
    xkv: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    probs: Vec<Array2<F>>,
    concat: Array2<F>,
}

impl Attention {
    pub fn forward<F: Real>(
        &self,
        st: &ParamStore<F>,
        xq: &Array2<F>,
        xkv: &Array2<F>,
    ) -> (Array2<F>, AttentionCache<F>) {
        let q = self.q.forward(st, xq);
        let k = self.k.forward(st, xkv);
        let v = self.v.forward(st, xkv);
        let d = q.ncols();
        let dh = d / self.n_heads;
        let scale = F::one() / F::from_usize(dh).unwrap().sqrt();
        let mut concat = Array2::zeros((xq.nrows(), d));
        let mut probs = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
                let visible = if self.causal { i + 1 } else { row.len() };
                let max = row
                    .iter()
                    .take(visible)
                    .fold(F::neg_infinity(), |m, &x| m.max(x));
                let mut total = F::zero();
                for (j, x) in row.iter_mut().enumerate() {
                    *x = if j < visible {
                        (*x - max).exp()
                    } else {
                        F::zero()
                    };
                    total += *x;
                }
                row.mapv_inplace(|x| x / total);
            }
            concat.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            probs.push(scores);
        }
        let out = self.o.forward(st, &concat);
        let cache = AttentionCache {
            xq: xq.clone(),
            xkv: xkv.clone(),
            q,
            k,
            v,
            probs,
            concat,
        };
        (out, cache)
    }

    /// Returns gradients with respect to the query input and the key/value input.
    pub fn backward<F: Real>(
        &self,
        st: &ParamStore<F>,
        c: &AttentionCache<F>,
        dy: &Array2<F>,
        g: &mut Grads<F>,
    ) -> (Array2<F>, Array2<F>) {
        let dconcat = self.o.backward(st, &c.concat, dy, g);
        let d = c.q.ncols();
        let dh = d / self.n_heads;
        let scale = F::one() / F::from_usize(dh).unwrap().sqrt();
        let mut dq = Array2::zeros(c.q.dim());
        let mut dk = Array2::zeros(c.k.dim());
        let mut dv = Array2::zeros(c.v.dim());
        for (h, a) in c.probs.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let dout = dconcat.slice(cols);
            let da = dout.dot(&c.v.slice(cols).t());
            dv.slice_mut(cols).assign(&a.t().dot(&dout));
            let mut ds = &da * a;
            for (mut row, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
                let dot = row.sum();
                row.zip_mut_with(&arow, |x, &p| *x -= p * dot);
            }
            ds.mapv_inplace(|x| x * scale);
            dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
        }
        let dxq = self.q.backward(st, &c.xq, &dq, g);
        let dxkv = self.k.backward(st, &c.xkv, &dk, g) + self.v.backward(st, &c.xkv, &dv, g);
        (dxq, dxkv)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

pub struct FeedForwardCache<F> {
    x: Array2<F>,
    pre: Array2<F>,
    act: Array2<F>,
}

impl FeedForward {
    pub fn forward<F: Real>(
        &self,
        st: &ParamStore<F>,
        x: &Array2<F>,
    ) -> (Array2<F>, FeedForwardCache<F>) {
        let pre = self.up.forward(st, x);
        let act = relu(&pre);
        let y = self.down.forward(st, &act);
        (
            y,
            FeedForwardCache {
                x: x.clone(),
                pre,
                act,
            },
        )
    }

    pub fn backward<F: Real>(
        &self,
        st: &ParamStore<F>,
        c: &FeedForwardCache<F>,
        dy: &Array2<F>,
        g: &mut Grads<F>,
    ) -> Array2<F> {
        let dact = self.down.backward(st, &c.act, dy, g);
        let dpre = relu_backward(&c.pre, &dact);
        self.up.backward(st, &c.x, &dpre, g)
    }
}

/// Bottleneck adapter applied row-wise: `z + relu(z W_down + b_down) W_up + b_up`.
#[derive(Debug, Clone, Copy)]
pub struct AdapterSite {
    pub down: Linear,
    pub up: Linear,
}

pub struct AdapterCache<F> {
    z: Array2<F>,
    pre: Array2<F>,
    act: Array2<F>,
}

impl AdapterSite {
    pub fn forward<F: Real>(
        &self,
        st: &ParamStore<F>,
        z: &Array2<F>,
    ) -> (Array2<F>, AdapterCache<F>) {
        let pre = self.down.forward(st, z);
        let act = relu(&pre);
        let y = z + &self.up.forward(st, &act);
        (
            y,
            AdapterCache {
                z: z.clone(),
                pre,
                act,
            },
        )
    }

    pub fn backward<F: Real>(
        &self,
        st: &ParamStore<F>,
        c: &AdapterCache<F>,
        dy: &Array2<F>,
        g: &mut Grads<F>,
    ) -> Array2<F> {
        let dact = self.up.backward(st, &c.act, dy, g);
        let dpre = relu_backward(&c.pre, &dact);
        dy + &self.down.backward(st, &c.z, &dpre, g)
    }
}

/// Optional adapter: identity when absent.
pub fn maybe_adapt<F: Real>(
    site: Option<&AdapterSite>,
    st: &ParamStore<F>,
    z: Array2<F>,
) -> (Array2<F>, Option<AdapterCache<F>>) {
    match site {
        Some(a) => {
            let (y, c) = a.forward(st, &z);
            (y, Some(c))
        }
        None => (z, None),
    }
}

pub fn maybe_adapt_backward<F: Real>(
    site: Option<&AdapterSite>,
    st: &ParamStore<F>,
    cache: Option<&AdapterCache<F>>,
    dy: Array2<F>,
    g: &mut Grads<F>,
) -> Array2<F> {
    match (site, cache) {
        (Some(a), Some(c)) => a.backward(st, c, &dy, g),
        _ => dy,
    }
}
