//! Desk-scale post-norm encoder-decoder with frozen base weights and
//! bottleneck adapters after the attention and feed-forward sublayers.
//!
//! Encoder layer: `h = LN(x + A₀(SelfAttn(x)))`, `y = LN(h + A₁(FFN(h)))`.
//! Decoder layer adds a cross-attention sublayer between the two, with no
//! adapter after it. Token embeddings are shared by encoder and decoder; the
//! output projection is a separate frozen linear map.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{
    maybe_adapt, maybe_adapt_backward, AdapterCache, AdapterSite, Attention, AttentionCache,
    FeedForward, FeedForwardCache, Grads, LayerNorm, LayerNormCache, Linear, ParamId, ParamStore,
    Tag,
};
use super::params::{count_adapter_params, AdapterSet, ModelDims, ParamCount};
use super::{AdapterError, Real};

/// Token id prepended to the decoder input.
pub const BOS: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub bottleneck: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    pub max_len: usize,
    /// Multiplier on the output projection's 1/sqrt(d) init scale.
    pub head_gain: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            vocab_size: 64,
            d_model: 32,
            n_heads: 4,
            d_ff: 64,
            bottleneck: 8,
            n_encoder_layers: 2,
            n_decoder_layers: 2,
            max_len: 32,
            head_gain: 2.0,
            seed: 6,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<(), AdapterError> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("bottleneck", self.bottleneck),
            ("n_encoder_layers", self.n_encoder_layers),
            ("n_decoder_layers", self.n_decoder_layers),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(AdapterError::InvalidConfig(format!(
                "{name} must be positive"
            )));
        }
        if !(self.head_gain.is_finite() && self.head_gain > 0.0) {
            return Err(AdapterError::InvalidConfig(
                "head_gain must be positive and finite".into(),
            ));
        }
        if self.vocab_size < 2 {
            return Err(AdapterError::InvalidConfig(
                "vocab_size must be at least 2".into(),
            ));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(AdapterError::InvalidConfig(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}

struct EncoderLayer {
    attn: Attention,
    ln1: LayerNorm,
    ffn: FeedForward,
    ln2: LayerNorm,
    adapters: [Option<AdapterSite>; 2],
}

struct DecoderLayer {
    self_attn: Attention,
    ln1: LayerNorm,
    cross_attn: Attention,
    ln2: LayerNorm,
    ffn: FeedForward,
    ln3: LayerNorm,
    adapters: [Option<AdapterSite>; 2],
}

/// Frozen encoder-decoder with trainable adapters on the active layers.
pub struct ToyModel<F> {
    config: ToyConfig,
    adapters: AdapterSet,
    store: ParamStore<F>,
    embed: ParamId,
    enc_pos: ParamId,
    dec_pos: ParamId,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
    head: Linear,
    base_params: usize,
}

struct Init<'a> {
    rng: ChaCha8Rng,
    // Initialization always draws in f64 so both precisions start from the same values.
    store: &'a mut ParamStore<f64>,
}

impl Init<'_> {
    fn normal(&mut self, rows: usize, cols: usize, std: f64) -> Array2<f64> {
        let dist = Normal::new(0.0, std).expect("finite std");
        Array2::from_shape_simple_fn((rows, cols), || dist.sample(&mut self.rng))
    }

    fn tensor(&mut self, name: String, rows: usize, cols: usize, std: f64, tag: Tag) -> ParamId {
        let value = if std == 0.0 {
            Array2::zeros((rows, cols))
        } else {
            self.normal(rows, cols, std)
        };
        self.store.add(name, value, tag)
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        self.scaled_linear(name, fan_in, fan_out, 1.0)
    }

    fn scaled_linear(&mut self, name: &str, fan_in: usize, fan_out: usize, gain: f64) -> Linear {
        Linear {
            w: self.tensor(
                format!("{name}.weight"),
                fan_in,
                fan_out,
                gain / (fan_in as f64).sqrt(),
                Tag::Frozen,
            ),
            b: self.tensor(format!("{name}.bias"), 1, fan_out, 0.02, Tag::Frozen),
        }
    }

    fn layer_norm(&mut self, name: &str, d: usize) -> LayerNorm {
        LayerNorm {
            gamma: self
                .store
                .add(format!("{name}.gamma"), Array2::ones((1, d)), Tag::Frozen),
            beta: self
                .store
                .add(format!("{name}.beta"), Array2::zeros((1, d)), Tag::Frozen),
        }
    }

    fn attention(&mut self, name: &str, d: usize, n_heads: usize, causal: bool) -> Attention {
        Attention {
            q: self.linear(&format!("{name}.q"), d, d),
            k: self.linear(&format!("{name}.k"), d, d),
            v: self.linear(&format!("{name}.v"), d, d),
            o: self.linear(&format!("{name}.o"), d, d),
            n_heads,
            causal,
        }
    }

    fn ffn(&mut self, name: &str, d: usize, d_ff: usize) -> FeedForward {
        FeedForward {
            up: self.linear(&format!("{name}.fc1"), d, d_ff),
            down: self.linear(&format!("{name}.fc2"), d_ff, d),
        }
    }
}

/// Adapter weights for global layer `layer`, drawn from a per-layer stream so
/// they do not depend on which other layers carry adapters.
fn adapter_site(
    store: &mut ParamStore<f64>,
    seed: u64,
    layer: usize,
    slot: usize,
    prefix: &str,
    d: usize,
    b: usize,
) -> AdapterSite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + (layer * 2 + slot) as u64);
    let dist = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("finite std");
    let w_down = Array2::from_shape_simple_fn((d, b), || dist.sample(&mut rng));
    AdapterSite {
        down: Linear {
            w: store.add(format!("{prefix}.down.weight"), w_down, Tag::Trainable),
            b: store.add(
                format!("{prefix}.down.bias"),
                Array2::zeros((1, b)),
                Tag::Trainable,
            ),
        },
        up: Linear {
            w: store.add(
                format!("{prefix}.up.weight"),
                Array2::zeros((b, d)),
                Tag::Trainable,
            ),
            b: store.add(
                format!("{prefix}.up.bias"),
                Array2::zeros((1, d)),
                Tag::Trainable,
            ),
        },
    }
}

const ADAPTER_SLOTS: [&str; 2] = ["adapter_attn", "adapter_ffn"];

/// Builds the toy model deterministically from `config.seed`.
///
/// Base weights do not depend on `adapters`, so models built with different
/// adapter sets share an identical frozen base.
pub fn build_toy_model<F: Real>(
    config: &ToyConfig,
    adapters: &AdapterSet,
) -> Result<ToyModel<F>, AdapterError> {
    config.validate()?;
    let dims = dims_of(config, 0);
    adapters.validate(&dims)?;
    let (d, n_heads) = (config.d_model, config.n_heads);

    let mut store = ParamStore::<f64>::default();
    let mut init = Init {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        store: &mut store,
    };
    let embed = init.tensor(
        "embed.tokens".into(),
        config.vocab_size,
        d,
        1.0,
        Tag::Frozen,
    );
    let enc_pos = init.tensor(
        "encoder.positions".into(),
        config.max_len,
        d,
        0.5,
        Tag::Frozen,
    );
    let dec_pos = init.tensor(
        "decoder.positions".into(),
        config.max_len,
        d,
        0.5,
        Tag::Frozen,
    );
    let mut encoder: Vec<EncoderLayer> = (0..config.n_encoder_layers)
        .map(|l| {
            let p = format!("encoder.{l}");
            EncoderLayer {
                attn: init.attention(&format!("{p}.self_attn"), d, n_heads, false),
                ln1: init.layer_norm(&format!("{p}.ln1"), d),
                ffn: init.ffn(&format!("{p}.ffn"), d, config.d_ff),
                ln2: init.layer_norm(&format!("{p}.ln2"), d),
                adapters: [None, None],
            }
        })
        .collect();
    let mut decoder: Vec<DecoderLayer> = (0..config.n_decoder_layers)
        .map(|l| {
            let p = format!("decoder.{l}");
            DecoderLayer {
                self_attn: init.attention(&format!("{p}.self_attn"), d, n_heads, true),
                ln1: init.layer_norm(&format!("{p}.ln1"), d),
                cross_attn: init.attention(&format!("{p}.cross_attn"), d, n_heads, false),
                ln2: init.layer_norm(&format!("{p}.ln2"), d),
                ffn: init.ffn(&format!("{p}.ffn"), d, config.d_ff),
                ln3: init.layer_norm(&format!("{p}.ln3"), d),
                adapters: [None, None],
            }
        })
        .collect();
    let head = init.scaled_linear("lm_head", d, config.vocab_size, config.head_gain);
    let base_params: usize = store.tensors().iter().map(|t| t.value.len()).sum();

    for &layer in &adapters.encoder {
        for (slot, name) in ADAPTER_SLOTS.iter().enumerate() {
            let prefix = format!("encoder.{layer}.{name}");
            encoder[layer].adapters[slot] = Some(adapter_site(
                &mut store,
                config.seed,
                layer,
                slot,
                &prefix,
                d,
                config.bottleneck,
            ));
        }
    }
    for &layer in &adapters.decoder {
        let local = layer - config.n_encoder_layers;
        for (slot, name) in ADAPTER_SLOTS.iter().enumerate() {
            let prefix = format!("decoder.{local}.{name}");
            decoder[local].adapters[slot] = Some(adapter_site(
                &mut store,
                config.seed,
                layer,
                slot,
                &prefix,
                d,
                config.bottleneck,
            ));
        }
    }

    let mut converted = ParamStore::<F>::default();
    for t in store.tensors() {
        converted.add(
            t.name.clone(),
            t.value.mapv(|v| F::from_f64(v).unwrap()),
            t.tag,
        );
    }
    Ok(ToyModel {
        config: config.clone(),
        adapters: adapters.clone(),
        store: converted,
        embed,
        enc_pos,
        dec_pos,
        encoder,
        decoder,
        head,
        base_params,
    })
}

fn dims_of(config: &ToyConfig, base_params: usize) -> ModelDims {
    ModelDims {
        d_model: config.d_model,
        bottleneck: config.bottleneck,
        n_encoder_layers: config.n_encoder_layers,
        n_decoder_layers: config.n_decoder_layers,
        adapters_per_layer: ADAPTER_SLOTS.len(),
        base_total_params: base_params as u64,
    }
}

struct EncoderCache<F> {
    attn: AttentionCache<F>,
    adapt0: Option<AdapterCache<F>>,
    ln1: LayerNormCache<F>,
    ffn: FeedForwardCache<F>,
    adapt1: Option<AdapterCache<F>>,
    ln2: LayerNormCache<F>,
}

struct DecoderCache<F> {
    self_attn: AttentionCache<F>,
    adapt0: Option<AdapterCache<F>>,
    ln1: LayerNormCache<F>,
    cross_attn: AttentionCache<F>,
    ln2: LayerNormCache<F>,
    ffn: FeedForwardCache<F>,
    adapt1: Option<AdapterCache<F>>,
    ln3: LayerNormCache<F>,
}

struct ForwardCache<F> {
    encoder: Vec<EncoderCache<F>>,
    decoder: Vec<DecoderCache<F>>,
    dec_out: Array2<F>,
    probs: Array2<F>,
    labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<F> {
    /// Mean token cross-entropy.
    pub loss: F,
    /// target length × vocab
    pub logits: Array2<F>,
}

/// One row of [`ToyModel::freeze_report`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TensorSummary {
    pub name: String,
    pub tag: Tag,
    pub elements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreezeReport {
    pub tensors: Vec<TensorSummary>,
    pub frozen_total: usize,
    pub trainable_total: usize,
    /// Trainable share of the toy model's own base size, in percent.
    pub trainable_percent: f64,
    /// Expected trainable total from the closed-form adapter count.
    pub expected_trainable: ParamCount,
}

impl<F: Real> ToyModel<F> {
    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn adapter_set(&self) -> &AdapterSet {
        &self.adapters
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.store
    }

    /// Parameter count of the frozen base, adapters excluded.
    pub fn base_param_count(&self) -> usize {
        self.base_params
    }

    /// Dimensions of this model with its own base size as the denominator.
    pub fn dims(&self) -> ModelDims {
        dims_of(&self.config, self.base_params)
    }

    pub fn trainable_count(&self) -> usize {
        self.store
            .trainable_ids()
            .map(|id| self.store.get(id).len())
            .sum()
    }

    pub fn freeze_report(&self) -> FreezeReport {
        let tensors: Vec<TensorSummary> = self
            .store
            .tensors()
            .iter()
            .map(|t| TensorSummary {
                name: t.name.clone(),
                tag: t.tag,
                elements: t.value.len(),
            })
            .collect();
        let total = |tag| {
            tensors
                .iter()
                .filter(|t| t.tag == tag)
                .map(|t| t.elements)
                .sum()
        };
        let trainable_total: usize = total(Tag::Trainable);
        FreezeReport {
            frozen_total: total(Tag::Frozen),
            trainable_total,
            trainable_percent: super::params::percent_of(
                trainable_total as u64,
                self.base_params as u64,
            ),
            expected_trainable: count_adapter_params(&self.dims(), &self.adapters),
            tensors,
        }
    }

    /// Overwrites every adapter tensor with N(0, std²) draws.
    ///
    /// Freshly built adapters have a zero up-projection, which hides the
    /// down-projection from the loss; gradient checks start from here instead.
    pub fn randomize_adapters(&mut self, seed: u64, std: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, std).expect("finite std");
        let ids: Vec<_> = self.store.trainable_ids().collect();
        for id in ids {
            let t = self.store.tensor_mut(id);
            t.value
                .mapv_inplace(|_| F::from_f64(dist.sample(&mut rng)).unwrap());
        }
    }

    fn check_ids(&self, what: &'static str, ids: &[usize]) -> Result<(), AdapterError> {
        if ids.is_empty() {
            return Err(AdapterError::EmptySequence(what));
        }
        if ids.len() > self.config.max_len {
            return Err(AdapterError::SequenceTooLong {
                what,
                len: ids.len(),
                max: self.config.max_len,
            });
        }
        if let Some(&bad) = ids.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(AdapterError::TokenOutOfRange {
                token: bad,
                vocab: self.config.vocab_size,
            });
        }
        Ok(())
    }

    fn embed(&self, ids: &[usize], positions: ParamId) -> Array2<F> {
        let table = self.store.get(self.embed);
        let pos = self.store.get(positions);
        let mut x = Array2::zeros((ids.len(), self.config.d_model));
        for (i, (mut row, &id)) in x.rows_mut().into_iter().zip(ids).enumerate() {
            row.assign(&(&table.row(id) + &pos.row(i)));
        }
        x
    }

    fn run(
        &self,
        source: &[usize],
        target: &[usize],
    ) -> Result<(F, Array2<F>, ForwardCache<F>), AdapterError> {
        self.check_ids("source", source)?;
        self.check_ids("target", target)?;
        let st = &self.store;

        let mut x = self.embed(source, self.enc_pos);
        let mut enc_caches = Vec::with_capacity(self.encoder.len());
        for layer in &self.encoder {
            let (a, attn) = layer.attn.forward(st, &x, &x);
            let (a, adapt0) = maybe_adapt(layer.adapters[0].as_ref(), st, a);
            let (h, ln1) = layer.ln1.forward(st, &(&x + &a));
            let (f, ffn) = layer.ffn.forward(st, &h);
            let (f, adapt1) = maybe_adapt(layer.adapters[1].as_ref(), st, f);
            let (y, ln2) = layer.ln2.forward(st, &(&h + &f));
            enc_caches.push(EncoderCache {
                attn,
                adapt0,
                ln1,
                ffn,
                adapt1,
                ln2,
            });
            x = y;
        }
        let memory = x;

        let mut dec_in = Vec::with_capacity(target.len());
        dec_in.push(BOS);
        dec_in.extend_from_slice(&target[..target.len() - 1]);
        let mut x = self.embed(&dec_in, self.dec_pos);
        let mut dec_caches = Vec::with_capacity(self.decoder.len());
        for layer in &self.decoder {
            let (a, self_attn) = layer.self_attn.forward(st, &x, &x);
            let (a, adapt0) = maybe_adapt(layer.adapters[0].as_ref(), st, a);
            let (h1, ln1) = layer.ln1.forward(st, &(&x + &a));
            let (c, cross_attn) = layer.cross_attn.forward(st, &h1, &memory);
            let (h2, ln2) = layer.ln2.forward(st, &(&h1 + &c));
            let (f, ffn) = layer.ffn.forward(st, &h2);
            let (f, adapt1) = maybe_adapt(layer.adapters[1].as_ref(), st, f);
            let (y, ln3) = layer.ln3.forward(st, &(&h2 + &f));
            dec_caches.push(DecoderCache {
                self_attn,
                adapt0,
                ln1,
                cross_attn,
                ln2,
                ffn,
                adapt1,
                ln3,
            });
            x = y;
        }

        let logits = self.head.forward(st, &x);
        let mut probs = logits.clone();
        let mut loss = F::zero();
        for (mut row, &label) in probs.rows_mut().into_iter().zip(target) {
            let max = row.fold(F::neg_infinity(), |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let total = row.sum();
            loss -= (row[label] / total).ln();
            row.mapv_inplace(|v| v / total);
        }
        let loss = loss / F::from_usize(target.len()).unwrap();
        let cache = ForwardCache {
            encoder: enc_caches,
            decoder: dec_caches,
            dec_out: x,
            probs,
            labels: target.to_vec(),
        };
        Ok((loss, logits, cache))
    }

    /// Teacher-forced cross-entropy of `target` given `source`.
    pub fn forward(
        &self,
        source: &[usize],
        target: &[usize],
    ) -> Result<ForwardOutput<F>, AdapterError> {
        let (loss, logits, _) = self.run(source, target)?;
        Ok(ForwardOutput { loss, logits })
    }

    /// Loss and gradients. Only trainable tensors receive nonzero gradient.
    pub fn loss_and_grads(
        &self,
        source: &[usize],
        target: &[usize],
    ) -> Result<(F, Grads<F>), AdapterError> {
        let (loss, _, cache) = self.run(source, target)?;
        let st = &self.store;
        let mut g = Grads::zeros_like(st);

        let n = F::from_usize(cache.labels.len()).unwrap();
        let mut dlogits = cache.probs;
        for (mut row, &label) in dlogits.rows_mut().into_iter().zip(&cache.labels) {
            row[label] -= F::one();
            row.mapv_inplace(|v| v / n);
        }
        let mut dx = self.head.backward(st, &cache.dec_out, &dlogits, &mut g);

        let mut dmemory: Array2<F> = Array2::zeros((0, 0));
        for (layer, c) in self.decoder.iter().zip(&cache.decoder).rev() {
            let ds3 = layer.ln3.backward(st, &c.ln3, &dx, &mut g);
            let df = maybe_adapt_backward(
                layer.adapters[1].as_ref(),
                st,
                c.adapt1.as_ref(),
                ds3.clone(),
                &mut g,
            );
            let dh2 = ds3 + layer.ffn.backward(st, &c.ffn, &df, &mut g);
            let ds2 = layer.ln2.backward(st, &c.ln2, &dh2, &mut g);
            let (dq, dkv) = layer.cross_attn.backward(st, &c.cross_attn, &ds2, &mut g);
            dmemory = if dmemory.is_empty() {
                dkv
            } else {
                dmemory + dkv
            };
            let dh1 = ds2 + dq;
            let ds1 = layer.ln1.backward(st, &c.ln1, &dh1, &mut g);
            let da = maybe_adapt_backward(
                layer.adapters[0].as_ref(),
                st,
                c.adapt0.as_ref(),
                ds1.clone(),
                &mut g,
            );
            let (dq, dkv) = layer.self_attn.backward(st, &c.self_attn, &da, &mut g);
            dx = ds1 + dq + dkv;
        }

        let mut dx = dmemory;
        for (layer, c) in self.encoder.iter().zip(&cache.encoder).rev() {
            let ds2 = layer.ln2.backward(st, &c.ln2, &dx, &mut g);
            let df = maybe_adapt_backward(
                layer.adapters[1].as_ref(),
                st,
                c.adapt1.as_ref(),
                ds2.clone(),
                &mut g,
            );
            let dh = ds2 + layer.ffn.backward(st, &c.ffn, &df, &mut g);
            let ds1 = layer.ln1.backward(st, &c.ln1, &dh, &mut g);
            let da = maybe_adapt_backward(
                layer.adapters[0].as_ref(),
                st,
                c.adapt0.as_ref(),
                ds1.clone(),
                &mut g,
            );
            let (dq, dkv) = layer.attn.backward(st, &c.attn, &da, &mut g);
            dx = ds1 + dq + dkv;
        }
        Ok((loss, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ToyConfig {
        ToyConfig {
            vocab_size: 16,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            bottleneck: 4,
            n_encoder_layers: 1,
            n_decoder_layers: 1,
            max_len: 8,
            head_gain: 1.0,
            seed: 3,
        }
    }

    #[test]
    fn config_validation() {
        let mut c = small();
        c.n_heads = 3;
        assert!(matches!(
            build_toy_model::<f64>(&c, &AdapterSet::none()),
            Err(AdapterError::InvalidConfig(_))
        ));
        let mut c = small();
        c.d_ff = 0;
        assert!(build_toy_model::<f64>(&c, &AdapterSet::none()).is_err());
        let c = small();
        let bad = AdapterSet {
            encoder: [1].into(),
            decoder: Default::default(),
        };
        assert!(matches!(
            build_toy_model::<f64>(&c, &bad),
            Err(AdapterError::InvalidAdapterSet(_))
        ));
    }

    #[test]
    fn input_errors() {
        let m = build_toy_model::<f64>(&small(), &AdapterSet::none()).unwrap();
        assert!(matches!(
            m.forward(&[], &[1]),
            Err(AdapterError::EmptySequence("source"))
        ));
        assert!(matches!(
            m.forward(&[1], &[16]),
            Err(AdapterError::TokenOutOfRange { token: 16, .. })
        ));
        assert!(matches!(
            m.forward(&[1; 9], &[1]),
            Err(AdapterError::SequenceTooLong { .. })
        ));
    }

    #[test]
    fn forward_is_deterministic_and_finite() {
        let c = small();
        let dims = dims_of(&c, 0);
        let a = build_toy_model::<f64>(&c, &AdapterSet::all(&dims)).unwrap();
        let b = build_toy_model::<f64>(&c, &AdapterSet::all(&dims)).unwrap();
        let (x, y) = (
            a.forward(&[1, 2, 3], &[4, 5]).unwrap(),
            b.forward(&[1, 2, 3], &[4, 5]).unwrap(),
        );
        assert_eq!(x, y);
        assert!(x.loss.is_finite() && x.loss > 0.0);
        assert_eq!(x.logits.dim(), (2, 16));
    }

    #[test]
    fn decoder_is_causal() {
        // Changing a later target token must not change earlier logits.
        let m = build_toy_model::<f64>(&small(), &AdapterSet::none()).unwrap();
        let a = m.forward(&[1, 2], &[3, 4, 5]).unwrap().logits;
        let b = m.forward(&[1, 2], &[3, 4, 9]).unwrap().logits;
        assert_eq!(a.row(0), b.row(0));
        assert_eq!(a.row(1), b.row(1));
        assert_eq!(a.row(2), b.row(2));
        let c = m.forward(&[1, 2], &[3, 7, 5]).unwrap().logits;
        assert_eq!(a.row(1), c.row(1));
        assert_ne!(a.row(2), c.row(2));
    }

    #[test]
    fn base_weights_do_not_depend_on_adapter_set() {
        let c = small();
        let dims = dims_of(&c, 0);
        let bare = build_toy_model::<f64>(&c, &AdapterSet::none()).unwrap();
        let full = build_toy_model::<f64>(&c, &AdapterSet::all(&dims)).unwrap();
        let n = bare.params().tensors().len();
        assert_eq!(&full.params().tensors()[..n], bare.params().tensors());
        assert_eq!(full.base_param_count(), bare.base_param_count());
    }

    #[test]
    fn single_precision_builds_from_same_values() {
        let c = small();
        let m64 = build_toy_model::<f64>(&c, &AdapterSet::none()).unwrap();
        let m32 = build_toy_model::<f32>(&c, &AdapterSet::none()).unwrap();
        let l64 = m64.forward(&[1, 2, 3], &[4, 5]).unwrap().loss;
        let l32 = m32.forward(&[1, 2, 3], &[4, 5]).unwrap().loss;
        assert!((l64 - l32 as f64).abs() < 1e-4);
    }

    #[test]
    fn freeze_report_matches_closed_form() {
        let c = ToyConfig::default();
        let dims = dims_of(&c, 0);
        let set = AdapterSet::from_indices(&dims, &[1], &[2, 3]).unwrap();
        let m = build_toy_model::<f64>(&c, &set).unwrap();
        let r = m.freeze_report();
        assert_eq!(r.trainable_total as u64, r.expected_trainable.count);
        assert_eq!(r.trainable_total, 3 * 2 * (2 * 32 * 8 + 8 + 32));
        assert_eq!(r.frozen_total, m.base_param_count());
        assert!(r
            .tensors
            .iter()
            .filter(|t| t.tag == Tag::Trainable)
            .all(|t| t.name.contains("adapter")));
    }
}
