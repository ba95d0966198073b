//! Bottleneck adapter parameters and exact trainable-parameter accounting.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{AdapterError, Real};

/// Hidden width of the reference encoder-decoder.
pub const REFERENCE_D_MODEL: usize = 1024;
pub const REFERENCE_BOTTLENECK: usize = 64;
pub const REFERENCE_LAYERS: usize = 12;
/// Total parameter count of the reference model; denominator for percentages.
pub const REFERENCE_BASE_PARAMS: u64 = 406_291_456;

/// One bottleneck adapter: `y = x + W_upᵀ relu(W_downᵀ x + b_down) + b_up`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams<F> {
    /// d × b
    pub w_down: Array2<F>,
    pub b_down: Array1<F>,
    /// b × d
    pub w_up: Array2<F>,
    pub b_up: Array1<F>,
}

impl<F: Real> AdapterParams<F> {
    /// Near-identity adapter: zero up-projection, so the block starts as a no-op.
    pub fn zero_up(w_down: Array2<F>, b_down: Array1<F>) -> Self {
        let (d, b) = w_down.dim();
        AdapterParams {
            w_down,
            b_down,
            w_up: Array2::zeros((b, d)),
            b_up: Array1::zeros(d),
        }
    }

    pub fn d_model(&self) -> usize {
        self.w_down.nrows()
    }

    pub fn bottleneck(&self) -> usize {
        self.w_down.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.w_down.len() + self.b_down.len() + self.w_up.len() + self.b_up.len()
    }

    fn check_shapes(&self) -> Result<(), AdapterError> {
        let (d, b) = (self.d_model(), self.bottleneck());
        let mismatch =
            |what: &str, expected: String, found: String| AdapterError::DimensionMismatch {
                what: what.to_string(),
                expected,
                found,
            };
        if self.b_down.len() != b {
            return Err(mismatch(
                "b_down",
                b.to_string(),
                self.b_down.len().to_string(),
            ));
        }
        if self.w_up.dim() != (b, d) {
            return Err(mismatch(
                "w_up",
                format!("{b}x{d}"),
                format!("{:?}", self.w_up.dim()),
            ));
        }
        if self.b_up.len() != d {
            return Err(mismatch("b_up", d.to_string(), self.b_up.len().to_string()));
        }
        Ok(())
    }
}

/// Applies one adapter to a single d-dimensional vector.
pub fn adapter_forward<F: Real>(
    x: ArrayView1<F>,
    p: &AdapterParams<F>,
) -> Result<Array1<F>, AdapterError> {
    p.check_shapes()?;
    if x.len() != p.d_model() {
        return Err(AdapterError::DimensionMismatch {
            what: "input".into(),
            expected: p.d_model().to_string(),
            found: x.len().to_string(),
        });
    }
    let hidden = (x.dot(&p.w_down) + &p.b_down).mapv(|v| v.max(F::zero()));
    Ok(&x + &hidden.dot(&p.w_up) + &p.b_up)
}

/// Size constants that determine adapter parameter counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_model: usize,
    pub bottleneck: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    pub adapters_per_layer: usize,
    pub base_total_params: u64,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self::reference()
    }
}

impl ModelDims {
    /// Twelve-plus-twelve layer, 1024-wide model with 64-wide adapters.
    pub fn reference() -> Self {
        ModelDims {
            d_model: REFERENCE_D_MODEL,
            bottleneck: REFERENCE_BOTTLENECK,
            n_encoder_layers: REFERENCE_LAYERS,
            n_decoder_layers: REFERENCE_LAYERS,
            adapters_per_layer: 2,
            base_total_params: REFERENCE_BASE_PARAMS,
        }
    }

    pub fn validate(&self) -> Result<(), AdapterError> {
        let fields = [
            ("d_model", self.d_model as u64),
            ("bottleneck", self.bottleneck as u64),
            ("n_encoder_layers", self.n_encoder_layers as u64),
            ("n_decoder_layers", self.n_decoder_layers as u64),
            ("adapters_per_layer", self.adapters_per_layer as u64),
            ("base_total_params", self.base_total_params),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(AdapterError::InvalidConfig(format!(
                "{name} must be positive"
            ))),
            None => Ok(()),
        }
    }

    /// `2·d·b + b + d`
    pub fn params_per_adapter(&self) -> u64 {
        let (d, b) = (self.d_model as u64, self.bottleneck as u64);
        2 * d * b + b + d
    }

    pub fn params_per_layer(&self) -> u64 {
        self.adapters_per_layer as u64 * self.params_per_adapter()
    }

    pub fn total_layers(&self) -> usize {
        self.n_encoder_layers + self.n_decoder_layers
    }

    /// Global index range of decoder layers; encoder layers come first.
    pub fn decoder_range(&self) -> std::ops::Range<usize> {
        self.n_encoder_layers..self.total_layers()
    }
}

/// Layers carrying adapters, by global index: encoder `0..n_enc`, decoder
/// `n_enc..n_enc + n_dec`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AdapterSet {
    pub encoder: BTreeSet<usize>,
    pub decoder: BTreeSet<usize>,
}

impl AdapterSet {
    pub fn all(dims: &ModelDims) -> Self {
        AdapterSet {
            encoder: (0..dims.n_encoder_layers).collect(),
            decoder: dims.decoder_range().collect(),
        }
    }

    pub fn none() -> Self {
        Self::default()
    }

    /// Builds a set from index lists, rejecting duplicates and out-of-range
    /// indices.
    pub fn from_indices(
        dims: &ModelDims,
        encoder: &[usize],
        decoder: &[usize],
    ) -> Result<Self, AdapterError> {
        let collect = |idx: &[usize], range: std::ops::Range<usize>, which: &str| {
            let mut set = BTreeSet::new();
            for &i in idx {
                if !range.contains(&i) {
                    return Err(AdapterError::InvalidAdapterSet(format!(
                        "{which} layer {i} outside {}..={}",
                        range.start,
                        range.end.saturating_sub(1)
                    )));
                }
                if !set.insert(i) {
                    return Err(AdapterError::InvalidAdapterSet(format!(
                        "{which} layer {i} listed twice"
                    )));
                }
            }
            Ok(set)
        };
        Ok(AdapterSet {
            encoder: collect(encoder, 0..dims.n_encoder_layers, "encoder")?,
            decoder: collect(decoder, dims.decoder_range(), "decoder")?,
        })
    }

    pub fn validate(&self, dims: &ModelDims) -> Result<(), AdapterError> {
        let enc: Vec<_> = self.encoder.iter().copied().collect();
        let dec: Vec<_> = self.decoder.iter().copied().collect();
        Self::from_indices(dims, &enc, &dec).map(|_| ())
    }

    pub fn len(&self) -> usize {
        self.encoder.len() + self.decoder.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, layer: usize) -> bool {
        self.encoder.contains(&layer) || self.decoder.contains(&layer)
    }

    pub fn union(&self, other: &AdapterSet) -> AdapterSet {
        AdapterSet {
            encoder: self.encoder.union(&other.encoder).copied().collect(),
            decoder: self.decoder.union(&other.decoder).copied().collect(),
        }
    }

    pub fn is_disjoint(&self, other: &AdapterSet) -> bool {
        self.encoder.is_disjoint(&other.encoder) && self.decoder.is_disjoint(&other.decoder)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamCount {
    pub count: u64,
    /// Percentage of `base_total_params`, rounded to two decimals.
    pub percent: f64,
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn percent_of(count: u64, base: u64) -> f64 {
    round2(100.0 * count as f64 / base as f64)
}

/// Trainable adapter parameters for the active layers of `set`.
pub fn count_adapter_params(dims: &ModelDims, set: &AdapterSet) -> ParamCount {
    let count = set.len() as u64 * dims.params_per_layer();
    ParamCount {
        count,
        percent: percent_of(count, dims.base_total_params),
    }
}
