//! Adapter-layer ablation plans and their trainable-parameter cost.
//!
//! Removals always start at the first layer of a module: the encoder drops
//! layers `0..=q`, the decoder drops `n_enc..=s` (12..=s at reference dims).

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapter::{count_adapter_params, AdapterSet, ModelDims};

/// Number of trailing layers per module covered by the grid plan.
pub const GRID_LEVELS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AblationError {
    #[error("removed {module} layers must be a contiguous run starting at {start}, got {got:?}")]
    NotContiguous {
        module: &'static str,
        start: usize,
        got: Vec<usize>,
    },
    #[error("cannot remove {count} {module} layers from a module of {available}")]
    TooMany {
        module: &'static str,
        count: usize,
        available: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AblationConfig {
    pub label: String,
    pub removed_encoder: Vec<usize>,
    pub removed_decoder: Vec<usize>,
}

fn range_label(idx: &[usize]) -> String {
    match (idx.first(), idx.last()) {
        (Some(a), Some(b)) => format!("{a}–{b}"),
        _ => "–".to_string(),
    }
}

impl AblationConfig {
    /// Removes the first `encoder` encoder layers and the first `decoder`
    /// decoder layers.
    pub fn new(dims: &ModelDims, encoder: usize, decoder: usize) -> Result<Self, AblationError> {
        if encoder > dims.n_encoder_layers {
            return Err(AblationError::TooMany {
                module: "encoder",
                count: encoder,
                available: dims.n_encoder_layers,
            });
        }
        if decoder > dims.n_decoder_layers {
            return Err(AblationError::TooMany {
                module: "decoder",
                count: decoder,
                available: dims.n_decoder_layers,
            });
        }
        let removed_encoder: Vec<usize> = (0..encoder).collect();
        let start = dims.n_encoder_layers;
        let removed_decoder: Vec<usize> = (start..start + decoder).collect();
        Ok(AblationConfig {
            label: format!(
                "({}, {})",
                range_label(&removed_encoder),
                range_label(&removed_decoder)
            ),
            removed_encoder,
            removed_decoder,
        })
    }

    /// Validates explicit index lists; each must be a contiguous run from the
    /// module's first layer.
    pub fn from_indices(
        dims: &ModelDims,
        encoder: &[usize],
        decoder: &[usize],
    ) -> Result<Self, AblationError> {
        let check = |module: &'static str, start: usize, idx: &[usize]| {
            let mut sorted = idx.to_vec();
            sorted.sort_unstable();
            if sorted.iter().enumerate().any(|(i, &v)| v != start + i) {
                return Err(AblationError::NotContiguous {
                    module,
                    start,
                    got: idx.to_vec(),
                });
            }
            Ok(sorted.len())
        };
        let enc = check("encoder", 0, encoder)?;
        let dec = check("decoder", dims.n_encoder_layers, decoder)?;
        Self::new(dims, enc, dec)
    }
}

#[derive(Deserialize)]
struct RawAblation {
    #[serde(default)]
    removed_encoder: Vec<usize>,
    #[serde(default)]
    removed_decoder: Vec<usize>,
}

/// Parses `{"removed_encoder": [...], "removed_decoder": [...]}`; any label in
/// the input is ignored and regenerated.
pub fn parse_ablation(dims: &ModelDims, json: &str) -> Result<AblationConfig, String> {
    let raw: RawAblation = serde_json::from_str(json).map_err(|e| e.to_string())?;
    AblationConfig::from_indices(dims, &raw.removed_encoder, &raw.removed_decoder)
        .map_err(|e| e.to_string())
}

/// Removes k+1 leading layers from both modules for k = 0, 1, …, ending with
/// every adapter removed.
pub fn uniform_ablation_plan(dims: &ModelDims) -> Vec<AblationConfig> {
    let steps = dims.n_encoder_layers.max(dims.n_decoder_layers);
    (1..=steps)
        .map(|k| {
            AblationConfig::new(
                dims,
                k.min(dims.n_encoder_layers),
                k.min(dims.n_decoder_layers),
            )
            .expect("counts clamped to module size")
        })
        .collect()
}

/// Cartesian product over the last [`GRID_LEVELS`] removal depths of each
/// module. Row-major with the decoder as the row: the first entry is
/// (0–6, 12–18) at reference dims, the encoder depth varies fastest.
pub fn grid_ablation_plan(dims: &ModelDims) -> Vec<AblationConfig> {
    let depths = |n: usize| (n + 1 - GRID_LEVELS.min(n))..=n;
    depths(dims.n_decoder_layers)
        .flat_map(|dec| depths(dims.n_encoder_layers).map(move |enc| (enc, dec)))
        .map(|(enc, dec)| AblationConfig::new(dims, enc, dec).expect("depths within module size"))
        .collect()
}

/// Adapter set with the configuration's layers taken out.
pub fn apply_ablation(set: &AdapterSet, config: &AblationConfig) -> AdapterSet {
    let mut out = set.clone();
    for i in &config.removed_encoder {
        out.encoder.remove(i);
    }
    for i in &config.removed_decoder {
        out.decoder.remove(i);
    }
    out
}

/// One line of a plan manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub label: String,
    pub removed_encoder: Vec<usize>,
    pub removed_decoder: Vec<usize>,
    pub trainable: u64,
    pub percent: f64,
}

/// Attaches the trainable count of the remaining adapters to each config,
/// starting from adapters on every layer.
pub fn cost_plan(plan: &[AblationConfig], dims: &ModelDims) -> Vec<ManifestEntry> {
    let full = AdapterSet::all(dims);
    plan.iter()
        .map(|c| {
            let cost = count_adapter_params(dims, &apply_ablation(&full, c));
            ManifestEntry {
                label: c.label.clone(),
                removed_encoder: c.removed_encoder.clone(),
                removed_decoder: c.removed_decoder.clone(),
                trainable: cost.count,
                percent: cost.percent,
            }
        })
        .collect()
}

pub fn write_manifest<W: Write>(entries: &[ManifestEntry], mut out: W) -> io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ModelDims {
        ModelDims::reference()
    }

    #[test]
    fn uniform_plan_shape() {
        let plan = uniform_ablation_plan(&reference());
        assert_eq!(plan.len(), 12);
        assert_eq!(plan[0].removed_encoder, vec![0]);
        assert_eq!(plan[0].removed_decoder, vec![12]);
        assert_eq!(plan[0].label, "(0–0, 12–12)");
        assert_eq!(plan[11].removed_encoder, (0..12).collect::<Vec<_>>());
        assert_eq!(cost_plan(&plan, &reference())[11].trainable, 0);
    }

    #[test]
    fn grid_plan_shape() {
        let plan = grid_ablation_plan(&reference());
        assert_eq!(plan.len(), 36);
        assert_eq!(plan[0].label, "(0–6, 12–18)");
        assert_eq!(plan[1].label, "(0–7, 12–18)");
        assert_eq!(plan[6].label, "(0–6, 12–19)");
        assert_eq!(plan[35].label, "(0–11, 12–23)");
        assert_eq!(cost_plan(&plan[35..], &reference())[0].trainable, 0);
    }

    #[test]
    fn reference_costs() {
        let dims = reference();
        let cost = |e, d| cost_plan(&[AblationConfig::new(&dims, e, d).unwrap()], &dims)[0].clone();
        let c = cost(7, 7);
        assert_eq!((c.trainable, c.percent), (2_643_200, 0.65));
        let c = cost(9, 9);
        assert_eq!((c.trainable, c.percent), (1_585_920, 0.39));
        let c = cost(11, 11);
        assert_eq!((c.trainable, c.percent), (528_640, 0.13));
        let c = cost(0, 0);
        assert_eq!(c.label, "(–, –)");
        assert_eq!(c.trainable, 6_343_680);
    }

    #[test]
    fn index_lists_must_be_contiguous_from_start() {
        let dims = reference();
        let c = AblationConfig::from_indices(&dims, &[2, 0, 1], &[12, 13, 14]).unwrap();
        assert_eq!(c.label, "(0–2, 12–14)");
        assert!(matches!(
            AblationConfig::from_indices(&dims, &[1, 2], &[]),
            Err(AblationError::NotContiguous {
                module: "encoder",
                ..
            })
        ));
        assert!(AblationConfig::from_indices(&dims, &[], &[13]).is_err());
        assert!(AblationConfig::from_indices(&dims, &[0, 0], &[]).is_err());
        assert!(matches!(
            AblationConfig::new(&dims, 13, 0),
            Err(AblationError::TooMany { .. })
        ));
    }

    #[test]
    fn parse_from_json() {
        let dims = reference();
        let c = parse_ablation(
            &dims,
            r#"{"removed_encoder": [0,1,2], "removed_decoder": [12,13,14]}"#,
        )
        .unwrap();
        assert_eq!(c.label, "(0–2, 12–14)");
        assert!(parse_ablation(&dims, r#"{"removed_encoder": [5]}"#).is_err());
        assert!(parse_ablation(&dims, "nope").is_err());
    }

    #[test]
    fn apply_is_idempotent_and_composes_with_count() {
        let dims = reference();
        let full = AdapterSet::all(&dims);
        let c = AblationConfig::new(&dims, 3, 3).unwrap();
        let once = apply_ablation(&full, &c);
        assert_eq!(apply_ablation(&once, &c), once);
        assert!(!once.contains(0) && !once.contains(14) && once.contains(15));
        assert_eq!(count_adapter_params(&dims, &once).count, 4_757_760);
    }

    #[test]
    fn manifest_is_jsonl() {
        let dims = reference();
        let mut buf = Vec::new();
        write_manifest(&cost_plan(&uniform_ablation_plan(&dims), &dims), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 12);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["trainable"], 22 * 264_320);
        assert_eq!(first["removed_decoder"], serde_json::json!([12]));
    }
}
