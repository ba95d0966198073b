//! Parameter-efficient abstractive QA toolkit: table linearization, prompted
//! input assembly, bottleneck adapters on a frozen toy encoder-decoder,
//! adapter-ablation accounting, QA dataset ingest, and ROUGE/BLEU evaluation.

pub mod ablation;
pub mod adapter;
pub mod dataset;
pub mod input;
pub mod linearize;
pub mod metrics;
pub mod table;
