//! Adapter-only training. Updates touch trainable tensors only; frozen tensors
//! are never written.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::Grads;
use super::model::{ToyModel, BOS};
use super::{AdapterError, Real};

/// (source ids, target ids)
pub type Example = (Vec<usize>, Vec<usize>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Constant,
    /// Linear decay from the base rate to zero over the run.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub schedule: Schedule,
    /// Seeds batch shuffling.
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            steps: 200,
            batch_size: 32,
            learning_rate: 1e-2,
            optimizer: Optimizer::adam(),
            schedule: Schedule::Constant,
            seed: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: usize,
    pub trainable_params: usize,
    /// Mean loss over the whole dataset before the first update.
    pub initial_loss: f64,
    /// Mean loss over the whole dataset after the last update.
    pub final_loss: f64,
    /// Batch loss at each step, measured before that step's update.
    pub step_losses: Vec<f64>,
    /// Mean of the step losses within each pass over the data.
    pub epoch_losses: Vec<f64>,
}

/// `n` random sequences of length `len` whose target equals the source.
/// Tokens are drawn from `1..vocab` so the decoder start id never appears.
pub fn copy_task(n: usize, len: usize, vocab: usize, seed: u64) -> Vec<Example> {
    assert!(vocab > BOS + 1, "vocabulary must contain a non-start token");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let seq: Vec<usize> = (0..len).map(|_| rng.random_range(BOS + 1..vocab)).collect();
            (seq.clone(), seq)
        })
        .collect()
}

pub fn mean_loss<F: Real>(model: &ToyModel<F>, data: &[Example]) -> Result<f64, AdapterError> {
    let mut total = 0.0;
    for (src, tgt) in data {
        total += model.forward(src, tgt)?.loss.to_f64().unwrap();
    }
    Ok(total / data.len() as f64)
}

struct AdamState<F> {
    m: Vec<Array2<F>>,
    v: Vec<Array2<F>>,
    t: i32,
}

/// Trains the adapters of `model` on `data`.
pub fn train_adapters<F: Real>(
    model: &mut ToyModel<F>,
    data: &[Example],
    hyper: &TrainHyper,
) -> Result<TrainLog, AdapterError> {
    if data.is_empty() {
        return Err(AdapterError::InvalidConfig("training set is empty".into()));
    }
    if hyper.batch_size == 0 {
        return Err(AdapterError::InvalidConfig(
            "batch_size must be positive".into(),
        ));
    }
    let trainable: Vec<_> = model.params().trainable_ids().collect();
    let mut adam = AdamState {
        m: trainable
            .iter()
            .map(|&id| Array2::zeros(model.params().get(id).dim()))
            .collect(),
        v: trainable
            .iter()
            .map(|&id| Array2::zeros(model.params().get(id).dim()))
            .collect(),
        t: 0,
    };
    let initial_loss = mean_loss(model, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut step_losses = Vec::with_capacity(hyper.steps);
    let mut epoch_losses = Vec::new();
    let mut epoch_sum = 0.0;
    let mut epoch_steps = 0usize;

    for step in 0..hyper.steps {
        if cursor >= order.len() {
            if epoch_steps > 0 {
                epoch_losses.push(epoch_sum / epoch_steps as f64);
            }
            order.shuffle(&mut rng);
            cursor = 0;
            epoch_sum = 0.0;
            epoch_steps = 0;
        }
        let end = (cursor + hyper.batch_size).min(order.len());
        let batch = &order[cursor..end];
        cursor = end;

        let mut grads = Grads::zeros_like(model.params());
        let mut batch_loss = 0.0;
        for &i in batch {
            let (loss, g) = model.loss_and_grads(&data[i].0, &data[i].1)?;
            batch_loss += loss.to_f64().unwrap();
            for &id in &trainable {
                grads.tensors[id] += &g.tensors[id];
            }
        }
        let scale = F::from_usize(batch.len()).unwrap();
        batch_loss /= batch.len() as f64;
        if !batch_loss.is_finite() {
            return Err(AdapterError::Divergence {
                step,
                loss: batch_loss,
            });
        }
        step_losses.push(batch_loss);
        epoch_sum += batch_loss;
        epoch_steps += 1;

        let lr = match hyper.schedule {
            Schedule::Constant => hyper.learning_rate,
            Schedule::Linear => hyper.learning_rate * (1.0 - step as f64 / hyper.steps as f64),
        };
        let lr = F::from_f64(lr).unwrap();
        adam.t += 1;
        for (k, &id) in trainable.iter().enumerate() {
            let g = grads.tensors[id].mapv(|x| x / scale);
            let update = match hyper.optimizer {
                Optimizer::Sgd => g.mapv(|x| lr * x),
                Optimizer::Adam { beta1, beta2, eps } => {
                    let (b1, b2, eps) = (
                        F::from_f64(beta1).unwrap(),
                        F::from_f64(beta2).unwrap(),
                        F::from_f64(eps).unwrap(),
                    );
                    let one = F::one();
                    adam.m[k].zip_mut_with(&g, |m, &x| *m = b1 * *m + (one - b1) * x);
                    adam.v[k].zip_mut_with(&g, |v, &x| *v = b2 * *v + (one - b2) * x * x);
                    let c1 = one - b1.powi(adam.t);
                    let c2 = one - b2.powi(adam.t);
                    let mut u = adam.m[k].clone();
                    u.zip_mut_with(&adam.v[k], |m, &v| {
                        *m = lr * (*m / c1) / ((v / c2).sqrt() + eps)
                    });
                    u
                }
            };
            model.params_mut().tensor_mut(id).value -= &update;
        }
    }
    if epoch_steps > 0 {
        epoch_losses.push(epoch_sum / epoch_steps as f64);
    }

    let final_loss = mean_loss(model, data)?;
    if !final_loss.is_finite() {
        return Err(AdapterError::Divergence {
            step: hyper.steps,
            loss: final_loss,
        });
    }
    Ok(TrainLog {
        steps: hyper.steps,
        trainable_params: model.trainable_count(),
        initial_loss,
        final_loss,
        step_losses,
        epoch_losses,
    })
}
