//! Central finite-difference check of the analytic adapter gradients.

use serde::Serialize;

use super::layers::Tag;
use super::model::ToyModel;
use super::{AdapterError, Real};

/// Denominator floor for relative error, so that gradients which are zero up to
/// rounding do not report huge relative errors.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub elements: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub eps: f64,
    pub loss: f64,
    /// Number of trainable scalars checked.
    pub checked: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// Largest |gradient| found in any frozen tensor; zero under the freezing contract.
    pub frozen_grad_max_abs: f64,
    pub tensors: Vec<TensorCheck>,
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn set_element<F: Real>(model: &mut ToyModel<F>, id: usize, i: usize, v: F) {
    model
        .params_mut()
        .tensor_mut(id)
        .value
        .as_slice_mut()
        .expect("standard layout")[i] = v;
}

fn loss_at<F: Real>(
    model: &mut ToyModel<F>,
    id: usize,
    i: usize,
    v: F,
    source: &[usize],
    target: &[usize],
) -> Result<f64, AdapterError> {
    set_element(model, id, i, v);
    Ok(model.forward(source, target)?.loss.to_f64().unwrap())
}

/// Compares `∂loss/∂θ` for every trainable scalar θ against
/// `(loss(θ+eps) − loss(θ−eps)) / 2eps`. The model is restored afterwards.
pub fn grad_check<F: Real>(
    model: &mut ToyModel<F>,
    source: &[usize],
    target: &[usize],
    eps: f64,
) -> Result<GradCheckReport, AdapterError> {
    let (loss, grads) = model.loss_and_grads(source, target)?;
    let step = F::from_f64(eps).unwrap();
    let two_eps = 2.0 * eps;

    let frozen_grad_max_abs = model
        .params()
        .tensors()
        .iter()
        .zip(&grads.tensors)
        .filter(|(t, _)| t.tag == Tag::Frozen)
        .flat_map(|(_, g)| g.iter())
        .fold(0.0f64, |m, v| m.max(v.to_f64().unwrap().abs()));

    let ids: Vec<_> = model.params().trainable_ids().collect();
    let mut tensors = Vec::with_capacity(ids.len());
    for id in ids {
        let n = model.params().get(id).len();
        let mut check = TensorCheck {
            name: model.params().tensors()[id].name.clone(),
            elements: n,
            max_abs_error: 0.0,
            max_rel_error: 0.0,
        };
        for i in 0..n {
            let original = model.params().get(id).as_slice().expect("standard layout")[i];
            let plus = loss_at(model, id, i, original + step, source, target)?;
            let minus = loss_at(model, id, i, original - step, source, target)?;
            set_element(model, id, i, original);
            let numeric = (plus - minus) / two_eps;
            let analytic = grads.tensors[id].as_slice().expect("standard layout")[i]
                .to_f64()
                .unwrap();
            check.max_abs_error = check.max_abs_error.max((analytic - numeric).abs());
            check.max_rel_error = check.max_rel_error.max(rel_error(analytic, numeric));
        }
        tensors.push(check);
    }

    Ok(GradCheckReport {
        eps,
        loss: loss.to_f64().unwrap(),
        checked: tensors.iter().map(|t| t.elements).sum(),
        max_abs_error: tensors.iter().fold(0.0, |m, t| m.max(t.max_abs_error)),
        max_rel_error: tensors.iter().fold(0.0, |m, t| m.max(t.max_rel_error)),
        frozen_grad_max_abs,
        tensors,
    })
}
