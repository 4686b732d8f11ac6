//! Dense 64-bit float tensors and named parameter collections.
//!
//! Everything the networks own lives here: parameter storage, gradient
//! buffers, the Adam optimizer state, and Polyak target averaging.

use crate::error::{Result, RisError};
use rand::RngExt;
use rand_chacha::ChaCha12Rng;

/// A dense row-major f64 tensor. Parameters carry a same-shape gradient
/// buffer; intermediate values do not.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(RisError::Config(format!(
                "tensor data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Allocates the gradient buffer if missing and returns it.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.data.len()]);
        }
        self.grad.as_mut().unwrap()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Named ordered collection of tensors. Iteration order is insertion order
/// and is stable across save/load, which the checkpoint round-trip relies on.
#[derive(Debug, Clone, Default)]
pub struct ParameterSet {
    entries: Vec<(String, Tensor)>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(RisError::Config(format!("duplicate parameter name {name:?}")));
        }
        self.entries.push((name.to_string(), tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn at(&self, idx: usize) -> (&str, &Tensor) {
        let (n, t) = &self.entries[idx];
        (n.as_str(), t)
    }

    pub fn at_mut(&mut self, idx: usize) -> (&str, &mut Tensor) {
        let (n, t) = &mut self.entries[idx];
        (n.as_str(), t)
    }

    /// Zeroes every gradient buffer. Gradient accumulation across backward
    /// calls is intentional; optimizer steps expect the caller to reset.
    pub fn zero_grads(&mut self) {
        for (_, t) in self.entries.iter_mut() {
            if let Some(g) = t.grad.as_mut() {
                g.fill(0.0);
            }
        }
    }

    /// Merges another set under a `prefix.` namespace (used for checkpoints).
    pub fn insert_namespaced(&mut self, prefix: &str, other: &ParameterSet) -> Result<()> {
        for (name, t) in other.iter() {
            let mut copy = t.clone();
            copy.grad = None;
            self.insert(&format!("{prefix}.{name}"), copy)?;
        }
        Ok(())
    }

    /// Extracts the sub-set stored under `prefix.`, stripping the prefix.
    pub fn extract_namespace(&self, prefix: &str) -> ParameterSet {
        let dot = format!("{prefix}.");
        let mut out = ParameterSet::new();
        for (name, t) in self.iter() {
            if let Some(rest) = name.strip_prefix(&dot) {
                out.insert(rest, t.clone()).expect("unique names in source set");
            }
        }
        out
    }
}

/// Per-parameter Adam moments plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParameterSet) -> Self {
        let m = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        let v = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        AdamState { m, v, t: 0 }
    }
}

/// One bias-corrected Adam update using the gradients stored in `params`.
/// Gradients are left untouched; callers reset them between steps.
pub fn adam_step(
    params: &mut ParameterSet,
    adam: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    for idx in 0..params.len() {
        let (name, tensor) = params.at(idx);
        if let Some(g) = tensor.grad.as_ref() {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(RisError::NonFinite(format!(
                    "gradient of {name:?} contains NaN/inf; aborting optimizer step"
                )));
            }
        }
    }
    adam.t += 1;
    let t = adam.t as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for idx in 0..params.len() {
        let (_, tensor) = params.at_mut(idx);
        let Some(grad) = tensor.grad.as_ref() else {
            continue;
        };
        let m = &mut adam.m[idx];
        let v = &mut adam.v[idx];
        for i in 0..grad.len() {
            let g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            tensor.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// target <- tau * online + (1 - tau) * target, elementwise.
pub fn polyak_update(target: &mut ParameterSet, online: &ParameterSet, tau: f64) -> Result<()> {
    if target.len() != online.len() {
        return Err(RisError::Config(format!(
            "polyak: target has {} tensors, online has {}",
            target.len(),
            online.len()
        )));
    }
    for idx in 0..target.len() {
        let (online_name, online_t) = online.at(idx);
        let online_name = online_name.to_string();
        let (target_name, target_t) = target.at_mut(idx);
        if target_name != online_name || target_t.shape != online_t.shape {
            return Err(RisError::Config(format!(
                "polyak: mismatch at index {idx}: target {target_name:?} {:?} vs online {online_name:?} {:?}",
                target_t.shape, online_t.shape
            )));
        }
        for (t, o) in target_t.data.iter_mut().zip(online_t.data.iter()) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }
    Ok(())
}

/// Builds MLP parameters named `w0, b0, w1, b1, ...` for the layer sizes
/// `in_dim -> hidden[0] -> ... -> out_dim`. Weights are uniform in
/// [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
pub fn init_mlp_params(
    rng: &mut ChaCha12Rng,
    in_dim: usize,
    hidden: &[usize],
    out_dim: usize,
) -> ParameterSet {
    let mut dims = vec![in_dim];
    dims.extend_from_slice(hidden);
    dims.push(out_dim);
    let mut params = ParameterSet::new();
    for l in 0..dims.len() - 1 {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let mut w = Tensor::from_vec(&[fan_in, fan_out], data).expect("sized above");
        w.grad = Some(vec![0.0; fan_in * fan_out]);
        let mut b = Tensor::zeros(&[1, fan_out]);
        b.grad = Some(vec![0.0; fan_out]);
        params.insert(&format!("w{l}"), w).expect("fresh set");
        params.insert(&format!("b{l}"), b).expect("fresh set");
    }
    params
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn single_param(values: &[f64]) -> ParameterSet {
        let mut t = Tensor::from_vec(&[values.len()], values.to_vec()).unwrap();
        t.grad = Some(vec![0.0; values.len()]);
        let mut p = ParameterSet::new();
        p.insert("w", t).unwrap();
        p
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        // At t=1 the bias corrections cancel: update = -lr * g / (|g| + eps').
        let mut params = single_param(&[1.0, -2.0]);
        params.get_mut("w").unwrap().grad_mut().copy_from_slice(&[10.0, -3.0]);
        let mut adam = AdamState::new(&params);
        adam_step(&mut params, &mut adam, 1e-3, 0.9, 0.999, 1e-8).unwrap();
        let w = &params.get("w").unwrap().data;
        assert!((w[0] - (1.0 - 1e-3)).abs() < 1e-6);
        assert!((w[1] - (-2.0 + 1e-3)).abs() < 1e-6);
    }

    #[test]
    fn adam_zero_grad_leaves_params_unchanged() {
        let mut params = single_param(&[0.5, -0.25]);
        let mut adam = AdamState::new(&params);
        adam_step(&mut params, &mut adam, 1e-2, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(params.get("w").unwrap().data, vec![0.5, -0.25]);
    }

    #[test]
    fn adam_two_steps_match_hand_recurrence() {
        // Constant gradient g, scalar parameter; replay the recurrence by hand.
        let (lr, b1, b2, eps) = (1e-2, 0.9f64, 0.999f64, 1e-8);
        let g = 0.7;
        let mut w = 1.5;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2i32 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            w -= lr * m_hat / (v_hat.sqrt() + eps);
        }

        let mut params = single_param(&[1.5]);
        let mut adam = AdamState::new(&params);
        for _ in 0..2 {
            params.get_mut("w").unwrap().grad_mut()[0] = g;
            adam_step(&mut params, &mut adam, lr, b1, b2, eps).unwrap();
        }
        assert!((params.get("w").unwrap().data[0] - w).abs() < 1e-12);
    }

    #[test]
    fn adam_rejects_non_finite_grad() {
        let mut params = single_param(&[1.0]);
        params.get_mut("w").unwrap().grad_mut()[0] = f64::NAN;
        let mut adam = AdamState::new(&params);
        let err = adam_step(&mut params, &mut adam, 1e-3, 0.9, 0.999, 1e-8);
        assert!(err.is_err());
        assert_eq!(adam.t, 0);
    }

    #[test]
    fn polyak_boundaries_and_midpoint() {
        let online = single_param(&[2.0]);
        let mut target = single_param(&[0.0]);
        polyak_update(&mut target, &online, 0.0).unwrap();
        assert_eq!(target.get("w").unwrap().data[0], 0.0);
        polyak_update(&mut target, &online, 0.5).unwrap();
        assert_eq!(target.get("w").unwrap().data[0], 1.0);
        let mut target = single_param(&[0.0]);
        polyak_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target.get("w").unwrap().data[0], 2.0);
    }

    #[test]
    fn polyak_is_exact_contraction() {
        let online = single_param(&[2.0]);
        let mut target = single_param(&[0.0]);
        let tau = 0.25;
        for k in 1..=20 {
            polyak_update(&mut target, &online, tau).unwrap();
            let gap = (target.get("w").unwrap().data[0] - 2.0).abs();
            let expected = 2.0 * (1.0 - tau).powi(k);
            assert!((gap - expected).abs() < 1e-12, "k={k} gap={gap} want={expected}");
        }
    }

    #[test]
    fn polyak_rejects_name_mismatch() {
        let online = single_param(&[2.0]);
        let mut t = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        t.grad = Some(vec![0.0]);
        let mut target = ParameterSet::new();
        target.insert("other", t).unwrap();
        assert!(polyak_update(&mut target, &online, 0.5).is_err());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = stream_rng(5, Stream::Init, 0);
        let params = init_mlp_params(&mut rng, 16, &[8], 2);
        let w0 = params.get("w0").unwrap();
        let bound = 1.0 / 4.0;
        assert!(w0.data.iter().all(|x| x.abs() <= bound));
        assert!(params.get("b0").unwrap().data.iter().all(|&x| x == 0.0));
        assert_eq!(params.get("w1").unwrap().shape, vec![8, 2]);
    }
}
