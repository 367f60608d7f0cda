use indexmap::IndexMap;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tape::{Gradients, Tape};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Seeded generator used everywhere randomness is needed.
pub type Rng = ChaCha8Rng;

pub fn seed_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Tensor of i.i.d. uniform values in `[-scale, scale]`.
pub fn init_uniform(shape: &[usize], scale: f64, rng: &mut Rng) -> Result<Tensor> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Validation(format!("init scale must be positive, got {scale}")));
    }
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-scale..=scale)).collect();
    Tensor::new(shape, data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Option<Tensor>,
    first_moment: Tensor,
    second_moment: Tensor,
}

impl Param {
    fn new(value: Tensor) -> Self {
        let zeros = Tensor::zeros(value.shape());
        Self { value, grad: None, first_moment: zeros.clone(), second_moment: zeros }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Named trainable tensors plus their Adam state. Iteration order is
/// insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: IndexMap<String, Param>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), Param::new(value));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, p)| (k.as_str(), &p.value))
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.params.get(name).map(|p| &p.value).ok_or_else(|| Error::UnknownParameter(name.into()))
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params.get_mut(name).map(|p| &mut p.value).ok_or_else(|| Error::UnknownParameter(name.into()))
    }

    pub fn set_grad(&mut self, name: &str, grad: Tensor) -> Result<()> {
        let p = self.params.get_mut(name).ok_or_else(|| Error::UnknownParameter(name.into()))?;
        if p.value.shape() != grad.shape() {
            return Err(Error::shape_mismatch(name, p.value.shape(), grad.shape()));
        }
        p.grad = Some(grad);
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad = None;
        }
    }

    /// Copies gradients of every parameter bound on `tape` into the store.
    /// A bound parameter the output did not depend on gets a zero gradient.
    pub fn load_grads(&mut self, tape: &Tape, grads: &Gradients) -> Result<()> {
        for (name, var) in tape.param_bindings() {
            let g = match grads.get(*var) {
                Some(g) => g.clone(),
                None => Tensor::zeros(self.value(name)?.shape()),
            };
            self.set_grad(name, g)?;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(|p| p.value.is_finite())
    }

    /// One bias-corrected Adam update over every parameter, then clears the
    /// gradients. Fails before touching anything if a gradient is missing.
    pub fn adam_step(&mut self, lr: f64, cfg: AdamConfig) -> Result<()> {
        if let Some((name, _)) = self.params.iter().find(|(_, p)| p.grad.is_none()) {
            return Err(Error::MissingGradient(name.clone()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for p in self.params.values_mut() {
            let grad = p.grad.take().expect("checked above");
            let m = p.first_moment.data_mut();
            let v = p.second_moment.data_mut();
            for (((w, &g), m), v) in p.value.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(w: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(w));
        s
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        let mut s = scalar_store(1.0);
        s.set_grad("w", Tensor::scalar(1.0)).unwrap();
        s.adam_step(0.1, AdamConfig::default()).unwrap();
        // m̂ = 1, v̂ = 1, so the step is lr / (1 + eps)
        let w = s.value("w").unwrap().data()[0];
        assert!((w - 0.9).abs() < 1e-7, "{w}");
        assert_eq!(s.step(), 1);
        assert!(s.get("w").unwrap().grad.is_none());
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut s = scalar_store(0.3);
        s.set_grad("w", Tensor::scalar(0.0)).unwrap();
        s.adam_step(0.1, AdamConfig::default()).unwrap();
        assert_eq!(s.value("w").unwrap().data()[0], 0.3);
    }

    #[test]
    fn repeated_gradient_decreases_monotonically() {
        let mut s = scalar_store(1.0);
        let mut prev = 1.0;
        for _ in 0..2 {
            s.set_grad("w", Tensor::scalar(1.0)).unwrap();
            s.adam_step(0.1, AdamConfig::default()).unwrap();
            let w = s.value("w").unwrap().data()[0];
            assert!(w < prev);
            prev = w;
        }
        assert!((prev - 0.8).abs() < 1e-6);
    }

    #[test]
    fn zero_lr_is_bit_identical() {
        let mut rng = seed_rng(4);
        let mut s = ParamStore::new();
        s.insert("a", init_uniform(&[3, 2], 0.5, &mut rng).unwrap());
        let before = s.value("a").unwrap().clone();
        s.set_grad("a", init_uniform(&[3, 2], 1.0, &mut rng).unwrap()).unwrap();
        s.adam_step(0.0, AdamConfig::default()).unwrap();
        assert_eq!(s.value("a").unwrap().data(), before.data());
    }

    #[test]
    fn missing_gradient_names_parameter() {
        let mut s = scalar_store(1.0);
        s.insert("other", Tensor::scalar(2.0));
        s.set_grad("w", Tensor::scalar(1.0)).unwrap();
        let err = s.adam_step(0.1, AdamConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MissingGradient(ref n) if n == "other"));
        assert_eq!(s.value("w").unwrap().data()[0], 1.0);
        assert_eq!(s.step(), 0);
    }

    #[test]
    fn seeded_init_is_reproducible_and_bounded() {
        let a = init_uniform(&[4, 5], 0.1, &mut seed_rng(7)).unwrap();
        let b = init_uniform(&[4, 5], 0.1, &mut seed_rng(7)).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(a.data().iter().all(|v| v.abs() <= 0.1));
        let c = init_uniform(&[4, 5], 0.1, &mut seed_rng(1)).unwrap();
        let d = init_uniform(&[4, 5], 0.1, &mut seed_rng(2)).unwrap();
        assert!(c.data().iter().zip(d.data()).any(|(x, y)| x != y));
    }

    #[test]
    fn init_rejects_nonpositive_scale() {
        assert!(init_uniform(&[2], 0.0, &mut seed_rng(0)).is_err());
    }
}
