use rand::Rng;

use super::{Tensor, TensorError};

/// Index of a parameter tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors, in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn total_elements(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Rebuilds a set from `(name, tensor)` pairs, e.g. when loading a snapshot.
    pub fn from_named(named: Vec<(String, Tensor)>) -> Self {
        let (names, tensors) = named.into_iter().unzip();
        ParamSet { names, tensors }
    }

    /// Overwrites values from `other`, requiring identical names and shapes.
    pub fn copy_from(&mut self, other: &ParamSet) -> Result<(), TensorError> {
        self.check_layout(other)?;
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    pub fn check_layout(&self, other: &ParamSet) -> Result<(), TensorError> {
        if self.names != other.names {
            let reason = match self.names.iter().zip(&other.names).find(|(a, b)| a != b) {
                Some((a, b)) => format!("expected parameter `{a}`, found `{b}`"),
                None => format!(
                    "expected {} parameters, found {}",
                    self.names.len(),
                    other.names.len()
                ),
            };
            return Err(TensorError::Invalid {
                op: "ParamSet::check_layout",
                reason,
            });
        }
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            if a.shape() != b.shape() {
                return Err(TensorError::shape("ParamSet::check_layout", a.shape(), b.shape()));
            }
        }
        Ok(())
    }
}

/// Registers parameters and draws their initial values.
///
/// Weights are uniform in `±1/sqrt(fan_in)`; biases start at zero.
pub struct ParamSetBuilder<'r, R: Rng> {
    rng: &'r mut R,
    set: ParamSet,
}

impl<'r, R: Rng> ParamSetBuilder<'r, R> {
    pub fn new(rng: &'r mut R) -> Self {
        ParamSetBuilder {
            rng,
            set: ParamSet {
                names: Vec::new(),
                tensors: Vec::new(),
            },
        }
    }

    fn push(&mut self, name: &str, tensor: Tensor) -> ParamId {
        assert!(
            self.set.id(name).is_none(),
            "duplicate parameter name `{name}`"
        );
        self.set.names.push(name.to_string());
        self.set.tensors.push(tensor);
        ParamId(self.set.tensors.len() - 1)
    }

    pub fn uniform_fan_in(&mut self, name: &str, shape: &[usize], fan_in: usize) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-bound..bound)).collect();
        self.push(name, Tensor { shape: shape.to_vec(), data })
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.push(name, Tensor::zeros(shape))
    }

    pub fn tensor(&mut self, name: &str, tensor: Tensor) -> ParamId {
        self.push(name, tensor)
    }

    pub fn finish(self) -> ParamSet {
        self.set
    }
}

/// Per-parameter gradient accumulators aligned with a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Gradients {
            tensors: params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub(crate) fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn reset(&mut self) {
        for t in &mut self.tensors {
            t.data_mut().fill(0.0);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::squared_norm).sum::<f64>().sqrt()
    }

    /// Rescales all gradients so their joint L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for t in &mut self.tensors {
                t.data_mut().iter_mut().for_each(|g| *g *= scale);
            }
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Parameters plus the Adam moment estimates shared by every learner.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    params: ParamSet,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
    step: u64,
    adam: AdamConfig,
}

impl ParamStore {
    pub fn new(params: ParamSet) -> Self {
        let zeros = || params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect();
        ParamStore {
            first_moment: zeros(),
            second_moment: zeros(),
            params,
            step: 0,
            adam: AdamConfig::default(),
        }
    }

    pub fn with_adam(mut self, adam: AdamConfig) -> Self {
        self.adam = adam;
        self
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    /// Number of optimizer updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, id: ParamId) -> &Tensor {
        &self.first_moment[id.0]
    }

    pub fn second_moment(&self, id: ParamId) -> &Tensor {
        &self.second_moment[id.0]
    }

    /// One Adam update with bias correction from the shared step counter.
    pub fn adam_apply(&mut self, grads: &Gradients, lr: f64) -> Result<(), TensorError> {
        if grads.tensors.len() != self.params.tensors.len() {
            return Err(TensorError::Invalid {
                op: "adam_apply",
                reason: format!(
                    "{} gradient tensors for {} parameters",
                    grads.tensors.len(),
                    self.params.tensors.len()
                ),
            });
        }
        for (g, p) in grads.tensors.iter().zip(&self.params.tensors) {
            if g.shape() != p.shape() {
                return Err(TensorError::shape("adam_apply", p.shape(), g.shape()));
            }
        }

        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.adam;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        for (((p, g), m), v) in self
            .params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
