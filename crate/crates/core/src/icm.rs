//! Intrinsic curiosity: a laser-scan encoder φ, an inverse model that
//! recovers the action from (φ_t, φ_t+1), and a forward model that predicts
//! φ_t+1 from (φ_t, a_t). The forward-model error is the intrinsic reward.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Action, BEAM_COUNT};
use crate::tensor::{ParamId, ParamSetBuilder, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcmConfig {
    /// Encoder layers; the last width is the feature size.
    pub encoder_fc: Vec<usize>,
    /// Hidden layer of the inverse model over the concatenated features.
    pub inverse_hidden: usize,
    /// Hidden layers of the forward model.
    pub forward_fc: Vec<usize>,
    /// Weight of the forward loss against the inverse loss.
    pub lambda_f: f64,
}

impl Default for IcmConfig {
    fn default() -> Self {
        IcmConfig {
            encoder_fc: vec![128, 64, 16],
            inverse_hidden: 32,
            forward_fc: vec![64, 32],
            lambda_f: 0.2,
        }
    }
}

impl IcmConfig {
    pub fn feature_dims(&self) -> usize {
        self.encoder_fc.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.encoder_fc.is_empty() || self.encoder_fc.contains(&0) {
            return Err("encoder_fc must be non-empty with positive widths".into());
        }
        if self.inverse_hidden == 0 || self.forward_fc.contains(&0) {
            return Err("ICM hidden widths must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.lambda_f) {
            return Err(format!("lambda_f must be in [0, 1], got {}", self.lambda_f));
        }
        Ok(())
    }
}

/// Plain-value record of one transition through the module.
#[derive(Debug, Clone, PartialEq)]
pub struct IcmStepRecord {
    pub phi_t: Vec<f64>,
    pub phi_t1: Vec<f64>,
    pub phi_t1_hat: Vec<f64>,
    pub action_probs: [f64; 3],
    pub intrinsic_reward: f64,
}

/// Graph handles for one transition.
#[derive(Debug, Clone, Copy)]
pub struct IcmTransition {
    pub phi_t: Var,
    pub phi_t1: Var,
    pub phi_t1_hat: Var,
    pub action_probs: Var,
    /// `½‖φ̂_t+1 − φ_t+1‖²`; its value is the intrinsic reward.
    pub forward_error: Var,
}

impl IcmTransition {
    pub fn record(&self, tape: &Tape<'_>) -> IcmStepRecord {
        let p = tape.value(self.action_probs).data();
        IcmStepRecord {
            phi_t: tape.value(self.phi_t).data().to_vec(),
            phi_t1: tape.value(self.phi_t1).data().to_vec(),
            phi_t1_hat: tape.value(self.phi_t1_hat).data().to_vec(),
            action_probs: [p[0], p[1], p[2]],
            intrinsic_reward: tape.value(self.forward_error).item(),
        }
    }

    /// The intrinsic reward as a detached scalar.
    pub fn intrinsic_reward(&self, tape: &Tape<'_>) -> f64 {
        tape.value(self.forward_error).item()
    }
}

#[derive(Debug, Clone)]
pub struct Icm {
    config: IcmConfig,
    encoder: Vec<(ParamId, ParamId)>,
    inverse_hidden: (ParamId, ParamId),
    inverse_out: (ParamId, ParamId),
    forward_hidden: Vec<(ParamId, ParamId)>,
    forward_out: (ParamId, ParamId),
}

fn dense<R: Rng>(
    b: &mut ParamSetBuilder<'_, R>,
    name: &str,
    inputs: usize,
    units: usize,
) -> (ParamId, ParamId) {
    (
        b.uniform_fan_in(&format!("{name}.weight"), &[units, inputs], inputs),
        b.zeros(&format!("{name}.bias"), &[units]),
    )
}

impl Icm {
    pub fn register<R: Rng>(
        config: &IcmConfig,
        prefix: &str,
        b: &mut ParamSetBuilder<'_, R>,
    ) -> Result<Self, TensorError> {
        config.validate().map_err(|reason| TensorError::Invalid {
            op: "Icm::register",
            reason,
        })?;
        let mut width = BEAM_COUNT;
        let mut encoder = Vec::new();
        for (i, &units) in config.encoder_fc.iter().enumerate() {
            encoder.push(dense(b, &format!("{prefix}.encoder{i}"), width, units));
            width = units;
        }
        let features = width;
        let inverse_hidden = dense(b, &format!("{prefix}.inverse.hidden"), 2 * features, config.inverse_hidden);
        let inverse_out = dense(b, &format!("{prefix}.inverse.out"), config.inverse_hidden, Action::COUNT);
        let mut forward_hidden = Vec::new();
        let mut width = features + Action::COUNT;
        for (i, &units) in config.forward_fc.iter().enumerate() {
            forward_hidden.push(dense(b, &format!("{prefix}.forward{i}"), width, units));
            width = units;
        }
        let forward_out = dense(b, &format!("{prefix}.forward.out"), width, features);
        Ok(Icm {
            config: config.clone(),
            encoder,
            inverse_hidden,
            inverse_out,
            forward_hidden,
            forward_out,
        })
    }

    pub fn config(&self) -> &IcmConfig {
        &self.config
    }

    pub fn inverse_output_layer(&self) -> (ParamId, ParamId) {
        self.inverse_out
    }

    fn layer(tape: &mut Tape<'_>, x: Var, (w, b): (ParamId, ParamId)) -> Result<Var, TensorError> {
        let (w, b) = (tape.param(w), tape.param(b));
        tape.linear(x, w, b)
    }

    /// φ: dense layers with ELU over a normalized 72-beam scan.
    pub fn encode(&self, tape: &mut Tape<'_>, scan: Var) -> Result<Var, TensorError> {
        if tape.value(scan).numel() != BEAM_COUNT {
            return Err(TensorError::shape("Icm::encode", &[BEAM_COUNT], tape.value(scan).shape()));
        }
        let mut x = scan;
        for &layer in &self.encoder {
            let y = Self::layer(tape, x, layer)?;
            x = tape.elu(y);
        }
        Ok(x)
    }

    /// Action distribution inferred from consecutive features.
    pub fn inverse_predict(&self, tape: &mut Tape<'_>, phi_t: Var, phi_t1: Var) -> Result<Var, TensorError> {
        self.check_features("Icm::inverse_predict", tape, &[phi_t, phi_t1])?;
        let joint = tape.concat(&[phi_t, phi_t1]);
        let h = Self::layer(tape, joint, self.inverse_hidden)?;
        let h = tape.elu(h);
        let logits = Self::layer(tape, h, self.inverse_out)?;
        tape.softmax(logits)
    }

    /// Predicted next features from current features and a one-hot action.
    pub fn forward_predict(&self, tape: &mut Tape<'_>, phi_t: Var, action: Var) -> Result<Var, TensorError> {
        self.check_features("Icm::forward_predict", tape, &[phi_t])?;
        if tape.value(action).numel() != Action::COUNT {
            return Err(TensorError::shape(
                "Icm::forward_predict",
                &[Action::COUNT],
                tape.value(action).shape(),
            ));
        }
        let mut x = tape.concat(&[phi_t, action]);
        for &layer in &self.forward_hidden {
            let y = Self::layer(tape, x, layer)?;
            x = tape.elu(y);
        }
        Self::layer(tape, x, self.forward_out)
    }

    fn check_features(&self, op: &'static str, tape: &Tape<'_>, vars: &[Var]) -> Result<(), TensorError> {
        let dims = self.config.feature_dims();
        for &v in vars {
            if tape.value(v).numel() != dims {
                return Err(TensorError::shape(op, &[dims], tape.value(v).shape()));
            }
        }
        Ok(())
    }

    /// Runs both models on already-encoded features.
    pub fn transition(
        &self,
        tape: &mut Tape<'_>,
        phi_t: Var,
        phi_t1: Var,
        action: Action,
    ) -> Result<IcmTransition, TensorError> {
        let one_hot = tape.input(Tensor::vector(action.one_hot().to_vec()));
        let action_probs = self.inverse_predict(tape, phi_t, phi_t1)?;
        let phi_t1_hat = self.forward_predict(tape, phi_t, one_hot)?;
        let forward_error = tape.mse_half(phi_t1_hat, phi_t1)?;
        Ok(IcmTransition {
            phi_t,
            phi_t1,
            phi_t1_hat,
            action_probs,
            forward_error,
        })
    }

    /// Encodes both scans and runs [`Self::transition`].
    pub fn observe(
        &self,
        tape: &mut Tape<'_>,
        scan_t: &[f64],
        scan_t1: &[f64],
        action: Action,
    ) -> Result<IcmTransition, TensorError> {
        let s0 = tape.input(Tensor::vector(scan_t.to_vec()));
        let s1 = tape.input(Tensor::vector(scan_t1.to_vec()));
        let phi_t = self.encode(tape, s0)?;
        let phi_t1 = self.encode(tape, s1)?;
        self.transition(tape, phi_t, phi_t1, action)
    }
}

/// `½‖φ̂_t+1 − φ_t+1‖²`.
pub fn intrinsic_reward(phi_t1_hat: &[f64], phi_t1: &[f64]) -> f64 {
    crate::tensor::mse_half(phi_t1_hat, phi_t1)
}

/// `(1 − λ_f)·CE(â, a) + λ_f·½‖φ̂_t+1 − φ_t+1‖²` on the tape.
pub fn icm_loss(
    tape: &mut Tape<'_>,
    transition: &IcmTransition,
    true_action: Action,
    lambda_f: f64,
) -> Result<Var, TensorError> {
    let ce = tape.cross_entropy(transition.action_probs, &true_action.one_hot())?;
    let inverse = tape.scale(ce, 1.0 - lambda_f);
    let forward = tape.scale(transition.forward_error, lambda_f);
    tape.sum(&[inverse, forward])
}

/// Plain-value form of [`icm_loss`].
pub fn icm_loss_value(record: &IcmStepRecord, true_action: Action, lambda_f: f64) -> f64 {
    let ce = crate::tensor::cross_entropy(&record.action_probs, &true_action.one_hot());
    (1.0 - lambda_f) * ce + lambda_f * intrinsic_reward(&record.phi_t1_hat, &record.phi_t1)
}
