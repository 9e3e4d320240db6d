//! Actor-critic network: a convolutional laser encoder, goal concatenation,
//! an LSTM (or dense) core, and policy/value heads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Action, Observation, BEAM_COUNT};
use crate::tensor::{lstm_cell, ParamId, ParamSet, ParamSetBuilder, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub use_lstm: bool,
    pub laser_dims: usize,
    pub goal_dims: usize,
    pub conv: Vec<ConvSpec>,
    pub fc: Vec<usize>,
    pub lstm_cells: usize,
    pub action_count: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            use_lstm: true,
            laser_dims: BEAM_COUNT,
            goal_dims: 3,
            conv: vec![
                ConvSpec {
                    filters: 8,
                    kernel: 5,
                    stride: 2,
                },
                ConvSpec {
                    filters: 8,
                    kernel: 3,
                    stride: 2,
                },
            ],
            fc: vec![64, 16],
            lstm_cells: 16,
            action_count: Action::COUNT,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.laser_dims != BEAM_COUNT {
            return Err(format!("laser_dims must be {BEAM_COUNT}, got {}", self.laser_dims));
        }
        if self.goal_dims != 3 {
            return Err(format!("goal_dims must be 3, got {}", self.goal_dims));
        }
        if self.action_count != Action::COUNT {
            return Err(format!("action_count must be 3, got {}", self.action_count));
        }
        if self.fc.is_empty() || self.fc.contains(&0) || self.lstm_cells == 0 {
            return Err("fc layers and lstm_cells must be non-empty and positive".into());
        }
        let mut len = self.laser_dims;
        for (i, c) in self.conv.iter().enumerate() {
            if c.filters == 0 || c.stride == 0 || c.kernel == 0 || c.kernel > len {
                return Err(format!("conv layer {i} ({c:?}) does not fit input length {len}"));
            }
            len = conv_out_len(len, c.kernel, c.stride);
        }
        Ok(())
    }

    /// Lengths through the laser trunk: input, each conv output, flattened
    /// width, then each dense layer.
    pub fn trunk_widths(&self) -> Vec<usize> {
        let mut widths = vec![self.laser_dims];
        let (mut channels, mut len) = (1, self.laser_dims);
        for c in &self.conv {
            len = conv_out_len(len, c.kernel, c.stride);
            channels = c.filters;
            widths.push(len);
        }
        widths.push(channels * len);
        widths.extend(&self.fc);
        widths
    }

    fn embed_dims(&self) -> usize {
        *self.fc.last().expect("validated: fc non-empty")
    }
}

pub fn conv_out_len(len: usize, kernel: usize, stride: usize) -> usize {
    (len - kernel) / stride + 1
}

/// Network-ready observation: ranges scaled to `[0, 1]`, goal distance scaled
/// by the reference-map diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct NetInput {
    pub laser: Vec<f64>,
    pub goal: [f64; 3],
}

impl NetInput {
    pub fn from_observation(obs: &Observation) -> Self {
        NetInput {
            laser: obs.scan.normalized(),
            goal: obs.goal.normalized(),
        }
    }
}

/// LSTM hidden and cell vectors carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(cells: usize) -> Self {
        RecurrentState {
            h: vec![0.0; cells],
            c: vec![0.0; cells],
        }
    }
}

/// Plain-value network output.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCriticOutput {
    pub policy: [f64; 3],
    pub value: f64,
    pub recurrent_state: Option<RecurrentState>,
}

/// Graph handles of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub policy: Var,
    pub value: Var,
    pub state: Option<(Var, Var)>,
    /// Laser trunk activations: each conv output, the flattened vector, each
    /// dense output.
    pub trunk: Vec<Var>,
}

#[derive(Debug, Clone)]
enum Core {
    Lstm { w: ParamId, b: ParamId },
    Dense { w: ParamId, b: ParamId },
}

#[derive(Debug, Clone)]
pub struct ActorCritic {
    config: NetworkConfig,
    conv: Vec<(ParamId, ParamId, usize)>,
    fc: Vec<(ParamId, ParamId)>,
    core: Core,
    policy_head: (ParamId, ParamId),
    value_head: (ParamId, ParamId),
}

impl ActorCritic {
    pub fn register<R: Rng>(
        config: &NetworkConfig,
        prefix: &str,
        b: &mut ParamSetBuilder<'_, R>,
    ) -> Result<Self, TensorError> {
        config.validate().map_err(|reason| TensorError::Invalid {
            op: "ActorCritic::register",
            reason,
        })?;
        let mut conv = Vec::new();
        let mut in_ch = 1;
        for (i, c) in config.conv.iter().enumerate() {
            let k = b.uniform_fan_in(
                &format!("{prefix}.conv{i}.kernel"),
                &[c.filters, in_ch, c.kernel],
                in_ch * c.kernel,
            );
            let bias = b.zeros(&format!("{prefix}.conv{i}.bias"), &[c.filters]);
            conv.push((k, bias, c.stride));
            in_ch = c.filters;
        }
        let widths = config.trunk_widths();
        let mut width = widths[config.conv.len() + 1];
        let mut fc = Vec::new();
        for (i, &units) in config.fc.iter().enumerate() {
            let w = b.uniform_fan_in(&format!("{prefix}.fc{i}.weight"), &[units, width], width);
            let bias = b.zeros(&format!("{prefix}.fc{i}.bias"), &[units]);
            fc.push((w, bias));
            width = units;
        }
        let cells = config.lstm_cells;
        let core_in = config.embed_dims() + config.goal_dims;
        let core = if config.use_lstm {
            let w = b.uniform_fan_in(
                &format!("{prefix}.lstm.weight"),
                &[4 * cells, core_in + cells],
                core_in + cells,
            );
            let mut bias = vec![0.0; 4 * cells];
            // Forget gate starts open.
            bias[cells..2 * cells].fill(1.0);
            let bias = b.tensor(&format!("{prefix}.lstm.bias"), Tensor::vector(bias));
            Core::Lstm { w, b: bias }
        } else {
            let w = b.uniform_fan_in(&format!("{prefix}.core.weight"), &[cells, core_in], core_in);
            let bias = b.zeros(&format!("{prefix}.core.bias"), &[cells]);
            Core::Dense { w, b: bias }
        };
        let head_in = cells + config.goal_dims;
        let policy_head = (
            b.uniform_fan_in(
                &format!("{prefix}.policy.weight"),
                &[config.action_count, head_in],
                head_in,
            ),
            b.zeros(&format!("{prefix}.policy.bias"), &[config.action_count]),
        );
        let value_head = (
            b.uniform_fan_in(&format!("{prefix}.value.weight"), &[1, head_in], head_in),
            b.zeros(&format!("{prefix}.value.bias"), &[1]),
        );
        Ok(ActorCritic {
            config: config.clone(),
            conv,
            fc,
            core,
            policy_head,
            value_head,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn uses_lstm(&self) -> bool {
        matches!(self.core, Core::Lstm { .. })
    }

    pub fn initial_state(&self) -> Option<RecurrentState> {
        self.uses_lstm()
            .then(|| RecurrentState::zeros(self.config.lstm_cells))
    }

    pub fn policy_head(&self) -> (ParamId, ParamId) {
        self.policy_head
    }

    pub fn value_head(&self) -> (ParamId, ParamId) {
        self.value_head
    }

    /// Records one forward pass. `state` is required iff the network has an
    /// LSTM core and ignored otherwise.
    pub fn forward(
        &self,
        tape: &mut Tape<'_>,
        laser: Var,
        goal: Var,
        state: Option<(Var, Var)>,
    ) -> Result<ForwardVars, TensorError> {
        if tape.value(laser).numel() != self.config.laser_dims {
            return Err(TensorError::shape(
                "ActorCritic::forward",
                &[self.config.laser_dims],
                tape.value(laser).shape(),
            ));
        }
        if tape.value(goal).numel() != self.config.goal_dims {
            return Err(TensorError::shape(
                "ActorCritic::forward",
                &[self.config.goal_dims],
                tape.value(goal).shape(),
            ));
        }
        let mut trunk = Vec::with_capacity(self.conv.len() + self.fc.len() + 1);
        let mut x = tape.reshape(laser, &[1, self.config.laser_dims])?;
        for &(k, b, stride) in &self.conv {
            let (k, b) = (tape.param(k), tape.param(b));
            let y = tape.conv1d(x, k, b, stride)?;
            x = tape.elu(y);
            trunk.push(x);
        }
        x = tape.flatten(x);
        trunk.push(x);
        for &(w, b) in &self.fc {
            let (w, b) = (tape.param(w), tape.param(b));
            let y = tape.linear(x, w, b)?;
            x = tape.elu(y);
            trunk.push(x);
        }

        let core_in = tape.concat(&[x, goal]);
        let (core_out, next_state) = match self.core {
            Core::Lstm { w, b } => {
                let (h, c) = state.ok_or_else(|| TensorError::Invalid {
                    op: "ActorCritic::forward",
                    reason: "LSTM network needs a recurrent state".into(),
                })?;
                let (w, b) = (tape.param(w), tape.param(b));
                let (h1, c1) = lstm_cell(tape, core_in, h, c, w, b)?;
                (h1, Some((h1, c1)))
            }
            Core::Dense { w, b } => {
                let (w, b) = (tape.param(w), tape.param(b));
                let y = tape.linear(core_in, w, b)?;
                (tape.elu(y), None)
            }
        };

        let head_in = tape.concat(&[core_out, goal]);
        let (pw, pb) = (tape.param(self.policy_head.0), tape.param(self.policy_head.1));
        let logits = tape.linear(head_in, pw, pb)?;
        let policy = tape.softmax(logits)?;
        let (vw, vb) = (tape.param(self.value_head.0), tape.param(self.value_head.1));
        let value = tape.linear(head_in, vw, vb)?;
        Ok(ForwardVars {
            policy,
            value,
            state: next_state,
            trunk,
        })
    }

    /// Places inputs and state on the tape and runs [`Self::forward`].
    pub fn forward_input(
        &self,
        tape: &mut Tape<'_>,
        input: &NetInput,
        state: Option<&RecurrentState>,
    ) -> Result<ForwardVars, TensorError> {
        let laser = tape.input(Tensor::vector(input.laser.clone()));
        let goal = tape.input(Tensor::vector(input.goal.to_vec()));
        let state = match (self.uses_lstm(), state) {
            (true, Some(s)) => Some((
                tape.input(Tensor::vector(s.h.clone())),
                tape.input(Tensor::vector(s.c.clone())),
            )),
            _ => None,
        };
        self.forward(tape, laser, goal, state)
    }

    /// Gradient-free evaluation on a scratch tape.
    pub fn infer(
        &self,
        params: &ParamSet,
        input: &NetInput,
        state: Option<&RecurrentState>,
    ) -> Result<ActorCriticOutput, TensorError> {
        let mut tape = Tape::new(params);
        let out = self.forward_input(&mut tape, input, state)?;
        Ok(read_output(&tape, &out))
    }
}

pub fn read_output(tape: &Tape<'_>, out: &ForwardVars) -> ActorCriticOutput {
    let p = tape.value(out.policy).data();
    ActorCriticOutput {
        policy: [p[0], p[1], p[2]],
        value: tape.value(out.value).item(),
        recurrent_state: out.state.map(|(h, c)| RecurrentState {
            h: tape.value(h).data().to_vec(),
            c: tape.value(c).data().to_vec(),
        }),
    }
}

/// Categorical draw from `policy`.
pub fn sample_action<R: Rng + ?Sized>(policy: &[f64; 3], rng: &mut R) -> Action {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in policy.iter().enumerate() {
        acc += p;
        if u < acc {
            return Action::ALL[i];
        }
    }
    // Rounding left `acc` a hair below 1: take the last action with mass.
    let last = policy.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    Action::ALL[last]
}

/// Argmax with ties going to the lowest index.
pub fn greedy_action(policy: &[f64; 3]) -> Action {
    let mut best = 0;
    for i in 1..policy.len() {
        if policy[i] > policy[best] {
            best = i;
        }
    }
    Action::ALL[best]
}

pub fn entropy(policy: &[f64]) -> f64 {
    crate::tensor::entropy(policy)
}
