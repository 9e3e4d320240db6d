//! Shared helpers for integration tests: central finite-difference checks.
#![allow(dead_code)]

pub mod checks;

use curionav::tensor::{Gradients, ParamSet, Tape, Tensor, TensorError, Var};
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Relative error with a small absolute floor so exact zeros compare sanely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub type LossFn<'f> = dyn Fn(&mut Tape<'_>, &[Var]) -> Result<Var, TensorError> + 'f;

fn eval(params: &ParamSet, inputs: &[Tensor], f: &LossFn<'_>) -> f64 {
    let mut tape = Tape::new(params);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let loss = f(&mut tape, &vars).expect("loss builds");
    tape.value(loss).item()
}

/// Which coordinates to probe: all of them, or a random sample per tensor.
#[derive(Clone, Copy)]
pub enum Coords {
    All,
    Sample(usize),
}

fn pick<R: Rng>(n: usize, coords: Coords, rng: &mut R) -> Vec<usize> {
    match coords {
        Coords::All => (0..n).collect(),
        Coords::Sample(k) if k >= n => (0..n).collect(),
        Coords::Sample(k) => (0..k).map(|_| rng.gen_range(0..n)).collect(),
    }
}

/// Maximum relative error between backward-pass gradients and central
/// differences, over parameters and inputs.
pub fn max_fd_error<R: Rng>(
    params: &ParamSet,
    inputs: &[Tensor],
    f: &LossFn<'_>,
    coords: Coords,
    rng: &mut R,
) -> f64 {
    let mut grads = Gradients::zeros_like(params);
    let (input_grads, _) = {
        let mut tape = Tape::new(params);
        let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
        let loss = f(&mut tape, &vars).expect("loss builds");
        let adj = tape.backward(loss, &mut grads).expect("backward");
        let ig: Vec<Vec<f64>> = vars
            .iter()
            .zip(inputs)
            .map(|(&v, t)| adj.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]))
            .collect();
        (ig, ())
    };

    let mut worst: f64 = 0.0;
    for id in params.ids() {
        let n = params.get(id).numel();
        for j in pick(n, coords, rng) {
            let mut plus = params.clone();
            plus.get_mut(id).data_mut()[j] += FD_STEP;
            let mut minus = params.clone();
            minus.get_mut(id).data_mut()[j] -= FD_STEP;
            let numeric = (eval(&plus, inputs, f) - eval(&minus, inputs, f)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads.get(id).data()[j], numeric));
        }
    }
    for (i, input) in inputs.iter().enumerate() {
        for j in pick(input.numel(), coords, rng) {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= FD_STEP;
            let numeric = (eval(params, &plus, f) - eval(params, &minus, f)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(input_grads[i][j], numeric));
        }
    }
    worst
}

pub fn random_tensor<R: Rng>(rng: &mut R, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

pub fn random_simplex<R: Rng>(rng: &mut R, n: usize) -> Tensor {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    Tensor::vector(raw.into_iter().map(|x| x / total).collect())
}

pub mod cases {
    use super::*;
    use curionav::agent::Agent;
    use curionav::geometry::Action;
    use curionav::icm::IcmConfig;
    use curionav::policy::{NetInput, NetworkConfig, RecurrentState};
    use curionav::tensor::lstm_cell;
    use curionav::trainer::{rollout_loss_with, FixedTargets, Rollout, RolloutStep, TrainerConfig};
    use curionav::geometry::TerminalKind;
    use rand_chacha::ChaCha8Rng;

    pub type Case = fn(&mut ChaCha8Rng) -> f64;

    fn empty() -> ParamSet {
        ParamSet::from_named(Vec::new())
    }

    /// Reduces a tensor to a scalar with a random quadratic read-out.
    fn readout(tape: &mut Tape<'_>, y: Var, rng: &mut ChaCha8Rng) -> Result<Var, TensorError> {
        let n = tape.value(y).numel();
        let target = tape.input(random_tensor(rng, &[n], 1.0));
        let flat = tape.flatten(y);
        tape.mse_half(flat, target)
    }

    fn run(rng: &mut ChaCha8Rng, inputs: Vec<Tensor>, f: impl Fn(&mut Tape<'_>, &[Var], &mut ChaCha8Rng) -> Result<Var, TensorError>) -> f64 {
        let seed: u64 = rng.gen();
        let loss = move |tape: &mut Tape<'_>, v: &[Var]| {
            let mut local = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            f(tape, v, &mut local)
        };
        max_fd_error(&empty(), &inputs, &loss, Coords::All, rng)
    }

    pub fn linear(rng: &mut ChaCha8Rng) -> f64 {
        let (m, n) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let inputs = vec![random_tensor(rng, &[n], 1.0), random_tensor(rng, &[m, n], 1.0), random_tensor(rng, &[m], 1.0)];
        run(rng, inputs, |t, v, r| {
            let y = t.linear(v[0], v[1], v[2])?;
            readout(t, y, r)
        })
    }

    /// Linear layer with weights held as parameters rather than inputs.
    pub fn linear_params(rng: &mut ChaCha8Rng) -> f64 {
        let (m, n) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let params = ParamSet::from_named(vec![
            ("w".into(), random_tensor(rng, &[m, n], 1.0)),
            ("b".into(), random_tensor(rng, &[m], 1.0)),
        ]);
        let (w, b) = (params.id("w").unwrap(), params.id("b").unwrap());
        let target = random_tensor(rng, &[m], 1.0);
        let inputs = vec![random_tensor(rng, &[n], 1.0)];
        let loss = move |tape: &mut Tape<'_>, v: &[Var]| {
            let (wv, bv) = (tape.param(w), tape.param(b));
            // Reusing the weights exercises gradient accumulation.
            let y = tape.linear(v[0], wv, bv)?;
            let y2 = tape.linear(v[0], wv, bv)?;
            let s = tape.sum(&[y, y2])?;
            let e = tape.elu(s);
            let tv = tape.input(target.clone());
            tape.mse_half(e, tv)
        };
        max_fd_error(&params, &inputs, &loss, Coords::All, rng)
    }

    pub fn conv1d(rng: &mut ChaCha8Rng) -> f64 {
        let (c, o, k, s) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..3));
        let len = k + rng.gen_range(0..6);
        let inputs = vec![random_tensor(rng, &[c, len], 1.0), random_tensor(rng, &[o, c, k], 1.0), random_tensor(rng, &[o], 1.0)];
        run(rng, inputs, move |t, v, r| {
            let y = t.conv1d(v[0], v[1], v[2], s)?;
            readout(t, y, r)
        })
    }

    fn unary(rng: &mut ChaCha8Rng, op: fn(&mut Tape<'_>, Var) -> Var) -> f64 {
        let n = rng.gen_range(1..8);
        // Keep clear of the ELU kink at zero, where one-sided slopes differ in curvature.
        let x: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = rng.gen_range(0.05..2.0);
                if rng.gen() { v } else { -v }
            })
            .collect();
        run(rng, vec![Tensor::vector(x)], move |t, v, r| {
            let y = op(t, v[0]);
            readout(t, y, r)
        })
    }

    pub fn elu(rng: &mut ChaCha8Rng) -> f64 {
        unary(rng, |t, x| t.elu(x))
    }

    pub fn sigmoid(rng: &mut ChaCha8Rng) -> f64 {
        unary(rng, |t, x| t.sigmoid(x))
    }

    pub fn tanh(rng: &mut ChaCha8Rng) -> f64 {
        unary(rng, |t, x| t.tanh(x))
    }

    pub fn scale(rng: &mut ChaCha8Rng) -> f64 {
        let factor = rng.gen_range(-3.0..3.0);
        let inputs = vec![random_tensor(rng, &[rng.clone().gen_range(1..6)], 1.0)];
        run(rng, inputs, move |t, v, r| {
            let y = t.scale(v[0], factor);
            readout(t, y, r)
        })
    }

    pub fn softmax(rng: &mut ChaCha8Rng) -> f64 {
        let n = rng.gen_range(2..6);
        let inputs = vec![random_tensor(rng, &[n], 2.0)];
        run(rng, inputs, |t, v, r| {
            let y = t.softmax(v[0])?;
            readout(t, y, r)
        })
    }

    pub fn concat_slice_reshape(rng: &mut ChaCha8Rng) -> f64 {
        let (a, b) = (rng.gen_range(1..5), rng.gen_range(1..5));
        let start = rng.gen_range(0..a + b);
        let len = rng.gen_range(1..=a + b - start);
        let inputs = vec![random_tensor(rng, &[a], 1.0), random_tensor(rng, &[b], 1.0)];
        run(rng, inputs, move |t, v, r| {
            let c = t.concat(&[v[0], v[1]]);
            let s = t.slice(c, start, len)?;
            let m = t.reshape(s, &[1, len])?;
            readout(t, m, r)
        })
    }

    pub fn add_mul_sum(rng: &mut ChaCha8Rng) -> f64 {
        let n = rng.gen_range(1..6);
        let inputs = vec![random_tensor(rng, &[n], 1.0), random_tensor(rng, &[n], 1.0), random_tensor(rng, &[n], 1.0)];
        run(rng, inputs, |t, v, r| {
            let a = t.add(v[0], v[1])?;
            let m = t.mul(a, v[2])?;
            let s = t.sum(&[m, v[0], m])?;
            readout(t, s, r)
        })
    }

    pub fn cross_entropy(rng: &mut ChaCha8Rng) -> f64 {
        let n = rng.gen_range(2..5);
        let target = Action::ALL[rng.gen_range(0..3)].one_hot();
        let mut soft = vec![0.0; n];
        soft[rng.gen_range(0..n)] = 1.0;
        if n == 3 {
            soft = target.to_vec();
        }
        let inputs = vec![random_simplex(rng, n)];
        run(rng, inputs, move |t, v, _| t.cross_entropy(v[0], &soft))
    }

    pub fn entropy(rng: &mut ChaCha8Rng) -> f64 {
        let n = rng.gen_range(2..5);
        let inputs = vec![random_simplex(rng, n)];
        run(rng, inputs, |t, v, _| Ok(t.entropy(v[0])))
    }

    pub fn mse_half(rng: &mut ChaCha8Rng) -> f64 {
        let n = rng.gen_range(1..8);
        let inputs = vec![random_tensor(rng, &[n], 1.0), random_tensor(rng, &[n], 1.0)];
        run(rng, inputs, |t, v, _| t.mse_half(v[0], v[1]))
    }

    pub fn lstm(rng: &mut ChaCha8Rng) -> f64 {
        let (inp, hid) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let inputs = vec![
            random_tensor(rng, &[inp], 1.0),
            random_tensor(rng, &[hid], 1.0),
            random_tensor(rng, &[hid], 1.0),
            random_tensor(rng, &[4 * hid, inp + hid], 1.0),
            random_tensor(rng, &[4 * hid], 1.0),
        ];
        run(rng, inputs, |t, v, r| {
            let (h, c) = lstm_cell(t, v[0], v[1], v[2], v[3], v[4])?;
            let both = t.concat(&[h, c]);
            readout(t, both, r)
        })
    }

    fn random_rollout(rng: &mut ChaCha8Rng, lstm: bool) -> Rollout {
        let len = rng.gen_range(1..5);
        let input = |rng: &mut ChaCha8Rng| NetInput {
            laser: (0..72).map(|_| rng.gen_range(0.02..1.0)).collect(),
            goal: [rng.gen_range(0.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        };
        let steps = (0..len)
            .map(|i| RolloutStep {
                input: input(rng),
                action: Action::ALL[rng.gen_range(0..3)],
                extrinsic: rng.gen_range(-1.0..1.0),
                intrinsic: 0.0,
                value: 0.0,
                policy: [1.0 / 3.0; 3],
                terminal: if i + 1 == len { TerminalKind::Collision } else { TerminalKind::Continuing },
            })
            .collect();
        Rollout {
            initial_state: lstm.then(|| RecurrentState {
                h: (0..16).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                c: (0..16).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            }),
            steps,
            next_input: input(rng),
            bootstrap_value: None,
        }
    }

    fn composed(rng: &mut ChaCha8Rng, lstm: bool, icm: bool) -> f64 {
        let network = NetworkConfig {
            use_lstm: lstm,
            ..NetworkConfig::default()
        };
        let icm_cfg = IcmConfig::default();
        let (agent, params) = Agent::build(&network, icm.then_some(&icm_cfg), rng.gen()).unwrap();
        let config = TrainerConfig {
            beta: if rng.gen() { 0.01 } else { 0.0 },
            ..TrainerConfig::default()
        };
        let rollout = random_rollout(rng, lstm);
        // Detached quantities from the unperturbed point.
        let targets = {
            let mut tape = Tape::new(&params);
            let (_, report) = rollout_loss_with(&mut tape, &agent, &mut rollout.clone(), None, 1.0, &config).unwrap();
            FixedTargets {
                returns: report.returns,
                advantages: report.advantages,
            }
        };
        let loss = move |tape: &mut Tape<'_>, _: &[Var]| {
            let mut r = rollout.clone();
            rollout_loss_with(tape, &agent, &mut r, Some(&targets), 1.0, &config).map(|(l, _)| l)
        };
        max_fd_error(&params, &[], &loss, Coords::Sample(6), rng)
    }

    pub fn actor_critic_lstm(rng: &mut ChaCha8Rng) -> f64 {
        composed(rng, true, false)
    }

    pub fn actor_critic_dense(rng: &mut ChaCha8Rng) -> f64 {
        composed(rng, false, false)
    }

    pub fn actor_critic_with_icm(rng: &mut ChaCha8Rng) -> f64 {
        composed(rng, true, true)
    }

    pub const ALL: &[(&str, Case)] = &[
        ("linear", linear),
        ("linear_params", linear_params),
        ("conv1d", conv1d),
        ("elu", elu),
        ("sigmoid", sigmoid),
        ("tanh", tanh),
        ("scale", scale),
        ("softmax", softmax),
        ("concat_slice_reshape", concat_slice_reshape),
        ("add_mul_sum", add_mul_sum),
        ("cross_entropy", cross_entropy),
        ("entropy", entropy),
        ("mse_half", mse_half),
        ("lstm_cell", lstm),
        ("actor_critic_lstm", actor_critic_lstm),
        ("actor_critic_dense", actor_critic_dense),
        ("actor_critic_icm", actor_critic_with_icm),
    ];
}
