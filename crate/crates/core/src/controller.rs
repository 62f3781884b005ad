//! Elman-style recurrent controller.
//!
//! Fixed topology: a hidden layer of 10 tanh units fed by the sensory
//! inputs plus 10 context units (the previous step's hidden activations),
//! and 5 sigmoid outputs decoded as pitch, yaw, two signal intensities and
//! one binary task action. All weights live in one flat genotype vector,
//! the unit of inheritance and mutation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

pub const HIDDEN: usize = 10;
pub const CONTEXT: usize = HIDDEN;
pub const OUTPUTS: usize = 5;
/// Inputs for the signal-only tasks: 6 directions x 2 channels.
pub const SIGNAL_INPUTS: usize = 12;
/// Inputs when the 6 noisy food-vision channels are appended.
pub const VISION_INPUTS: usize = SIGNAL_INPUTS + 6;

/// Network dimensions; only the input width varies between tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkShape {
    pub inputs: usize,
}

impl NetworkShape {
    pub const fn signal_only() -> Self {
        NetworkShape { inputs: SIGNAL_INPUTS }
    }

    pub const fn with_vision() -> Self {
        NetworkShape { inputs: VISION_INPUTS }
    }

    /// Total weight count: `(inputs + context + 1) * hidden + (hidden + 1) * outputs`.
    pub const fn weight_count(&self) -> usize {
        (self.inputs + CONTEXT + 1) * HIDDEN + (HIDDEN + 1) * OUTPUTS
    }

    // Genotype layout offsets: input->hidden, context->hidden, hidden bias,
    // hidden->output, output bias.
    fn off_ctx(&self) -> usize {
        self.inputs * HIDDEN
    }
    fn off_bh(&self) -> usize {
        self.off_ctx() + CONTEXT * HIDDEN
    }
    fn off_out(&self) -> usize {
        self.off_bh() + HIDDEN
    }
    fn off_bo(&self) -> usize {
        self.off_out() + HIDDEN * OUTPUTS
    }
}

/// Flat weight vector; length is fixed by the network shape for the whole run.
#[derive(Clone, Debug, PartialEq)]
pub struct Genotype {
    pub weights: Vec<f64>,
}

impl Genotype {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// FNV-1a over the little-endian weight bytes; used in lineage records.
pub fn genotype_hash(genotype: &Genotype) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in &genotype.weights {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Recurrent state carried between steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControllerState {
    /// Previous step's hidden activations, fed back into the hidden layer.
    pub context: [f64; CONTEXT],
    pub hidden: [f64; HIDDEN],
    pub outputs: [f64; OUTPUTS],
}

impl ControllerState {
    /// Newborn state: all activations zero (children do not inherit
    /// parental activations, only the genotype).
    pub fn zeroed() -> Self {
        ControllerState {
            context: [0.0; CONTEXT],
            hidden: [0.0; HIDDEN],
            outputs: [0.0; OUTPUTS],
        }
    }
}

/// Decoded motor outputs for one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotorCommand {
    /// Pitch angle in `[0, pi]`.
    pub psi: f64,
    /// Yaw angle in `[0, pi]`.
    pub theta: f64,
    /// Emission intensities on the two signal channels, each in `[0, 1]`.
    pub signal_out: [f64; 2],
    /// Task action (Prisoner's Dilemma cooperate = true); ignored by
    /// the foraging tasks.
    pub action_bit: bool,
}

#[derive(Debug, thiserror::Error)]
#[error("non-finite {0} in controller forward pass")]
pub struct ForwardError(pub &'static str);

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One synchronous pass through the network.
///
/// Pure in `(genotype, state, inputs)`: the new state's context equals the
/// hidden activations just computed.
pub fn forward(
    shape: NetworkShape,
    genotype: &Genotype,
    state: &ControllerState,
    inputs: &[f64],
) -> Result<(MotorCommand, ControllerState), ForwardError> {
    debug_assert_eq!(genotype.len(), shape.weight_count());
    debug_assert_eq!(inputs.len(), shape.inputs);
    if !inputs.iter().all(|x| x.is_finite()) {
        return Err(ForwardError("input"));
    }

    let w = &genotype.weights;
    let mut hidden = [0.0; HIDDEN];
    for (h, slot) in hidden.iter_mut().enumerate() {
        let mut acc = w[shape.off_bh() + h];
        let win = &w[h * shape.inputs..(h + 1) * shape.inputs];
        for (wi, xi) in win.iter().zip(inputs) {
            acc += wi * xi;
        }
        let wctx = &w[shape.off_ctx() + h * CONTEXT..shape.off_ctx() + (h + 1) * CONTEXT];
        for (wc, xc) in wctx.iter().zip(&state.context) {
            acc += wc * xc;
        }
        *slot = acc.tanh();
    }

    let mut outputs = [0.0; OUTPUTS];
    for (o, slot) in outputs.iter_mut().enumerate() {
        let mut acc = w[shape.off_bo() + o];
        let wout = &w[shape.off_out() + o * HIDDEN..shape.off_out() + (o + 1) * HIDDEN];
        for (wo, xh) in wout.iter().zip(&hidden) {
            acc += wo * xh;
        }
        *slot = sigmoid(acc);
    }
    if !outputs.iter().all(|x| x.is_finite()) {
        return Err(ForwardError("output"));
    }

    let command = MotorCommand {
        psi: PI * outputs[0],
        theta: PI * outputs[1],
        signal_out: [outputs[2], outputs[3]],
        action_bit: outputs[4] > 0.5,
    };
    let new_state = ControllerState { context: hidden, hidden, outputs };
    Ok((command, new_state))
}

/// Mutation settings; all config-exposed.
#[derive(Clone, Copy, Debug)]
pub struct MutationParams {
    /// Per-weight probability of perturbation.
    pub rate: f64,
    /// Standard deviation of the Gaussian perturbation.
    pub sigma: f64,
    /// Weights are clamped into `[-clamp, clamp]` after mutation.
    pub clamp: f64,
}

impl Default for MutationParams {
    fn default() -> Self {
        MutationParams { rate: 0.1, sigma: 0.2, clamp: 8.0 }
    }
}

/// Gaussian point mutation; the parent is left untouched.
pub fn mutate(parent: &Genotype, params: &MutationParams, rng: &mut ChaCha8Rng) -> Genotype {
    let normal = Normal::new(0.0, params.sigma).expect("sigma >= 0");
    let weights = parent
        .weights
        .iter()
        .map(|&w| {
            if rng.random::<f64>() < params.rate {
                (w + normal.sample(rng)).clamp(-params.clamp, params.clamp)
            } else {
                w
            }
        })
        .collect();
    Genotype { weights }
}

/// Fresh genotype with weights i.i.d. uniform on `[-1, 1]`.
pub fn random_genotype(shape: NetworkShape, rng: &mut ChaCha8Rng) -> Genotype {
    let weights = (0..shape.weight_count())
        .map(|_| rng.random::<f64>() * 2.0 - 1.0)
        .collect();
    Genotype { weights }
}
