//! Task environments layered on top of the shared engine: energy income
//! rules and any extra sensing each study variant adds.

use crate::signals::{sense_exact, Emitter, SenseParams, SignalFrame};
use crate::vec3::Vec3;
use crate::world::{toroidal_distance, Pose};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which environment a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Invisible energy sources; income only from sitting inside one.
    Foraging,
    /// Spatial N-player Prisoner's Dilemma; payoff feeds the energy ledger.
    Pd,
    /// Foraging plus six noisy food-vision inputs (wider network).
    NoisyForaging,
    /// Classic three-rule boids, no controllers and no evolution.
    Stateless,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Foraging => "foraging",
            TaskKind::Pd => "pd",
            TaskKind::NoisyForaging => "noisy_foraging",
            TaskKind::Stateless => "stateless",
        }
    }
}

/// A spherical energy source; agents inside collect `income_rate` per step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergySource {
    pub center: Vec3,
    pub radius: f64,
    pub income_rate: f64,
}

/// Income for one agent this step: sources pay additively when overlapping.
pub fn foraging_income(position: Vec3, sources: &[EnergySource], box_length: f64) -> f64 {
    sources
        .iter()
        .filter(|s| toroidal_distance(position, s.center, box_length) <= s.radius)
        .map(|s| s.income_rate)
        .sum()
}

/// Redraw every source center uniformly in the box; radii and rates stay.
pub fn relocate_sources(sources: &mut [EnergySource], rng: &mut ChaCha8Rng, box_length: f64) {
    for s in sources.iter_mut() {
        s.center = Vec3::new(
            rng.random::<f64>() * box_length,
            rng.random::<f64>() * box_length,
            rng.random::<f64>() * box_length,
        );
    }
}

/// Spatial Prisoner's Dilemma parameters. `benefit > cost > 0` keeps the
/// dilemma ordering (T > R > P > S for the induced 2-player matrix).
#[derive(Clone, Copy, Debug)]
pub struct PdParams {
    pub interaction_radius: f64,
    pub benefit: f64,
    pub cost: f64,
    /// Exponent of the distance taper `w(r) = (1 - r/R)^exponent`.
    pub distance_exponent: f64,
}

impl PdParams {
    pub fn weight(&self, r: f64) -> f64 {
        let base = (1.0 - r / self.interaction_radius).max(0.0);
        base.powf(self.distance_exponent)
    }
}

/// Payoff of one agent against its neighborhood this step.
///
/// Each neighbor is `(cooperates, distance)`. Cooperating neighbors pay the
/// focal agent `benefit * w(r)`; a cooperating focal agent pays
/// `cost * w(r)` toward every neighbor. A lone agent scores zero.
pub fn pd_round(cooperates: bool, neighbors: &[(bool, f64)], params: &PdParams) -> f64 {
    let mut payoff = 0.0;
    for &(coop, r) in neighbors {
        let w = params.weight(r);
        if coop {
            payoff += params.benefit * w;
        }
        if cooperates {
            payoff -= params.cost * w;
        }
    }
    payoff
}

/// Additive uniform noise on the food-vision channels.
#[derive(Clone, Copy, Debug)]
pub struct NoiseModel {
    pub amplitude: f64,
}

/// True directional food field: sources binned exactly like signals, on
/// channel 0, with intensity equal to the income rate.
pub fn food_field(
    pose: &Pose,
    sources: &[EnergySource],
    params: &SenseParams,
) -> [f64; 6] {
    let emitters: Vec<Emitter> = sources
        .iter()
        .map(|s| Emitter { position: s.center, intensity: [s.income_rate, 0.0] })
        .collect();
    let frame: SignalFrame = sense_exact(pose, &emitters, params);
    let mut out = [0.0; 6];
    for (d, v) in out.iter_mut().enumerate() {
        *v = frame.values[d][0];
    }
    out
}

/// The six noisy vision inputs of the large-scale foraging study: the true
/// directional food field plus `Uniform(-A, A)` per channel, clamped at 0.
pub fn noisy_food_sense(
    pose: &Pose,
    sources: &[EnergySource],
    noise: &NoiseModel,
    params: &SenseParams,
    rng: &mut ChaCha8Rng,
) -> [f64; 6] {
    let mut v = food_field(pose, sources, params);
    for x in v.iter_mut() {
        let u = rng.random::<f64>() * 2.0 - 1.0;
        *x = (*x + noise.amplitude * u).max(0.0);
    }
    v
}

/// Mean resource retrieved per agent at each logged step; `None` where the
/// population was empty.
pub fn efficiency_series(income: &[f64], population: &[u64]) -> Vec<Option<f64>> {
    income
        .iter()
        .zip(population)
        .map(|(&inc, &pop)| if pop == 0 { None } else { Some(inc / pop as f64) })
        .collect()
}
