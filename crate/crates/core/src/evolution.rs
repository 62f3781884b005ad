//! Continuous asynchronous evolution: the energy ledger, deaths, forced
//! reproduction, and lineage records.
//!
//! There are no generations. Energy doubles as fitness: agents that run out
//! are removed the same step, agents above the reproduction threshold spawn
//! exactly one mutated child per step, paying a fixed cost. Death and birth
//! resolution is single-threaded in ascending agent order so runs are
//! reproducible at any thread count.

use crate::controller::{
    genotype_hash, mutate, random_genotype, ControllerState, Genotype, MutationParams,
    NetworkShape,
};
use crate::rng::Stream;
use crate::vec3::Vec3;
use crate::world::{wrap, Pose};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

/// One simulated individual.
#[derive(Clone, Debug)]
pub struct Agent {
    pub id: u64,
    /// Parent id, `None` for founders. Kept on the agent so resumed runs
    /// can finish lineage rows for agents that outlive a snapshot.
    pub parent: Option<u64>,
    pub birth_step: u64,
    pub pose: Pose,
    pub energy: f64,
    pub genotype: Genotype,
    pub state: ControllerState,
    /// Intensities emitted this step; received by neighbors next step.
    pub signal_out: [f64; 2],
    /// Task action bit decided this step (PD cooperate = true).
    pub action: bool,
    pub alive: bool,
    /// Private random stream keyed by (run seed, id, birth step).
    pub stream: Stream,
    /// Neighbors within the signal radius, refreshed each step for logging.
    pub neighbor_count: u32,
    /// Income credited this step, kept for the per-agent log.
    pub last_income: f64,
    /// Motor angles that needed clamping into [0, pi], cumulative.
    pub clamp_events: u64,
}

/// Energy accounting knobs; none of them come from the model itself, all
/// are config-exposed.
#[derive(Clone, Copy, Debug)]
pub struct EnergyParams {
    pub initial: f64,
    pub reproduction_threshold: f64,
    pub reproduction_cost: f64,
    pub child_energy: f64,
    pub metabolic_cost: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            initial: 2.0,
            reproduction_threshold: 4.0,
            reproduction_cost: 2.0,
            child_energy: 2.0,
            metabolic_cost: 0.01,
        }
    }
}

/// Per-step energy flow aggregates. The conservation identity
/// `total_after - total_before = income - metabolic - signaling
/// - death_loss + repro_in - repro_out` must hold at every step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLedger {
    pub income: f64,
    pub metabolic: f64,
    pub signaling: f64,
    /// Energy paid by parents at reproduction.
    pub repro_out: f64,
    /// Energy granted to newborns.
    pub repro_in: f64,
    /// Energy removed with dying agents (non-positive values).
    pub death_loss: f64,
    pub births: u32,
    pub deaths: u32,
}

impl StepLedger {
    /// Deviation from the conservation identity; ~0 up to rounding.
    pub fn residual(&self, total_before: f64, total_after: f64) -> f64 {
        total_after - total_before
            - (self.income - self.metabolic - self.signaling - self.death_loss + self.repro_in
                - self.repro_out)
    }
}

/// One row of the phylogeny: ids are dense and never reused, so the record
/// table is indexed by id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineageRecord {
    pub id: u64,
    pub parent: Option<u64>,
    pub birth_step: u64,
    pub death_step: Option<u64>,
    pub genotype_hash: u64,
}

pub fn total_energy(agents: &[Agent]) -> f64 {
    agents.iter().filter(|a| a.alive).map(|a| a.energy).sum()
}

pub fn alive_count(agents: &[Agent]) -> usize {
    agents.iter().filter(|a| a.alive).count()
}

/// Remove every agent whose energy is zero or below. Returns removed ids;
/// records death steps and the energy carried away.
pub fn step_deaths(
    agents: &mut [Agent],
    step: u64,
    ledger: &mut StepLedger,
    lineage: &mut [LineageRecord],
) -> Vec<u64> {
    let mut removed = Vec::new();
    for agent in agents.iter_mut().filter(|a| a.alive) {
        if agent.energy <= 0.0 {
            agent.alive = false;
            ledger.death_loss += agent.energy;
            ledger.deaths += 1;
            lineage[agent.id as usize].death_step = Some(step);
            removed.push(agent.id);
        }
    }
    removed
}

/// Uniform draw from the unit ball, scaled by `radius`.
pub fn offset_in_ball(rng: &mut ChaCha8Rng, radius: f64) -> Vec3 {
    let dir: [f64; 3] = UnitSphere.sample(rng);
    let r = radius * rng.random::<f64>().cbrt();
    Vec3::new(dir[0], dir[1], dir[2]) * r
}

fn random_orientation(rng: &mut ChaCha8Rng) -> (Vec3, Vec3) {
    let h: [f64; 3] = UnitSphere.sample(rng);
    let u: [f64; 3] = UnitSphere.sample(rng);
    (Vec3::new(h[0], h[1], h[2]), Vec3::new(u[0], u[1], u[2]))
}

pub struct BirthParams<'a> {
    pub energy: EnergyParams,
    pub mutation: MutationParams,
    pub shape: NetworkShape,
    pub box_length: f64,
    pub population_cap: usize,
    pub run_seed: u64,
    pub lineage: &'a mut Vec<LineageRecord>,
}

/// Spawn one child for every agent above the reproduction threshold
/// (strict), in ascending agent order, deferring births beyond the
/// population cap to later steps.
///
/// Children are placed at the parent position plus a random offset of
/// magnitude at most 1, receive a mutated copy of the parent genotype and
/// zeroed activations, and draw from a fresh stream keyed by their own id.
pub fn step_births(
    agents: &mut Vec<Agent>,
    step: u64,
    next_id: &mut u64,
    ledger: &mut StepLedger,
    params: &mut BirthParams,
) -> u32 {
    let mut population = alive_count(agents);
    let mut born = 0;
    let parent_count = agents.len();
    for slot in 0..parent_count {
        if population >= params.population_cap {
            break;
        }
        if !agents[slot].alive || agents[slot].energy <= params.energy.reproduction_threshold {
            continue;
        }
        let child_id = *next_id;
        *next_id += 1;
        let parent = &mut agents[slot];
        parent.energy -= params.energy.reproduction_cost;
        ledger.repro_out += params.energy.reproduction_cost;
        let genotype = mutate(&parent.genotype, &params.mutation, parent.stream.rng());
        let offset = offset_in_ball(parent.stream.rng(), 1.0);
        let (heading, up) = random_orientation(parent.stream.rng());
        let position = wrap(parent.pose.position + offset, params.box_length);
        let parent_id = parent.id;
        let hash = genotype_hash(&genotype);
        let child = Agent {
            id: child_id,
            parent: Some(parent_id),
            birth_step: step,
            pose: Pose::new(position, heading, up),
            energy: params.energy.child_energy,
            genotype,
            state: ControllerState::zeroed(),
            signal_out: [0.0, 0.0],
            action: false,
            alive: true,
            stream: Stream::new(params.run_seed, child_id, step),
            neighbor_count: 0,
            last_income: 0.0,
            clamp_events: 0,
        };
        ledger.repro_in += params.energy.child_energy;
        ledger.births += 1;
        params.lineage.push(LineageRecord {
            id: child_id,
            parent: Some(parent_id),
            birth_step: step,
            death_step: None,
            genotype_hash: hash,
        });
        agents.push(child);
        population += 1;
        born += 1;
    }
    born
}

/// Seed the initial population: uniform positions, random orientations,
/// random genotypes, all at the initial energy. Every founder draws from
/// its own stream, so the result depends only on the run seed.
pub fn population_seed(
    count: usize,
    shape: NetworkShape,
    energy: EnergyParams,
    box_length: f64,
    run_seed: u64,
) -> (Vec<Agent>, Vec<LineageRecord>, u64) {
    let mut agents = Vec::with_capacity(count);
    let mut lineage = Vec::with_capacity(count);
    for id in 0..count as u64 {
        let mut stream = Stream::new(run_seed, id, 0);
        let position = Vec3::new(
            stream.rng().random::<f64>() * box_length,
            stream.rng().random::<f64>() * box_length,
            stream.rng().random::<f64>() * box_length,
        );
        let (heading, up) = random_orientation(stream.rng());
        let genotype = random_genotype(shape, stream.rng());
        let hash = genotype_hash(&genotype);
        agents.push(Agent {
            id,
            parent: None,
            birth_step: 0,
            pose: Pose::new(position, heading, up),
            energy: energy.initial,
            genotype,
            state: ControllerState::zeroed(),
            signal_out: [0.0, 0.0],
            action: false,
            alive: true,
            stream,
            neighbor_count: 0,
            last_income: 0.0,
            clamp_events: 0,
        });
        lineage.push(LineageRecord {
            id,
            parent: None,
            birth_step: 0,
            death_step: None,
            genotype_hash: hash,
        });
    }
    (agents, lineage, count as u64)
}

/// Drop dead agents from the roster (their lineage rows remain).
pub fn compact(agents: &mut Vec<Agent>) {
    agents.retain(|a| a.alive);
}
