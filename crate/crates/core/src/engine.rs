//! The step loop for the stateful (controller-driven) tasks.
//!
//! A step runs in phases: build index -> sense/think/act -> settle.
//! The parallel phases read a frozen snapshot of last step's poses and
//! emissions and write only to their own agent's slots, so results are
//! bit-identical at any thread count. Deaths, births, energy settlement
//! and source relocation run single-threaded in ascending agent order.
//!
//! Signals emitted in a step are heard by neighbors at the next step's
//! sense phase; there is no propagation delay beyond that step granularity.

use crate::config::{RunConfig, SignalMode};
use crate::controller::{forward, NetworkShape};
use crate::error::SimFault;
use crate::evolution::{
    alive_count, compact, population_seed, step_births, step_deaths, total_energy, Agent,
    BirthParams, LineageRecord, StepLedger,
};
use crate::grid::UniformGrid;
use crate::rng::{Stream, STREAM_WORLD};
use crate::signals::{accumulate_counted, emission_cost, Emitter, SignalFrame};
use crate::tasks::{foraging_income, noisy_food_sense, relocate_sources, EnergySource, TaskKind};
use crate::treecode::{SignalTree, TreeScratch, DEFAULT_LEAF_CAPACITY};
use crate::vec3::Vec3;
use crate::world::{min_image_delta, Pose};
use rand::Rng;
use rayon::prelude::*;

/// Aggregates of one completed step.
#[derive(Clone, Debug)]
pub struct StepStats {
    /// Index of the completed step (the first step of a run is 1).
    pub step: u64,
    pub population: u64,
    pub ledger: StepLedger,
    /// Deviation from the energy conservation identity.
    pub residual: f64,
    pub mean_energy: f64,
    pub mean_neighbors: f64,
    pub cooperator_fraction: f64,
    /// Income per stepping agent this step.
    pub efficiency: f64,
    /// Cumulative source relocations.
    pub relocations: u64,
    pub extinct: bool,
    /// Ids of agents removed this step, in ascending order.
    pub died: Vec<u64>,
}

struct NeighborCache {
    /// Sorted candidate slot lists, one per agent, self excluded.
    lists: Vec<Vec<u32>>,
}

pub struct Simulation {
    pub config: RunConfig,
    pub config_hash: String,
    pub step: u64,
    pub agents: Vec<Agent>,
    pub lineage: Vec<LineageRecord>,
    pub next_id: u64,
    pub world_stream: Stream,
    pub sources: Vec<EnergySource>,
    pub relocations: u64,
    shape: NetworkShape,
    cache: Option<NeighborCache>,
    needs_rebuild: bool,
}

impl Simulation {
    pub fn new(config: RunConfig) -> Self {
        assert_ne!(
            config.run.task,
            TaskKind::Stateless,
            "stateless runs use boids::BoidsSim"
        );
        let shape = config.network_shape();
        let seed = config.run.seed;
        let (agents, lineage, next_id) = population_seed(
            config.evolution.initial_population as usize,
            shape,
            config.energy_params(),
            config.world.box_length,
            seed,
        );
        let mut world_stream = Stream::new(seed, STREAM_WORLD, 0);
        let sources = initial_sources(&config, &mut world_stream);
        let config_hash = config.hash();
        Simulation {
            config,
            config_hash,
            step: 0,
            agents,
            lineage,
            next_id,
            world_stream,
            sources,
            relocations: 0,
            shape,
            cache: None,
            needs_rebuild: false,
        }
    }

    /// Reassemble a simulation from snapshot state. Lineage records exist
    /// only for living agents; earlier history stays in the original logs.
    #[allow(clippy::too_many_arguments)]
    pub fn restore(
        config: RunConfig,
        step: u64,
        agents: Vec<Agent>,
        next_id: u64,
        world_word_pos: u128,
        sources: Vec<EnergySource>,
        relocations: u64,
    ) -> Self {
        let shape = config.network_shape();
        let seed = config.run.seed;
        let lineage = rebuild_lineage(&agents, next_id);
        let config_hash = config.hash();
        Simulation {
            config,
            config_hash,
            step,
            agents,
            lineage,
            next_id,
            world_stream: Stream::restore(seed, STREAM_WORLD, 0, world_word_pos),
            sources,
            relocations,
            shape,
            cache: None,
            needs_rebuild: false,
        }
    }

    pub fn shape(&self) -> NetworkShape {
        self.shape
    }

    pub fn population(&self) -> usize {
        alive_count(&self.agents)
    }

    fn base_query_radius(&self) -> f64 {
        match self.config.run.task {
            TaskKind::Pd => self.config.world.signal_radius.max(self.config.pd.interaction_radius),
            _ => self.config.world.signal_radius,
        }
    }

    fn capture_radius(&self) -> f64 {
        self.base_query_radius()
            + self.config.world.neighbor_refresh_interval as f64 * 2.0 * self.config.world.agent_speed
    }

    fn rebuild_cache(&mut self) {
        compact(&mut self.agents);
        let l = self.config.world.box_length;
        let capture = self.capture_radius();
        let positions: Vec<Vec3> = self.agents.iter().map(|a| a.pose.position).collect();
        let grid = UniformGrid::build(&positions, l, capture);
        let cap2 = capture * capture;
        let lists: Vec<Vec<u32>> = (0..positions.len())
            .into_par_iter()
            .map(|i| {
                let mut cand = Vec::new();
                grid.candidates(positions[i], &mut cand);
                let mut list: Vec<u32> = cand
                    .into_iter()
                    .filter(|&j| {
                        j as usize != i
                            && min_image_delta(positions[i], positions[j as usize], l)
                                .norm_squared()
                                <= cap2
                    })
                    .collect();
                list.sort_unstable();
                list
            })
            .collect();
        self.cache = Some(NeighborCache { lists });
    }

    /// Execute one step. The caller is expected to stop on `extinct`.
    pub fn step(&mut self) -> Result<StepStats, SimFault> {
        let step = self.step;
        let interval = self.config.world.neighbor_refresh_interval;
        if self.cache.is_none() || self.needs_rebuild || step % interval == 0 {
            self.rebuild_cache();
            self.needs_rebuild = false;
        }
        let n = self.agents.len();
        if n == 0 {
            self.step += 1;
            return Ok(self.extinct_stats());
        }

        let total_before = total_energy(&self.agents);
        let l = self.config.world.box_length;
        let speed = self.config.world.agent_speed;
        let task = self.config.run.task;
        let sense_params = self.config.sense_params();
        let vision_params = self.config.vision_params();
        let noise = self.config.noise_model();
        let gain = self.config.controller.input_gain;
        let muted = self.config.signals.muted;
        let shape = self.shape;
        let theta = self.config.signals.opening_angle;
        let mode = self.config.signals.mode;

        // Frozen view of last step's poses and emissions.
        let poses: Vec<Pose> = self.agents.iter().map(|a| a.pose).collect();
        let emitters: Vec<Emitter> = self
            .agents
            .iter()
            .map(|a| Emitter { position: a.pose.position, intensity: a.signal_out })
            .collect();
        let tree = match mode {
            SignalMode::Tree => Some(SignalTree::build(emitters.clone(), l, DEFAULT_LEAF_CAPACITY)),
            SignalMode::Exact => None,
        };
        let cache = self.cache.as_ref().expect("cache built above");
        let sources = &self.sources;

        // Phase A: sense -> think -> act, fully parallel, per-agent writes.
        self.agents
            .par_iter_mut()
            .enumerate()
            .try_for_each_init(TreeScratch::default, |scratch, (i, agent)| {
                let frame = match &tree {
                    Some(tree) => agent_tree_frame(tree, &poses[i], i, theta, &sense_params, scratch),
                    None => {
                        // One scan does both sensing and the neighbor count
                        // (the sense cutoff is the signal radius).
                        let mut frame = SignalFrame::zero();
                        let mut count = 0u32;
                        for &j in &cache.lists[i] {
                            if accumulate_counted(
                                &mut frame,
                                &poses[i],
                                &emitters[j as usize],
                                &sense_params,
                            ) {
                                count += 1;
                            }
                        }
                        agent.neighbor_count = count;
                        frame
                    }
                };
                let mut inputs = [0.0f64; crate::controller::VISION_INPUTS];
                let flat = frame.flat();
                for (slot, v) in inputs.iter_mut().zip(flat.iter()) {
                    *slot = v * gain;
                }
                if task == TaskKind::NoisyForaging {
                    let vision = noisy_food_sense(
                        &poses[i],
                        sources,
                        &noise,
                        &vision_params,
                        agent.stream.rng(),
                    );
                    inputs[crate::controller::SIGNAL_INPUTS..].copy_from_slice(&vision);
                }
                let (cmd, new_state) =
                    forward(shape, &agent.genotype, &agent.state, &inputs[..shape.inputs])
                        .map_err(|e| SimFault::NonFinite {
                            agent_id: agent.id,
                            step,
                            what: e.0,
                            genotype: agent.genotype.weights.clone(),
                        })?;
                agent.state = new_state;
                agent.clamp_events += u64::from(agent.pose.apply_rotation(cmd.psi, cmd.theta));
                agent.pose.advance(speed, l);
                if !agent.pose.position.is_finite() || !agent.pose.heading.is_finite() {
                    return Err(SimFault::NonFinite {
                        agent_id: agent.id,
                        step,
                        what: "pose",
                        genotype: agent.genotype.weights.clone(),
                    });
                }
                agent.signal_out = if muted { [0.0, 0.0] } else { cmd.signal_out };
                agent.action = cmd.action_bit;
                Ok(())
            })?;

        // Phase B runs only where phase A could not already produce the
        // value: neighbor counts in tree mode (no candidate scan happened)
        // and PD payoffs (actions of all agents are fixed only now). Both
        // are evaluated at the sensed (pre-move) positions.
        let agents = &self.agents;
        let signal_radius2 = self.config.world.signal_radius * self.config.world.signal_radius;
        let tree_counts: Option<Vec<u32>> = match mode {
            SignalMode::Tree => Some(
                (0..n)
                    .into_par_iter()
                    .map(|i| {
                        cache.lists[i]
                            .iter()
                            .filter(|&&j| {
                                min_image_delta(poses[i].position, poses[j as usize].position, l)
                                    .norm_squared()
                                    <= signal_radius2
                            })
                            .count() as u32
                    })
                    .collect(),
            ),
            SignalMode::Exact => None,
        };
        let pd_params = self.config.pd_params();
        let pd_baseline = self.config.pd.baseline_income;
        let pd_payoffs: Option<Vec<f64>> = match task {
            TaskKind::Pd => Some(
                (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let mut payoff = 0.0;
                        let cooperates = agents[i].action;
                        for &j in &cache.lists[i] {
                            let d2 = min_image_delta(
                                poses[i].position,
                                poses[j as usize].position,
                                l,
                            )
                            .norm_squared();
                            let r = d2.sqrt();
                            if r <= pd_params.interaction_radius {
                                let w = pd_params.weight(r);
                                if agents[j as usize].action {
                                    payoff += pd_params.benefit * w;
                                }
                                if cooperates {
                                    payoff -= pd_params.cost * w;
                                }
                            }
                        }
                        payoff
                    })
                    .collect(),
            ),
            _ => None,
        };

        // Resolve: energy settlement, deaths, births, relocation.
        let kappa = self.config.signals.emission_cost;
        let metabolic = self.config.evolution.metabolic_cost;
        let mut ledger = StepLedger::default();
        let mut neighbor_sum = 0u64;
        let mut coop = 0u64;
        for (i, agent) in self.agents.iter_mut().enumerate() {
            if let Some(counts) = &tree_counts {
                agent.neighbor_count = counts[i];
            }
            let income = match task {
                TaskKind::Foraging | TaskKind::NoisyForaging => {
                    foraging_income(agent.pose.position, sources, l)
                }
                TaskKind::Pd => pd_baseline + pd_payoffs.as_ref().expect("pd payoffs")[i],
                TaskKind::Stateless => unreachable!(),
            };
            let sig_cost = emission_cost(agent.signal_out, kappa);
            agent.energy += income - metabolic - sig_cost;
            agent.last_income = income;
            ledger.income += income;
            ledger.metabolic += metabolic;
            ledger.signaling += sig_cost;
            neighbor_sum += agent.neighbor_count as u64;
            coop += u64::from(agent.action);
        }

        let died = step_deaths(&mut self.agents, step, &mut ledger, &mut self.lineage);
        let mut birth_params = BirthParams {
            energy: self.config.energy_params(),
            mutation: self.config.mutation_params(),
            shape,
            box_length: l,
            population_cap: self.config.evolution.population_cap as usize,
            run_seed: self.config.run.seed,
            lineage: &mut self.lineage,
        };
        step_births(&mut self.agents, step, &mut self.next_id, &mut ledger, &mut birth_params);

        let relocation_interval = self.config.foraging.relocation_interval;
        if matches!(task, TaskKind::Foraging | TaskKind::NoisyForaging)
            && relocation_interval > 0
            && (step + 1) % relocation_interval == 0
        {
            relocate_sources(&mut self.sources, self.world_stream.rng(), l);
            self.relocations += 1;
        }

        self.step += 1;
        self.needs_rebuild = ledger.births > 0 || ledger.deaths > 0;

        let total_after = total_energy(&self.agents);
        let population = alive_count(&self.agents) as u64;
        let mean_energy = if population > 0 { total_after / population as f64 } else { 0.0 };
        Ok(StepStats {
            step: self.step,
            population,
            ledger,
            residual: ledger.residual(total_before, total_after),
            mean_energy,
            mean_neighbors: neighbor_sum as f64 / n as f64,
            cooperator_fraction: coop as f64 / n as f64,
            efficiency: ledger.income / n as f64,
            relocations: self.relocations,
            extinct: population == 0,
            died,
        })
    }

    fn extinct_stats(&self) -> StepStats {
        StepStats {
            step: self.step,
            population: 0,
            ledger: StepLedger::default(),
            residual: 0.0,
            mean_energy: 0.0,
            mean_neighbors: 0.0,
            cooperator_fraction: 0.0,
            efficiency: 0.0,
            relocations: self.relocations,
            extinct: true,
            died: Vec::new(),
        }
    }

    /// Fresh exact neighbor query at the current positions (no cache),
    /// mainly for tests and analysis probes.
    pub fn neighbors_within(&self, slot: usize, radius: f64) -> Vec<(u32, Vec3, f64)> {
        let positions: Vec<Vec3> = self.agents.iter().map(|a| a.pose.position).collect();
        let grid = UniformGrid::build(&positions, self.config.world.box_length, radius);
        grid.neighbors_within(&positions, slot, radius)
    }
}

fn agent_tree_frame(
    tree: &SignalTree,
    pose: &Pose,
    slot: usize,
    theta: f64,
    params: &crate::signals::SenseParams,
    scratch: &mut TreeScratch,
) -> SignalFrame {
    tree.sense(pose, Some(slot as u32), theta, params, scratch)
}

fn initial_sources(config: &RunConfig, world_stream: &mut Stream) -> Vec<EnergySource> {
    match config.run.task {
        TaskKind::Foraging | TaskKind::NoisyForaging => {
            let l = config.world.box_length;
            (0..config.foraging.source_count)
                .map(|_| EnergySource {
                    center: Vec3::new(
                        world_stream.rng().random::<f64>() * l,
                        world_stream.rng().random::<f64>() * l,
                        world_stream.rng().random::<f64>() * l,
                    ),
                    radius: config.foraging.source_radius,
                    income_rate: config.foraging.source_income,
                })
                .collect()
        }
        _ => Vec::new(),
    }
}

fn rebuild_lineage(agents: &[Agent], next_id: u64) -> Vec<LineageRecord> {
    let mut lineage: Vec<LineageRecord> = (0..next_id)
        .map(|id| LineageRecord {
            id,
            parent: None,
            birth_step: 0,
            death_step: None,
            genotype_hash: 0,
        })
        .collect();
    for a in agents {
        lineage[a.id as usize] = LineageRecord {
            id: a.id,
            parent: a.parent,
            birth_step: a.birth_step,
            death_step: None,
            genotype_hash: crate::controller::genotype_hash(&a.genotype),
        };
    }
    lineage
}
