//! Run configuration: a single TOML document with one flat section per
//! module. Unknown keys are rejected; every default becomes explicit in the
//! emitted resolved config, so a run directory is self-describing.
//!
//! Execution context (thread count, output directory) is deliberately not
//! part of the config: it may never influence results, so it is neither
//! stored nor hashed.

use crate::controller::{MutationParams, NetworkShape};
use crate::error::ConfigError;
use crate::evolution::EnergyParams;
use crate::signals::SenseParams;
use crate::tasks::{NoiseModel, PdParams, TaskKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    Exact,
    Tree,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub task: TaskKind,
    pub steps: u64,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { task: TaskKind::Foraging, steps: 100_000, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSection {
    pub box_length: f64,
    pub signal_radius: f64,
    pub agent_speed: f64,
    pub neighbor_refresh_interval: u64,
}

impl Default for WorldSection {
    fn default() -> Self {
        WorldSection {
            box_length: 600.0,
            signal_radius: 50.0,
            agent_speed: 1.0,
            neighbor_refresh_interval: 10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub mutation_rate: f64,
    pub mutation_sigma: f64,
    pub weight_clamp: f64,
    /// Gain applied to the sensed signal frame before it enters the network.
    pub input_gain: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            mutation_rate: 0.1,
            mutation_sigma: 0.2,
            weight_clamp: 8.0,
            input_gain: 10.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionSection {
    pub initial_population: u64,
    pub initial_energy: f64,
    pub reproduction_threshold: f64,
    pub reproduction_cost: f64,
    pub child_energy: f64,
    pub metabolic_cost: f64,
    pub population_cap: u64,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        EvolutionSection {
            initial_population: 300,
            initial_energy: 2.0,
            reproduction_threshold: 4.0,
            reproduction_cost: 2.0,
            child_energy: 2.0,
            metabolic_cost: 0.01,
            population_cap: 1000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SignalsSection {
    pub mode: SignalMode,
    pub opening_angle: f64,
    /// Energy cost per unit of emitted intensity, summed over channels.
    pub emission_cost: f64,
    pub min_distance: f64,
    /// Force both emission channels to zero (control populations).
    pub muted: bool,
}

impl Default for SignalsSection {
    fn default() -> Self {
        SignalsSection {
            mode: SignalMode::Exact,
            opening_angle: 0.5,
            emission_cost: 0.01,
            min_distance: 1.0,
            muted: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ForagingSection {
    pub source_count: u64,
    pub source_radius: f64,
    pub source_income: f64,
    /// Steps between source relocations; 0 means static sources.
    pub relocation_interval: u64,
}

impl Default for ForagingSection {
    fn default() -> Self {
        ForagingSection {
            source_count: 5,
            source_radius: 20.0,
            source_income: 0.1,
            relocation_interval: 10_000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PdSection {
    pub interaction_radius: f64,
    pub benefit: f64,
    pub cost: f64,
    pub distance_exponent: f64,
    /// Flat income per step on top of the game payoff, so an isolated
    /// population does not starve outright. Whether PD agents also forage
    /// is not settled by the model; this knob is the compromise.
    pub baseline_income: f64,
}

impl Default for PdSection {
    fn default() -> Self {
        PdSection {
            interaction_radius: 30.0,
            benefit: 2.0,
            cost: 1.0,
            distance_exponent: 1.0,
            baseline_income: 0.03,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub amplitude: f64,
    pub vision_radius: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { amplitude: 40.0, vision_radius: 50.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct StatelessSection {
    pub count: u64,
    pub density: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    pub perception_radius: f64,
    pub separation_radius: f64,
    pub w_separation: f64,
    pub w_alignment: f64,
    pub w_cohesion: f64,
}

impl Default for StatelessSection {
    fn default() -> Self {
        StatelessSection {
            count: 16_384,
            density: 16_384.0,
            min_speed: 0.001,
            max_speed: 0.005,
            perception_radius: 0.05,
            separation_radius: 0.02,
            w_separation: 0.05,
            w_alignment: 0.2,
            w_cohesion: 0.05,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LoggingSection {
    /// Cadence of the per-step aggregate rows; 0 disables.
    pub stats_interval: u64,
    /// Cadence of per-agent rows; 0 disables.
    pub agents_interval: u64,
    /// Cadence of genotype dumps; 0 disables.
    pub genotype_interval: u64,
    /// Cadence of snapshots; 0 writes only the initial and final ones.
    pub snapshot_interval: u64,
}

impl Default for LoggingSection {
    fn default() -> Self {
        LoggingSection {
            stats_interval: 100,
            agents_interval: 100,
            genotype_interval: 10_000,
            snapshot_interval: 100_000,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub world: WorldSection,
    pub controller: ControllerSection,
    pub evolution: EvolutionSection,
    pub signals: SignalsSection,
    pub foraging: ForagingSection,
    pub pd: PdSection,
    pub noise: NoiseSection,
    pub stateless: StatelessSection,
    pub logging: LoggingSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        let w = &self.world;
        if !(w.box_length > 0.0 && w.box_length.is_finite()) {
            problems.push("world.box_length must be positive and finite".to_string());
        }
        if !(w.signal_radius > 0.0) || w.signal_radius >= w.box_length / 2.0 {
            problems.push(format!(
                "world.signal_radius must be in (0, L/2) = (0, {}), got {}",
                w.box_length / 2.0,
                w.signal_radius
            ));
        }
        if !(w.agent_speed > 0.0) {
            problems.push("world.agent_speed must be positive".to_string());
        }
        if w.neighbor_refresh_interval < 1 {
            problems.push("world.neighbor_refresh_interval must be >= 1".to_string());
        }
        let c = &self.controller;
        if !(0.0..=1.0).contains(&c.mutation_rate) {
            problems.push("controller.mutation_rate must be in [0, 1]".to_string());
        }
        if !(c.mutation_sigma >= 0.0) {
            problems.push("controller.mutation_sigma must be >= 0".to_string());
        }
        if !(c.weight_clamp > 0.0) {
            problems.push("controller.weight_clamp must be positive".to_string());
        }
        if !(c.input_gain > 0.0) {
            problems.push("controller.input_gain must be positive".to_string());
        }
        let e = &self.evolution;
        if e.population_cap < 1 {
            problems.push("evolution.population_cap must be >= 1".to_string());
        }
        if !(e.child_energy > 0.0) {
            problems.push("evolution.child_energy must be positive".to_string());
        }
        if !(e.reproduction_threshold > 0.0) {
            problems.push("evolution.reproduction_threshold must be positive".to_string());
        }
        if !(e.reproduction_cost >= 0.0) {
            problems.push("evolution.reproduction_cost must be >= 0".to_string());
        }
        if !(e.metabolic_cost >= 0.0) {
            problems.push("evolution.metabolic_cost must be >= 0".to_string());
        }
        let s = &self.signals;
        if s.mode == SignalMode::Tree && !(s.opening_angle > 0.0) {
            problems.push("signals.opening_angle must be > 0 in tree mode".to_string());
        }
        if !(s.opening_angle >= 0.0) {
            problems.push("signals.opening_angle must be >= 0".to_string());
        }
        if !(s.emission_cost >= 0.0) {
            problems.push("signals.emission_cost must be >= 0".to_string());
        }
        if !(s.min_distance > 0.0) {
            problems.push("signals.min_distance must be positive".to_string());
        }
        let f = &self.foraging;
        if !(f.source_radius > 0.0) {
            problems.push("foraging.source_radius must be positive".to_string());
        }
        if !(f.source_income >= 0.0) {
            problems.push("foraging.source_income must be >= 0".to_string());
        }
        let p = &self.pd;
        if !(p.interaction_radius > 0.0) || p.interaction_radius >= w.box_length / 2.0 {
            problems.push("pd.interaction_radius must be in (0, L/2)".to_string());
        }
        if !(p.benefit > p.cost && p.cost > 0.0) {
            problems.push(format!(
                "pd requires benefit > cost > 0 for a dilemma, got b={} c={}",
                p.benefit, p.cost
            ));
        }
        if !(p.distance_exponent >= 0.0) {
            problems.push("pd.distance_exponent must be >= 0".to_string());
        }
        let n = &self.noise;
        if !(n.amplitude >= 0.0 && n.amplitude.is_finite()) {
            problems.push("noise.amplitude must be finite and >= 0".to_string());
        }
        if !(n.vision_radius > 0.0) || n.vision_radius >= w.box_length / 2.0 {
            problems.push("noise.vision_radius must be in (0, L/2)".to_string());
        }
        let b = &self.stateless;
        if b.count < 1 {
            problems.push("stateless.count must be >= 1".to_string());
        }
        if !(b.density > 0.0) {
            problems.push("stateless.density must be positive".to_string());
        }
        if !(b.min_speed > 0.0 && b.max_speed >= b.min_speed) {
            problems.push("stateless speeds need 0 < min_speed <= max_speed".to_string());
        }
        if !(b.separation_radius > 0.0 && b.perception_radius > b.separation_radius) {
            problems
                .push("stateless needs perception_radius > separation_radius > 0".to_string());
        }
        let boids_box = (b.count as f64 / b.density).cbrt();
        if b.perception_radius >= boids_box / 2.0 {
            problems.push(format!(
                "stateless.perception_radius {} must be < half the derived box {}",
                b.perception_radius, boids_box
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems.join("; ")))
        }
    }

    /// Canonical TOML with every field explicit.
    pub fn resolved_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the resolved config.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.resolved_toml().as_bytes());
        let mut out = String::with_capacity(16);
        for b in &digest[..8] {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    /// Network input width for this task.
    pub fn network_shape(&self) -> NetworkShape {
        match self.run.task {
            TaskKind::NoisyForaging => NetworkShape::with_vision(),
            _ => NetworkShape::signal_only(),
        }
    }

    pub fn energy_params(&self) -> EnergyParams {
        EnergyParams {
            initial: self.evolution.initial_energy,
            reproduction_threshold: self.evolution.reproduction_threshold,
            reproduction_cost: self.evolution.reproduction_cost,
            child_energy: self.evolution.child_energy,
            metabolic_cost: self.evolution.metabolic_cost,
        }
    }

    pub fn mutation_params(&self) -> MutationParams {
        MutationParams {
            rate: self.controller.mutation_rate,
            sigma: self.controller.mutation_sigma,
            clamp: self.controller.weight_clamp,
        }
    }

    pub fn sense_params(&self) -> SenseParams {
        SenseParams {
            box_length: self.world.box_length,
            cutoff: self.world.signal_radius,
            min_distance: self.signals.min_distance,
        }
    }

    pub fn vision_params(&self) -> SenseParams {
        SenseParams {
            box_length: self.world.box_length,
            cutoff: self.noise.vision_radius,
            min_distance: self.signals.min_distance,
        }
    }

    pub fn pd_params(&self) -> PdParams {
        PdParams {
            interaction_radius: self.pd.interaction_radius,
            benefit: self.pd.benefit,
            cost: self.pd.cost,
            distance_exponent: self.pd.distance_exponent,
        }
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel { amplitude: self.noise.amplitude }
    }

    pub fn boids_params(&self) -> crate::boids::BoidsParams {
        let b = &self.stateless;
        crate::boids::BoidsParams {
            count: b.count as usize,
            density: b.density,
            min_speed: b.min_speed,
            max_speed: b.max_speed,
            perception_radius: b.perception_radius,
            separation_radius: b.separation_radius,
            w_separation: b.w_separation,
            w_alignment: b.w_alignment,
            w_cohesion: b.w_cohesion,
            neighbor_refresh_interval: self.world.neighbor_refresh_interval,
        }
    }
}
