//! Run orchestration shared by the CLI and the C bindings: executing a
//! configured run into an output directory, resuming from snapshots, and
//! producing the analysis artifacts for a finished run directory.

use crate::analysis::{self, AnalysisError};
use crate::boids::BoidsSim;
use crate::config::RunConfig;
use crate::engine::Simulation;
use crate::error::{ConfigError, IntegrityError, SimFault};
use crate::logs::{
    self, read_agents, read_genotypes, read_lineage, read_meta, RunLogs, StatsRow, AGENTS_FILE,
    GENOTYPES_FILE, LINEAGE_FILE, STATS_FILE,
};
use crate::snapshot;
use crate::tasks::TaskKind;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const RESOLVED_CONFIG_FILE: &str = "resolved.cfg";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const SNAPSHOT_DIR: &str = "snapshots";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Integrity(#[from] IntegrityError),
    #[error(transparent)]
    Fault(#[from] SimFault),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |e| RunError::Io { path: path.display().to_string(), source: e }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Extinct,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub final_step: u64,
    pub population: u64,
    pub mean_efficiency: f64,
    pub wall_seconds: f64,
    pub out_dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Summary {
    status: String,
    final_step: u64,
    population: u64,
    mean_efficiency: f64,
    wall_seconds: f64,
    config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    extinct_at: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_alignment: Option<f64>,
}

pub fn build_pool(threads: usize) -> rayon::ThreadPool {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if threads > 0 {
        builder = builder.num_threads(threads);
    }
    builder.build().expect("thread pool")
}

fn prepare_out_dir(config: &RunConfig, out_dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(out_dir.join(SNAPSHOT_DIR)).map_err(io_err(out_dir))?;
    let resolved = out_dir.join(RESOLVED_CONFIG_FILE);
    std::fs::write(&resolved, config.resolved_toml()).map_err(io_err(&resolved))?;
    Ok(())
}

fn snapshot_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(SNAPSHOT_DIR).join(format!("step_{step:010}.snap"))
}

fn write_summary(out_dir: &Path, summary: &Summary) -> Result<(), RunError> {
    let path = out_dir.join(SUMMARY_FILE);
    let text = toml::to_string_pretty(summary).expect("summary serializes");
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(())
}

/// Execute a full run into `out_dir`. `threads = 0` lets rayon choose.
pub fn run_to_completion(
    config: &RunConfig,
    out_dir: &Path,
    threads: usize,
) -> Result<RunOutcome, RunError> {
    config.validate()?;
    prepare_out_dir(config, out_dir)?;
    let pool = build_pool(threads);
    match config.run.task {
        TaskKind::Stateless => {
            let sim = BoidsSim::new(config.boids_params(), config.run.seed);
            pool.install(|| boids_loop(sim, config, out_dir, true, config.run.steps))
        }
        _ => {
            let sim = Simulation::new(config.clone());
            pool.install(|| stateful_loop(sim, out_dir, true, config.run.steps))
        }
    }
}

/// Resume from a snapshot file, continuing to `until_step` (defaults to the
/// configured step count). Logs in `out_dir` cover only the resumed steps.
pub fn resume_run(
    config: &RunConfig,
    snapshot_file: &Path,
    out_dir: &Path,
    threads: usize,
    until_step: Option<u64>,
) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let snap = snapshot::read_snapshot(snapshot_file)?;
    let until = until_step.unwrap_or(config.run.steps);
    prepare_out_dir(config, out_dir)?;
    let pool = build_pool(threads);
    let path_str = snapshot_file.display().to_string();
    match config.run.task {
        TaskKind::Stateless => {
            let sim = snapshot::resume_boids(config, snap, &path_str)?;
            pool.install(|| boids_loop(sim, config, out_dir, false, until))
        }
        _ => {
            let sim = snapshot::resume_simulation(config.clone(), snap, &path_str)?;
            pool.install(|| stateful_loop(sim, out_dir, false, until))
        }
    }
}

fn stateful_loop(
    mut sim: Simulation,
    out_dir: &Path,
    initial_dump: bool,
    until_step: u64,
) -> Result<RunOutcome, RunError> {
    let config = sim.config.clone();
    let hash = sim.config_hash.clone();
    let started = Instant::now();
    let mut logs = RunLogs::create(
        out_dir,
        config.run.task.as_str(),
        &hash,
        config.run.seed,
        sim.shape().weight_count(),
        false,
    )?;
    let log = &config.logging;
    if initial_dump {
        if log.agents_interval > 0 {
            logs.write_agents(0, &sim.agents)?;
        }
        if log.genotype_interval > 0 {
            logs.write_genotypes(0, &sim.agents)?;
        }
        snapshot::write_snapshot_file(
            &snapshot_path(out_dir, 0),
            &snapshot::encode_simulation(&sim),
        )?;
    }

    let mut efficiency_sum = 0.0;
    let mut steps_run = 0u64;
    let mut status = RunStatus::Completed;
    let mut extinct_at = None;
    let mut last_snapshot_step = sim.step;
    let cadence = |interval: u64, step: u64| interval > 0 && step % interval == 0;

    while sim.step < until_step {
        let stats = sim.step()?;
        for id in &stats.died {
            logs.write_lineage(&sim.lineage[*id as usize])?;
        }
        if cadence(log.stats_interval, stats.step) {
            logs.write_stats(&StatsRow::from_stats(&stats))?;
        }
        if cadence(log.agents_interval, stats.step) {
            logs.write_agents(stats.step, &sim.agents)?;
        }
        if cadence(log.genotype_interval, stats.step) {
            logs.write_genotypes(stats.step, &sim.agents)?;
        }
        if cadence(log.snapshot_interval, stats.step) {
            snapshot::write_snapshot_file(
                &snapshot_path(out_dir, stats.step),
                &snapshot::encode_simulation(&sim),
            )?;
            last_snapshot_step = stats.step;
        }
        efficiency_sum += stats.efficiency;
        steps_run += 1;
        if stats.extinct {
            status = RunStatus::Extinct;
            extinct_at = Some(stats.step);
            break;
        }
    }

    // Finalize lineage rows for the survivors, in id order.
    let mut living: Vec<u64> =
        sim.agents.iter().filter(|a| a.alive).map(|a| a.id).collect();
    living.sort_unstable();
    for id in living {
        logs.write_lineage(&sim.lineage[id as usize])?;
    }
    logs.finish()?;

    if sim.step != last_snapshot_step {
        snapshot::write_snapshot_file(
            &snapshot_path(out_dir, sim.step),
            &snapshot::encode_simulation(&sim),
        )?;
    }

    let population = sim.population() as u64;
    let outcome = RunOutcome {
        status,
        final_step: sim.step,
        population,
        mean_efficiency: if steps_run > 0 { efficiency_sum / steps_run as f64 } else { 0.0 },
        wall_seconds: started.elapsed().as_secs_f64(),
        out_dir: out_dir.to_path_buf(),
    };
    write_summary(
        out_dir,
        &Summary {
            status: match status {
                RunStatus::Completed => "completed".to_string(),
                RunStatus::Extinct => "extinct".to_string(),
            },
            final_step: outcome.final_step,
            population,
            mean_efficiency: outcome.mean_efficiency,
            wall_seconds: outcome.wall_seconds,
            config_hash: hash,
            extinct_at,
            final_alignment: None,
        },
    )?;
    Ok(outcome)
}

fn boids_loop(
    mut sim: BoidsSim,
    config: &RunConfig,
    out_dir: &Path,
    initial_dump: bool,
    until_step: u64,
) -> Result<RunOutcome, RunError> {
    let hash = config.hash();
    let started = Instant::now();
    let mut logs = RunLogs::create(
        out_dir,
        TaskKind::Stateless.as_str(),
        &hash,
        config.run.seed,
        0,
        true,
    )?;
    let log = &config.logging;
    let mut alignment = sim.mean_local_alignment();
    if initial_dump {
        if log.stats_interval > 0 {
            logs.write_boids_stats(&logs::BoidsStatsRow {
                step: 0,
                population: sim.positions.len() as u64,
                mean_alignment: alignment,
                mean_speed: sim.mean_speed(),
            })?;
        }
        snapshot::write_snapshot_file(
            &snapshot_path(out_dir, 0),
            &snapshot::encode_boids(&sim, config.run.seed, &hash),
        )?;
    }
    let mut last_snapshot_step = sim.step;
    while sim.step < until_step {
        sim.step();
        if log.stats_interval > 0 && sim.step % log.stats_interval == 0 {
            alignment = sim.mean_local_alignment();
            logs.write_boids_stats(&logs::BoidsStatsRow {
                step: sim.step,
                population: sim.positions.len() as u64,
                mean_alignment: alignment,
                mean_speed: sim.mean_speed(),
            })?;
        }
        if log.snapshot_interval > 0 && sim.step % log.snapshot_interval == 0 {
            snapshot::write_snapshot_file(
                &snapshot_path(out_dir, sim.step),
                &snapshot::encode_boids(&sim, config.run.seed, &hash),
            )?;
            last_snapshot_step = sim.step;
        }
    }
    logs.finish()?;
    if sim.step != last_snapshot_step {
        snapshot::write_snapshot_file(
            &snapshot_path(out_dir, sim.step),
            &snapshot::encode_boids(&sim, config.run.seed, &hash),
        )?;
    }
    let outcome = RunOutcome {
        status: RunStatus::Completed,
        final_step: sim.step,
        population: sim.positions.len() as u64,
        mean_efficiency: 0.0,
        wall_seconds: started.elapsed().as_secs_f64(),
        out_dir: out_dir.to_path_buf(),
    };
    write_summary(
        out_dir,
        &Summary {
            status: "completed".to_string(),
            final_step: outcome.final_step,
            population: outcome.population,
            mean_efficiency: 0.0,
            wall_seconds: outcome.wall_seconds,
            config_hash: hash,
            extinct_at: None,
            final_alignment: Some(alignment),
        },
    )?;
    Ok(outcome)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Analytic {
    Neighbors,
    Pca,
    Phylogeny,
    Assortment,
}

impl Analytic {
    pub const ALL: [Analytic; 4] =
        [Analytic::Neighbors, Analytic::Pca, Analytic::Phylogeny, Analytic::Assortment];

    pub fn parse(text: &str) -> Option<Vec<Analytic>> {
        match text {
            "all" => Some(Self::ALL.to_vec()),
            "neighbors" => Some(vec![Analytic::Neighbors]),
            "pca" => Some(vec![Analytic::Pca]),
            "phylogeny" => Some(vec![Analytic::Phylogeny]),
            "assortment" => Some(vec![Analytic::Assortment]),
            _ => None,
        }
    }
}

/// Produce analysis artifacts for a finished run directory. Returns the
/// paths written. Refuses inputs whose config hashes disagree.
pub fn analyze(run_dir: &Path, which: &[Analytic]) -> Result<Vec<PathBuf>, RunError> {
    let config = RunConfig::load(&run_dir.join(RESOLVED_CONFIG_FILE))?;
    let expected = config.hash();
    let out = run_dir.join("analysis");
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;

    let agents_path = run_dir.join(AGENTS_FILE);
    let lineage_path = run_dir.join(LINEAGE_FILE);
    let genotypes_path = run_dir.join(GENOTYPES_FILE);
    let stats_path = run_dir.join(STATS_FILE);

    // Every artifact consumed must carry the hash of the resolved config.
    for path in [&stats_path, &agents_path, &lineage_path, &genotypes_path] {
        if path.exists() {
            let meta = read_meta(path)?;
            if meta.config_hash != expected {
                return Err(IntegrityError::HashMismatch {
                    path: path.display().to_string(),
                    found: meta.config_hash,
                    expected,
                }
                .into());
            }
        }
    }

    let mut written = Vec::new();
    let mut manifest_inputs = Vec::new();
    let mut manifest_outputs = Vec::new();

    let mut agent_rows = None;
    let need_agents = |rows: &mut Option<Vec<logs::AgentRow>>| -> Result<(), RunError> {
        if rows.is_none() {
            let (_, r) = read_agents(&agents_path)?;
            *rows = Some(r);
        }
        Ok(())
    };

    for analytic in which {
        match analytic {
            Analytic::Neighbors => {
                need_agents(&mut agent_rows)?;
                let series = analysis::neighbor_series(agent_rows.as_ref().unwrap());
                let path = out.join("neighbor_series.csv");
                let mut file =
                    std::io::BufWriter::new(std::fs::File::create(&path).map_err(io_err(&path))?);
                writeln!(
                    file,
                    "# neuroboids neighbor_series v{} task={} config_hash={expected} seed={}",
                    crate::FORMAT_VERSION,
                    config.run.task.as_str(),
                    config.run.seed
                )
                .map_err(io_err(&path))?;
                writeln!(file, "step,mean_neighbors").map_err(io_err(&path))?;
                let mut buf = ryu::Buffer::new();
                for (step, mean) in series {
                    writeln!(file, "{step},{}", buf.format(mean)).map_err(io_err(&path))?;
                }
                manifest_inputs.push(AGENTS_FILE.to_string());
                manifest_outputs.push("neighbor_series.csv".to_string());
                written.push(path);
            }
            Analytic::Pca => {
                let (_, _steps, ids, rows) = read_genotypes(&genotypes_path)?;
                // One point per agent: keep the first dump of each id
                // (genotypes are fixed from birth to death).
                let mut seen = std::collections::HashSet::new();
                let mut unique_ids = Vec::new();
                let mut unique_rows = Vec::new();
                for (id, row) in ids.into_iter().zip(rows) {
                    if seen.insert(id) {
                        unique_ids.push(id);
                        unique_rows.push(row);
                    }
                }
                let result = analysis::pca(&unique_rows, 2)?;
                need_agents(&mut agent_rows)?;
                let mut neighbor_sum: std::collections::HashMap<u64, (u64, u64)> =
                    std::collections::HashMap::new();
                for row in agent_rows.as_ref().unwrap() {
                    let e = neighbor_sum.entry(row.id).or_insert((0, 0));
                    e.0 += row.neighbors as u64;
                    e.1 += 1;
                }
                let (_, lineage) = read_lineage(&lineage_path)?;
                let deaths: std::collections::HashMap<u64, Option<u64>> =
                    lineage.iter().map(|r| (r.id, r.death_step)).collect();

                let path = out.join("pca_projection.csv");
                let mut file =
                    std::io::BufWriter::new(std::fs::File::create(&path).map_err(io_err(&path))?);
                writeln!(
                    file,
                    "# neuroboids pca_projection v{} task={} config_hash={expected} seed={}",
                    crate::FORMAT_VERSION,
                    config.run.task.as_str(),
                    config.run.seed
                )
                .map_err(io_err(&path))?;
                writeln!(file, "id,pc1,pc2,mean_neighbors,death_step").map_err(io_err(&path))?;
                let mut buf = ryu::Buffer::new();
                for (id, (p1, p2)) in unique_ids.iter().zip(&result.projection) {
                    let mean_neighbors = neighbor_sum
                        .get(id)
                        .map(|&(s, n)| s as f64 / n as f64)
                        .unwrap_or(0.0);
                    let death = deaths
                        .get(id)
                        .copied()
                        .flatten()
                        .map(|d| d.to_string())
                        .unwrap_or_default();
                    let p1s = buf.format(*p1).to_string();
                    let p2s = buf.format(*p2).to_string();
                    writeln!(file, "{id},{p1s},{p2s},{},{death}", buf.format(mean_neighbors))
                        .map_err(io_err(&path))?;
                }
                written.push(path);

                let vpath = out.join("pca_variance.csv");
                let mut vfile = std::io::BufWriter::new(
                    std::fs::File::create(&vpath).map_err(io_err(&vpath))?,
                );
                writeln!(
                    vfile,
                    "# neuroboids pca_variance v{} task={} config_hash={expected} seed={}",
                    crate::FORMAT_VERSION,
                    config.run.task.as_str(),
                    config.run.seed
                )
                .map_err(io_err(&vpath))?;
                writeln!(vfile, "component,explained_variance_ratio").map_err(io_err(&vpath))?;
                for (i, ratio) in result.explained_variance_ratio.iter().enumerate() {
                    writeln!(vfile, "{i},{}", buf.format(*ratio)).map_err(io_err(&vpath))?;
                }
                manifest_inputs.push(GENOTYPES_FILE.to_string());
                manifest_outputs.push("pca_projection.csv".to_string());
                manifest_outputs.push("pca_variance.csv".to_string());
                written.push(vpath);
            }
            Analytic::Phylogeny => {
                let (_, lineage) = read_lineage(&lineage_path)?;
                let end_step = lineage
                    .iter()
                    .map(|r| r.death_step.unwrap_or(r.birth_step))
                    .max()
                    .unwrap_or(0)
                    .max(config.run.steps.min(u64::MAX));
                let forest = analysis::phylogeny_forest(&lineage, end_step)?;
                let path = out.join("phylogeny.nwk");
                let mut file =
                    std::io::BufWriter::new(std::fs::File::create(&path).map_err(io_err(&path))?);
                for tree in &forest {
                    writeln!(file, "{}", analysis::to_newick(tree)).map_err(io_err(&path))?;
                }
                manifest_inputs.push(LINEAGE_FILE.to_string());
                manifest_outputs.push("phylogeny.nwk".to_string());
                written.push(path);
            }
            Analytic::Assortment => {
                need_agents(&mut agent_rows)?;
                let rows = agent_rows.as_ref().unwrap();
                let path = out.join("assortment.csv");
                let mut file =
                    std::io::BufWriter::new(std::fs::File::create(&path).map_err(io_err(&path))?);
                writeln!(
                    file,
                    "# neuroboids assortment v{} task={} config_hash={expected} seed={}",
                    crate::FORMAT_VERSION,
                    config.run.task.as_str(),
                    config.run.seed
                )
                .map_err(io_err(&path))?;
                writeln!(file, "step,assortment,cooperator_fraction").map_err(io_err(&path))?;
                let mut buf = ryu::Buffer::new();
                let l = config.world.box_length;
                let radius = config.pd.interaction_radius;
                let mut i = 0;
                while i < rows.len() {
                    let step = rows[i].step;
                    let mut positions = Vec::new();
                    let mut actions = Vec::new();
                    while i < rows.len() && rows[i].step == step {
                        positions.push(crate::vec3::Vec3::new(rows[i].x, rows[i].y, rows[i].z));
                        actions.push(rows[i].action != 0);
                        i += 1;
                    }
                    let a = analysis::assortment(&positions, &actions, radius, l);
                    let coop =
                        actions.iter().filter(|&&c| c).count() as f64 / actions.len() as f64;
                    let a_str = buf.format(a).to_string();
                    writeln!(file, "{step},{a_str},{}", buf.format(coop))
                        .map_err(io_err(&path))?;
                }
                manifest_inputs.push(AGENTS_FILE.to_string());
                manifest_outputs.push("assortment.csv".to_string());
                written.push(path);
            }
        }
    }

    manifest_inputs.sort();
    manifest_inputs.dedup();
    let manifest = out.join("manifest.toml");
    let text = {
        #[derive(Serialize)]
        struct Manifest {
            config_hash: String,
            inputs: Vec<String>,
            outputs: Vec<String>,
        }
        toml::to_string_pretty(&Manifest {
            config_hash: expected,
            inputs: manifest_inputs,
            outputs: manifest_outputs,
        })
        .expect("manifest serializes")
    };
    std::fs::write(&manifest, text).map_err(io_err(&manifest))?;
    written.push(manifest);
    Ok(written)
}
