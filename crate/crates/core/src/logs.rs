//! Run-log files: versioned CSVs with a comment header carrying the format
//! kind, task, config hash and seed. Readers verify the header and refuse
//! mixed-hash inputs, so analytics can never silently blend runs.

use crate::engine::StepStats;
use crate::error::IntegrityError;
use crate::evolution::{Agent, LineageRecord};
use crate::FORMAT_VERSION;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const STATS_FILE: &str = "stats.csv";
pub const AGENTS_FILE: &str = "agents.csv";
pub const GENOTYPES_FILE: &str = "genotypes.csv";
pub const LINEAGE_FILE: &str = "lineage.csv";

/// Identity stamped into the header line of every artifact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunMeta {
    pub kind: String,
    pub task: String,
    pub config_hash: String,
    pub seed: u64,
}

impl RunMeta {
    pub fn new(kind: &str, task: &str, config_hash: &str, seed: u64) -> Self {
        RunMeta {
            kind: kind.to_string(),
            task: task.to_string(),
            config_hash: config_hash.to_string(),
            seed,
        }
    }

    fn header_line(&self) -> String {
        format!(
            "# neuroboids {} v{} task={} config_hash={} seed={}\n",
            self.kind, FORMAT_VERSION, self.task, self.config_hash, self.seed
        )
    }

    fn parse(line: &str, path: &Path) -> Result<RunMeta, IntegrityError> {
        let corrupt = |detail: &str| IntegrityError::Corrupt {
            path: path.display().to_string(),
            detail: detail.to_string(),
        };
        let rest = line
            .strip_prefix("# neuroboids ")
            .ok_or_else(|| corrupt("missing artifact header line"))?;
        let mut parts = rest.split_whitespace();
        let kind = parts.next().ok_or_else(|| corrupt("header missing kind"))?.to_string();
        let version = parts.next().ok_or_else(|| corrupt("header missing version"))?;
        if version != format!("v{FORMAT_VERSION}") {
            return Err(corrupt(&format!("unsupported format version {version}")));
        }
        let mut task = None;
        let mut config_hash = None;
        let mut seed = None;
        for kv in parts {
            match kv.split_once('=') {
                Some(("task", v)) => task = Some(v.to_string()),
                Some(("config_hash", v)) => config_hash = Some(v.to_string()),
                Some(("seed", v)) => {
                    seed = Some(v.parse::<u64>().map_err(|_| corrupt("bad seed in header"))?)
                }
                _ => return Err(corrupt(&format!("unrecognized header field {kv}"))),
            }
        }
        Ok(RunMeta {
            kind,
            task: task.ok_or_else(|| corrupt("header missing task"))?,
            config_hash: config_hash.ok_or_else(|| corrupt("header missing config_hash"))?,
            seed: seed.ok_or_else(|| corrupt("header missing seed"))?,
        })
    }
}

/// Read just the header line of an artifact.
pub fn read_meta(path: &Path) -> Result<RunMeta, IntegrityError> {
    let file = File::open(path).map_err(|e| IntegrityError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut line = String::new();
    BufReader::new(file).read_line(&mut line).map_err(|e| IntegrityError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    RunMeta::parse(line.trim_end(), path)
}

/// Open a writer with the artifact header line and the column header
/// already written, so even a row-less file documents its schema.
fn open_csv_writer(
    path: &Path,
    meta: &RunMeta,
    columns: &[&str],
) -> Result<csv::Writer<BufWriter<File>>, IntegrityError> {
    let file = File::create(path).map_err(|e| IntegrityError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut buf = BufWriter::new(file);
    buf.write_all(meta.header_line().as_bytes()).map_err(|e| IntegrityError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(buf);
    if !columns.is_empty() {
        writer.write_record(columns).map_err(|e| IntegrityError::Corrupt {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    }
    Ok(writer)
}

const STATS_COLUMNS: [&str; 16] = [
    "step", "population", "births", "deaths", "income", "metabolic", "signaling", "repro_out",
    "repro_in", "death_loss", "residual", "mean_energy", "mean_neighbors",
    "cooperator_fraction", "efficiency", "relocations",
];
const BOIDS_STATS_COLUMNS: [&str; 4] = ["step", "population", "mean_alignment", "mean_speed"];
const AGENT_COLUMNS: [&str; 9] =
    ["step", "id", "x", "y", "z", "energy", "action", "income", "neighbors"];
const LINEAGE_COLUMNS: [&str; 5] = ["id", "parent", "birth_step", "death_step", "genotype_hash"];

fn open_csv_reader(
    path: &Path,
    expected_kind: &str,
) -> Result<(RunMeta, csv::Reader<BufReader<File>>), IntegrityError> {
    let meta = read_meta(path)?;
    if meta.kind != expected_kind {
        return Err(IntegrityError::Corrupt {
            path: path.display().to_string(),
            detail: format!("expected a {expected_kind} artifact, found {}", meta.kind),
        });
    }
    let file = File::open(path).map_err(|e| IntegrityError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(BufReader::new(file));
    Ok((meta, reader))
}

fn row_err(path: &Path, e: impl std::fmt::Display) -> IntegrityError {
    IntegrityError::Corrupt { path: path.display().to_string(), detail: e.to_string() }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct StatsRow {
    pub step: u64,
    pub population: u64,
    pub births: u32,
    pub deaths: u32,
    pub income: f64,
    pub metabolic: f64,
    pub signaling: f64,
    pub repro_out: f64,
    pub repro_in: f64,
    pub death_loss: f64,
    pub residual: f64,
    pub mean_energy: f64,
    pub mean_neighbors: f64,
    pub cooperator_fraction: f64,
    pub efficiency: f64,
    pub relocations: u64,
}

impl StatsRow {
    pub fn from_stats(s: &StepStats) -> Self {
        StatsRow {
            step: s.step,
            population: s.population,
            births: s.ledger.births,
            deaths: s.ledger.deaths,
            income: s.ledger.income,
            metabolic: s.ledger.metabolic,
            signaling: s.ledger.signaling,
            repro_out: s.ledger.repro_out,
            repro_in: s.ledger.repro_in,
            death_loss: s.ledger.death_loss,
            residual: s.residual,
            mean_energy: s.mean_energy,
            mean_neighbors: s.mean_neighbors,
            cooperator_fraction: s.cooperator_fraction,
            efficiency: s.efficiency,
            relocations: s.relocations,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct AgentRow {
    pub step: u64,
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub energy: f64,
    pub action: u8,
    pub income: f64,
    pub neighbors: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LineageRow {
    pub id: u64,
    pub parent: Option<u64>,
    pub birth_step: u64,
    pub death_step: Option<u64>,
    pub genotype_hash: String,
}

impl LineageRow {
    pub fn from_record(r: &LineageRecord) -> Self {
        LineageRow {
            id: r.id,
            parent: r.parent,
            birth_step: r.birth_step,
            death_step: r.death_step,
            genotype_hash: format!("{:016x}", r.genotype_hash),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct BoidsStatsRow {
    pub step: u64,
    pub population: u64,
    pub mean_alignment: f64,
    pub mean_speed: f64,
}

/// All log writers of one run directory.
pub struct RunLogs {
    dir: PathBuf,
    stats: Option<csv::Writer<BufWriter<File>>>,
    agents: Option<csv::Writer<BufWriter<File>>>,
    genotypes: Option<csv::Writer<BufWriter<File>>>,
    lineage: Option<csv::Writer<BufWriter<File>>>,
    genotype_width: usize,
}

impl RunLogs {
    pub fn create(
        dir: &Path,
        meta_task: &str,
        config_hash: &str,
        seed: u64,
        genotype_width: usize,
        stateless: bool,
    ) -> Result<Self, IntegrityError> {
        std::fs::create_dir_all(dir).map_err(|e| IntegrityError::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        let meta = |kind: &str| RunMeta::new(kind, meta_task, config_hash, seed);
        let stats_kind = if stateless { "boids_stats" } else { "stats" };
        let stats_columns: &[&str] =
            if stateless { &BOIDS_STATS_COLUMNS } else { &STATS_COLUMNS };
        let genotype_columns: Vec<String> = ["step".to_string(), "id".to_string()]
            .into_iter()
            .chain((0..genotype_width).map(|i| format!("w{i}")))
            .collect();
        let genotype_column_refs: Vec<&str> =
            genotype_columns.iter().map(String::as_str).collect();
        Ok(RunLogs {
            dir: dir.to_path_buf(),
            stats: Some(open_csv_writer(&dir.join(STATS_FILE), &meta(stats_kind), stats_columns)?),
            agents: if stateless {
                None
            } else {
                Some(open_csv_writer(&dir.join(AGENTS_FILE), &meta("agents"), &AGENT_COLUMNS)?)
            },
            genotypes: if stateless {
                None
            } else {
                Some(open_csv_writer(
                    &dir.join(GENOTYPES_FILE),
                    &meta("genotypes"),
                    &genotype_column_refs,
                )?)
            },
            lineage: if stateless {
                None
            } else {
                Some(open_csv_writer(&dir.join(LINEAGE_FILE), &meta("lineage"), &LINEAGE_COLUMNS)?)
            },
            genotype_width,
        })
    }

    fn io_err(&self, e: impl std::fmt::Display) -> IntegrityError {
        IntegrityError::Corrupt { path: self.dir.display().to_string(), detail: e.to_string() }
    }

    pub fn write_stats(&mut self, row: &StatsRow) -> Result<(), IntegrityError> {
        if let Some(w) = self.stats.as_mut() {
            w.serialize(row).map_err(|e| IntegrityError::Corrupt {
                path: STATS_FILE.to_string(),
                detail: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn write_boids_stats(&mut self, row: &BoidsStatsRow) -> Result<(), IntegrityError> {
        if let Some(w) = self.stats.as_mut() {
            w.serialize(row).map_err(|e| IntegrityError::Corrupt {
                path: STATS_FILE.to_string(),
                detail: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn write_agents(&mut self, step: u64, agents: &[Agent]) -> Result<(), IntegrityError> {
        if let Some(w) = self.agents.as_mut() {
            for a in agents.iter().filter(|a| a.alive) {
                let row = AgentRow {
                    step,
                    id: a.id,
                    x: a.pose.position.x,
                    y: a.pose.position.y,
                    z: a.pose.position.z,
                    energy: a.energy,
                    action: u8::from(a.action),
                    income: a.last_income,
                    neighbors: a.neighbor_count,
                };
                w.serialize(row).map_err(|e| IntegrityError::Corrupt {
                    path: AGENTS_FILE.to_string(),
                    detail: e.to_string(),
                })?;
            }
        }
        Ok(())
    }

    pub fn write_genotypes(&mut self, step: u64, agents: &[Agent]) -> Result<(), IntegrityError> {
        let width = self.genotype_width;
        if let Some(w) = self.genotypes.as_mut() {
            for a in agents.iter().filter(|a| a.alive) {
                debug_assert_eq!(a.genotype.len(), width);
                let mut record = Vec::with_capacity(width + 2);
                record.push(step.to_string());
                record.push(a.id.to_string());
                let mut buf = ryu_buffer();
                for v in &a.genotype.weights {
                    record.push(buf.format(*v).to_string());
                }
                w.write_record(&record).map_err(|e| IntegrityError::Corrupt {
                    path: GENOTYPES_FILE.to_string(),
                    detail: e.to_string(),
                })?;
            }
        }
        Ok(())
    }

    /// Stream a finalized lineage row (agent died, or run ended).
    pub fn write_lineage(&mut self, record: &LineageRecord) -> Result<(), IntegrityError> {
        if let Some(w) = self.lineage.as_mut() {
            w.serialize(LineageRow::from_record(record)).map_err(|e| IntegrityError::Corrupt {
                path: LINEAGE_FILE.to_string(),
                detail: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), IntegrityError> {
        if let Some(w) = self.stats.as_mut() {
            w.flush().map_err(|e| self.io_err(e))?;
        }
        if let Some(w) = self.agents.as_mut() {
            w.flush().map_err(|e| self.io_err(e))?;
        }
        if let Some(w) = self.genotypes.as_mut() {
            w.flush().map_err(|e| self.io_err(e))?;
        }
        if let Some(w) = self.lineage.as_mut() {
            w.flush().map_err(|e| self.io_err(e))?;
        }
        Ok(())
    }
}

// csv already depends on ryu for float output; reuse the same shortest
// round-trip formatting for the wide genotype rows.
fn ryu_buffer() -> ryu::Buffer {
    ryu::Buffer::new()
}

pub fn read_stats(path: &Path) -> Result<(RunMeta, Vec<StatsRow>), IntegrityError> {
    let (meta, mut reader) = open_csv_reader(path, "stats")?;
    let mut rows = Vec::new();
    let mut last_step = 0;
    for row in reader.deserialize::<StatsRow>() {
        let row = row.map_err(|e| row_err(path, e))?;
        if row.step < last_step {
            return Err(row_err(path, format!("steps not monotone at {}", row.step)));
        }
        last_step = row.step;
        rows.push(row);
    }
    Ok((meta, rows))
}

pub fn read_boids_stats(path: &Path) -> Result<(RunMeta, Vec<BoidsStatsRow>), IntegrityError> {
    let (meta, mut reader) = open_csv_reader(path, "boids_stats")?;
    let mut rows = Vec::new();
    for row in reader.deserialize::<BoidsStatsRow>() {
        rows.push(row.map_err(|e| row_err(path, e))?);
    }
    Ok((meta, rows))
}

pub fn read_agents(path: &Path) -> Result<(RunMeta, Vec<AgentRow>), IntegrityError> {
    let (meta, mut reader) = open_csv_reader(path, "agents")?;
    let mut rows = Vec::new();
    let mut last_step = 0;
    for row in reader.deserialize::<AgentRow>() {
        let row = row.map_err(|e| row_err(path, e))?;
        if row.step < last_step {
            return Err(row_err(path, format!("steps not monotone at {}", row.step)));
        }
        last_step = row.step;
        rows.push(row);
    }
    Ok((meta, rows))
}

/// Genotype dumps: `(meta, steps, ids, row-major weight matrix)`.
pub fn read_genotypes(
    path: &Path,
) -> Result<(RunMeta, Vec<u64>, Vec<u64>, Vec<Vec<f64>>), IntegrityError> {
    let (meta, mut reader) = open_csv_reader(path, "genotypes")?;
    let mut steps = Vec::new();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| row_err(path, e))?;
        if record.len() < 3 {
            return Err(row_err(path, "genotype row too short"));
        }
        let step: u64 = record[0].parse().map_err(|e| row_err(path, e))?;
        let id: u64 = record[1].parse().map_err(|e| row_err(path, e))?;
        let weights: Vec<f64> = record
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| row_err(path, e))?;
        match width {
            None => width = Some(weights.len()),
            Some(w) if w != weights.len() => {
                return Err(row_err(path, "inconsistent genotype width"))
            }
            _ => {}
        }
        steps.push(step);
        ids.push(id);
        rows.push(weights);
    }
    Ok((meta, steps, ids, rows))
}

pub fn read_lineage(path: &Path) -> Result<(RunMeta, Vec<LineageRecord>), IntegrityError> {
    let (meta, mut reader) = open_csv_reader(path, "lineage")?;
    let mut rows = Vec::new();
    for row in reader.deserialize::<LineageRow>() {
        let row = row.map_err(|e| row_err(path, e))?;
        let hash = u64::from_str_radix(&row.genotype_hash, 16)
            .map_err(|e| row_err(path, e))?;
        rows.push(LineageRecord {
            id: row.id,
            parent: row.parent,
            birth_step: row.birth_step,
            death_step: row.death_step,
            genotype_hash: hash,
        });
    }
    let mut seen = std::collections::HashSet::new();
    for r in &rows {
        if !seen.insert(r.id) {
            return Err(row_err(path, format!("duplicate lineage id {}", r.id)));
        }
    }
    Ok((meta, rows))
}

/// Require that all artifacts of a run carry the same config hash.
pub fn verify_matching_hashes(metas: &[(&Path, &RunMeta)]) -> Result<(), IntegrityError> {
    if let Some((_, first)) = metas.first() {
        for (path, meta) in metas.iter().skip(1) {
            if meta.config_hash != first.config_hash {
                return Err(IntegrityError::HashMismatch {
                    path: path.display().to_string(),
                    found: meta.config_hash.clone(),
                    expected: first.config_hash.clone(),
                });
            }
        }
    }
    Ok(())
}
