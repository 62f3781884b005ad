//! Versioned binary snapshots.
//!
//! Little-endian sections, each with a CRC32 trailer, holding everything a
//! run needs to continue bit-exactly: agent state including controller
//! activations and stream positions, world stream position, sources, and
//! the id counter. Resuming from a snapshot and running to step N produces
//! the same log rows as an uninterrupted run over the overlapping steps.

use crate::boids::BoidsSim;
use crate::config::RunConfig;
use crate::controller::{ControllerState, Genotype, CONTEXT, HIDDEN, OUTPUTS};
use crate::engine::Simulation;
use crate::error::IntegrityError;
use crate::evolution::Agent;
use crate::rng::Stream;
use crate::tasks::{EnergySource, TaskKind};
use crate::vec3::Vec3;
use crate::world::Pose;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

const MAGIC: &[u8; 4] = b"NBSN";
const VERSION: u32 = 1;

const TAG_HEADER: u32 = 1;
const TAG_WORLD: u32 = 2;
const TAG_AGENTS: u32 = 3;
const TAG_BOIDS: u32 = 4;

const NO_PARENT: u64 = u64::MAX;

fn crc_table() -> &'static [u32; 256] {
    static TABLE: OnceLock<[u32; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [0u32; 256];
        for (i, slot) in table.iter_mut().enumerate() {
            let mut c = i as u32;
            for _ in 0..8 {
                c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            }
            *slot = c;
        }
        table
    })
}

pub fn crc32(bytes: &[u8]) -> u32 {
    let table = crc_table();
    let mut c = 0xFFFF_FFFFu32;
    for &b in bytes {
        c = table[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    c ^ 0xFFFF_FFFF
}

struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn new() -> Self {
        Encoder { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn vec3(&mut self, v: Vec3) {
        self.f64(v.x);
        self.f64(v.y);
        self.f64(v.z);
    }
    fn bytes(&mut self, v: &[u8]) {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
    }
}

struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Decoder<'a> {
    fn corrupt(&self, detail: &str) -> IntegrityError {
        IntegrityError::Corrupt { path: self.path.clone(), detail: detail.to_string() }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], IntegrityError> {
        if self.pos + n > self.buf.len() {
            return Err(self.corrupt("section truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, IntegrityError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, IntegrityError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, IntegrityError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, IntegrityError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u128(&mut self) -> Result<u128, IntegrityError> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, IntegrityError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn vec3(&mut self) -> Result<Vec3, IntegrityError> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }
    fn bytes(&mut self) -> Result<&'a [u8], IntegrityError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

#[derive(Debug)]
pub enum SnapshotState {
    Stateful {
        agents: Vec<Agent>,
        next_id: u64,
        world_word_pos: u128,
        sources: Vec<EnergySource>,
        relocations: u64,
    },
    Stateless {
        positions: Vec<Vec3>,
        velocities: Vec<Vec3>,
        world_word_pos: u128,
    },
}

#[derive(Debug)]
pub struct Snapshot {
    pub step: u64,
    pub seed: u64,
    pub config_hash: String,
    pub task: TaskKind,
    pub shape_inputs: u16,
    pub state: SnapshotState,
}

fn task_tag(task: TaskKind) -> u8 {
    match task {
        TaskKind::Foraging => 0,
        TaskKind::Pd => 1,
        TaskKind::NoisyForaging => 2,
        TaskKind::Stateless => 3,
    }
}

fn task_from_tag(tag: u8) -> Option<TaskKind> {
    match tag {
        0 => Some(TaskKind::Foraging),
        1 => Some(TaskKind::Pd),
        2 => Some(TaskKind::NoisyForaging),
        3 => Some(TaskKind::Stateless),
        _ => None,
    }
}

fn write_section(out: &mut Vec<u8>, tag: u32, payload: &[u8]) {
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(&crc32(payload).to_le_bytes());
}

fn header_section(step: u64, seed: u64, config_hash: &str, task: TaskKind, inputs: u16) -> Vec<u8> {
    let mut e = Encoder::new();
    e.u64(step);
    e.u64(seed);
    e.bytes(config_hash.as_bytes());
    e.u8(task_tag(task));
    e.u16(inputs);
    e.buf
}

/// Serialize a stateful simulation.
pub fn encode_simulation(sim: &Simulation) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());

    let header = header_section(
        sim.step,
        sim.config.run.seed,
        &sim.config_hash,
        sim.config.run.task,
        sim.shape().inputs as u16,
    );
    write_section(&mut out, TAG_HEADER, &header);

    let mut w = Encoder::new();
    w.u64(sim.next_id);
    w.u128(sim.world_stream.word_pos());
    w.u64(sim.relocations);
    w.u32(sim.sources.len() as u32);
    for s in &sim.sources {
        w.vec3(s.center);
        w.f64(s.radius);
        w.f64(s.income_rate);
    }
    write_section(&mut out, TAG_WORLD, &w.buf);

    let alive: Vec<&Agent> = sim.agents.iter().filter(|a| a.alive).collect();
    let mut a = Encoder::new();
    a.u64(alive.len() as u64);
    for agent in alive {
        a.u64(agent.id);
        a.u64(agent.parent.unwrap_or(NO_PARENT));
        a.u64(agent.birth_step);
        a.vec3(agent.pose.position);
        a.vec3(agent.pose.heading);
        a.vec3(agent.pose.up);
        a.f64(agent.energy);
        a.f64(agent.signal_out[0]);
        a.f64(agent.signal_out[1]);
        a.u8(u8::from(agent.action));
        a.u64(agent.clamp_events);
        a.u128(agent.stream.word_pos());
        for v in agent.state.context {
            a.f64(v);
        }
        for v in agent.state.hidden {
            a.f64(v);
        }
        for v in agent.state.outputs {
            a.f64(v);
        }
        for v in &agent.genotype.weights {
            a.f64(*v);
        }
    }
    write_section(&mut out, TAG_AGENTS, &a.buf);
    out
}

/// Serialize a stateless boids simulation.
pub fn encode_boids(sim: &BoidsSim, seed: u64, config_hash: &str) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let header = header_section(sim.step, seed, config_hash, TaskKind::Stateless, 0);
    write_section(&mut out, TAG_HEADER, &header);

    let mut b = Encoder::new();
    b.u128(sim.world_stream.word_pos());
    b.u64(sim.positions.len() as u64);
    for p in &sim.positions {
        b.vec3(*p);
    }
    for v in &sim.velocities {
        b.vec3(*v);
    }
    write_section(&mut out, TAG_BOIDS, &b.buf);
    out
}

pub fn write_snapshot_file(path: &Path, bytes: &[u8]) -> Result<(), IntegrityError> {
    let mut file = std::fs::File::create(path).map_err(|e| IntegrityError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    file.write_all(bytes).map_err(|e| IntegrityError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, IntegrityError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| IntegrityError::Io { path: path.display().to_string(), source: e })?;
    decode_snapshot(&bytes, &path.display().to_string())
}

pub fn decode_snapshot(bytes: &[u8], path: &str) -> Result<Snapshot, IntegrityError> {
    let corrupt = |detail: &str| IntegrityError::Corrupt {
        path: path.to_string(),
        detail: detail.to_string(),
    };
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(corrupt(&format!("unsupported snapshot version {version}")));
    }

    // Collect sections.
    let mut pos = 8usize;
    let mut header = None;
    let mut world = None;
    let mut agents = None;
    let mut boids = None;
    while pos < bytes.len() {
        if pos + 12 > bytes.len() {
            return Err(corrupt("truncated section header"));
        }
        let tag = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        let len = u64::from_le_bytes(bytes[pos + 4..pos + 12].try_into().unwrap()) as usize;
        pos += 12;
        if pos + len + 4 > bytes.len() {
            return Err(corrupt("truncated section payload"));
        }
        let payload = &bytes[pos..pos + len];
        let stored_crc = u32::from_le_bytes(bytes[pos + len..pos + len + 4].try_into().unwrap());
        if crc32(payload) != stored_crc {
            return Err(corrupt(&format!("CRC mismatch in section {tag}")));
        }
        pos += len + 4;
        match tag {
            TAG_HEADER => header = Some(payload),
            TAG_WORLD => world = Some(payload),
            TAG_AGENTS => agents = Some(payload),
            TAG_BOIDS => boids = Some(payload),
            _ => return Err(corrupt(&format!("unknown section {tag}"))),
        }
    }

    let mut h = Decoder { buf: header.ok_or_else(|| corrupt("missing header"))?, pos: 0, path: path.to_string() };
    let step = h.u64()?;
    let seed = h.u64()?;
    let config_hash = String::from_utf8(h.bytes()?.to_vec())
        .map_err(|_| corrupt("config hash not utf-8"))?;
    let task = task_from_tag(h.u8()?).ok_or_else(|| corrupt("unknown task tag"))?;
    let shape_inputs = h.u16()?;

    let state = if task == TaskKind::Stateless {
        let mut b = Decoder {
            buf: boids.ok_or_else(|| corrupt("missing boids section"))?,
            pos: 0,
            path: path.to_string(),
        };
        let world_word_pos = b.u128()?;
        let count = b.u64()? as usize;
        let mut positions = Vec::with_capacity(count);
        for _ in 0..count {
            positions.push(b.vec3()?);
        }
        let mut velocities = Vec::with_capacity(count);
        for _ in 0..count {
            velocities.push(b.vec3()?);
        }
        if !b.done() {
            return Err(corrupt("trailing bytes in boids section"));
        }
        SnapshotState::Stateless { positions, velocities, world_word_pos }
    } else {
        let mut w = Decoder {
            buf: world.ok_or_else(|| corrupt("missing world section"))?,
            pos: 0,
            path: path.to_string(),
        };
        let next_id = w.u64()?;
        let world_word_pos = w.u128()?;
        let relocations = w.u64()?;
        let source_count = w.u32()? as usize;
        let mut sources = Vec::with_capacity(source_count);
        for _ in 0..source_count {
            sources.push(EnergySource {
                center: w.vec3()?,
                radius: w.f64()?,
                income_rate: w.f64()?,
            });
        }

        let mut a = Decoder {
            buf: agents.ok_or_else(|| corrupt("missing agents section"))?,
            pos: 0,
            path: path.to_string(),
        };
        let count = a.u64()? as usize;
        let weight_count = crate::controller::NetworkShape { inputs: shape_inputs as usize }
            .weight_count();
        let mut decoded = Vec::with_capacity(count);
        for _ in 0..count {
            let id = a.u64()?;
            let parent_raw = a.u64()?;
            let birth_step = a.u64()?;
            let position = a.vec3()?;
            let heading = a.vec3()?;
            let up = a.vec3()?;
            let energy = a.f64()?;
            let signal_out = [a.f64()?, a.f64()?];
            let action = a.u8()? != 0;
            let clamp_events = a.u64()?;
            let word_pos = a.u128()?;
            let mut context = [0.0; CONTEXT];
            for v in context.iter_mut() {
                *v = a.f64()?;
            }
            let mut hidden = [0.0; HIDDEN];
            for v in hidden.iter_mut() {
                *v = a.f64()?;
            }
            let mut outputs = [0.0; OUTPUTS];
            for v in outputs.iter_mut() {
                *v = a.f64()?;
            }
            let mut weights = Vec::with_capacity(weight_count);
            for _ in 0..weight_count {
                weights.push(a.f64()?);
            }
            decoded.push(Agent {
                id,
                parent: if parent_raw == NO_PARENT { None } else { Some(parent_raw) },
                birth_step,
                // Restore the frame verbatim: re-orthonormalizing here
                // would perturb low bits and break bit-exact resumption.
                pose: Pose { position, heading, up },
                energy,
                genotype: Genotype { weights },
                state: ControllerState { context, hidden, outputs },
                signal_out,
                action,
                alive: true,
                stream: Stream::restore(seed, id, birth_step, word_pos),
                neighbor_count: 0,
                last_income: 0.0,
                clamp_events,
            });
        }
        if !a.done() {
            return Err(corrupt("trailing bytes in agents section"));
        }
        SnapshotState::Stateful { agents: decoded, next_id, world_word_pos, sources, relocations }
    };

    Ok(Snapshot { step, seed, config_hash, task, shape_inputs, state })
}

/// Rebuild a stateful simulation; the config must hash to the value the
/// snapshot was taken under.
pub fn resume_simulation(config: RunConfig, snapshot: Snapshot, path: &str) -> Result<Simulation, IntegrityError> {
    let expected = config.hash();
    if snapshot.config_hash != expected {
        return Err(IntegrityError::HashMismatch {
            path: path.to_string(),
            found: snapshot.config_hash,
            expected,
        });
    }
    if snapshot.task != config.run.task {
        return Err(IntegrityError::Corrupt {
            path: path.to_string(),
            detail: format!(
                "snapshot task {} does not match config task {}",
                snapshot.task.as_str(),
                config.run.task.as_str()
            ),
        });
    }
    match snapshot.state {
        SnapshotState::Stateful { agents, next_id, world_word_pos, sources, relocations } => {
            Ok(Simulation::restore(
                config,
                snapshot.step,
                agents,
                next_id,
                world_word_pos,
                sources,
                relocations,
            ))
        }
        SnapshotState::Stateless { .. } => Err(IntegrityError::Corrupt {
            path: path.to_string(),
            detail: "stateless snapshot passed to stateful resume".to_string(),
        }),
    }
}

pub fn resume_boids(config: &RunConfig, snapshot: Snapshot, path: &str) -> Result<BoidsSim, IntegrityError> {
    let expected = config.hash();
    if snapshot.config_hash != expected {
        return Err(IntegrityError::HashMismatch {
            path: path.to_string(),
            found: snapshot.config_hash,
            expected,
        });
    }
    match snapshot.state {
        SnapshotState::Stateless { positions, velocities, world_word_pos } => Ok(BoidsSim::restore(
            config.boids_params(),
            config.run.seed,
            snapshot.step,
            positions,
            velocities,
            world_word_pos,
        )),
        SnapshotState::Stateful { .. } => Err(IntegrityError::Corrupt {
            path: path.to_string(),
            detail: "stateful snapshot passed to stateless resume".to_string(),
        }),
    }
}
