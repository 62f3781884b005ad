//! Signal-propagation benchmark: naive all-pairs summation against the
//! treecode over a size sweep at constant emitter density, with accuracy
//! measured per bin against the exact oracle on probe receivers.

use crate::rng::Stream;
use crate::signals::{sense_exact_skip, Emitter, SenseParams};
use crate::treecode::{SignalTree, TreeScratch, DEFAULT_LEAF_CAPACITY};
use crate::vec3::Vec3;
use crate::world::Pose;
use rand::Rng;
use rayon::prelude::*;
use std::io::Write;
use std::time::Instant;

#[derive(Clone, Debug)]
pub struct BenchParams {
    pub sizes: Vec<usize>,
    pub theta: f64,
    /// Emitters per cubic unit; the box grows with N so local density and
    /// the cutoff neighborhood stay constant.
    pub density: f64,
    pub cutoff: f64,
    pub min_distance: f64,
    pub reps: usize,
    /// Probe receivers used for the error measurement.
    pub probes: usize,
    pub seed: u64,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            sizes: (11..=17).map(|p| 1usize << p).collect(),
            theta: 0.5,
            density: 0.002,
            cutoff: 25.0,
            min_distance: 1.0,
            reps: 3,
            probes: 100,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub n: usize,
    pub mode: &'static str,
    pub theta: f64,
    pub ms_per_step: f64,
    pub p99_rel_error: f64,
}

fn random_emitters(n: usize, l: f64, seed: u64) -> Vec<Emitter> {
    let mut s = Stream::new(seed, 0xBE7C, 0);
    (0..n)
        .map(|_| Emitter {
            position: Vec3::new(
                s.rng().random::<f64>() * l,
                s.rng().random::<f64>() * l,
                s.rng().random::<f64>() * l,
            ),
            intensity: [s.rng().random::<f64>(), s.rng().random::<f64>()],
        })
        .collect()
}

fn pose_of(e: &Emitter) -> Pose {
    Pose::new(e.position, Vec3::X, Vec3::Z)
}

/// Relative per-bin errors of the treecode against the exact oracle on a
/// sample of receivers; bins where the oracle is (near) zero are skipped.
pub fn tree_errors(
    emitters: &[Emitter],
    params: &SenseParams,
    theta: f64,
    probes: usize,
    seed: u64,
) -> Vec<f64> {
    let tree = SignalTree::build(emitters.to_vec(), params.box_length, DEFAULT_LEAF_CAPACITY);
    let mut s = Stream::new(seed, 0xE88, 0);
    let idx: Vec<usize> =
        (0..probes).map(|_| (s.rng().random::<u64>() % emitters.len() as u64) as usize).collect();
    idx.par_iter()
        .map_init(TreeScratch::default, |scratch, &i| {
            let pose = pose_of(&emitters[i]);
            let exact = sense_exact_skip(&pose, emitters, i, params);
            let approx = tree.sense(&pose, Some(i as u32), theta, params, scratch);
            let mut errors = Vec::with_capacity(12);
            for d in 0..6 {
                for c in 0..2 {
                    let e = exact.values[d][c];
                    let t = approx.values[d][c];
                    if e > 1e-12 {
                        errors.push((t - e).abs() / e);
                    }
                }
            }
            errors
        })
        .flatten()
        .collect()
}

pub fn percentile(mut values: Vec<f64>, q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((values.len() as f64 * q).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

fn time_pairwise(emitters: &[Emitter], params: &SenseParams, reps: usize) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..reps {
        let start = Instant::now();
        let total: f64 = (0..emitters.len())
            .into_par_iter()
            .map(|i| sense_exact_skip(&pose_of(&emitters[i]), emitters, i, params).total())
            .sum();
        std::hint::black_box(total);
        best = best.min(start.elapsed().as_secs_f64() * 1e3);
    }
    best
}

fn time_tree(emitters: &[Emitter], params: &SenseParams, theta: f64, reps: usize) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..reps {
        let start = Instant::now();
        let tree =
            SignalTree::build(emitters.to_vec(), params.box_length, DEFAULT_LEAF_CAPACITY);
        let total: f64 = (0..emitters.len())
            .into_par_iter()
            .map_init(TreeScratch::default, |scratch, i| {
                tree.sense(&pose_of(&emitters[i]), Some(i as u32), theta, params, scratch).total()
            })
            .sum();
        std::hint::black_box(total);
        best = best.min(start.elapsed().as_secs_f64() * 1e3);
    }
    best
}

/// Run the full sweep; two rows (pairwise, tree) per size.
pub fn run_sweep(params: &BenchParams) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for &n in &params.sizes {
        let l = (n as f64 / params.density).cbrt();
        assert!(
            params.cutoff < l / 2.0,
            "cutoff {} must stay below half the box {l}",
            params.cutoff
        );
        let emitters = random_emitters(n, l, params.seed);
        let sense = SenseParams {
            box_length: l,
            cutoff: params.cutoff,
            min_distance: params.min_distance,
        };
        let pairwise_ms = time_pairwise(&emitters, &sense, params.reps);
        rows.push(BenchRow {
            n,
            mode: "pairwise",
            theta: 0.0,
            ms_per_step: pairwise_ms,
            p99_rel_error: 0.0,
        });
        let tree_ms = time_tree(&emitters, &sense, params.theta, params.reps);
        let errors = tree_errors(&emitters, &sense, params.theta, params.probes, params.seed);
        rows.push(BenchRow {
            n,
            mode: "tree",
            theta: params.theta,
            ms_per_step: tree_ms,
            p99_rel_error: percentile(errors, 0.99),
        });
    }
    rows
}

/// Least-squares slope of `log(ms)` against `log(N)` for one mode.
pub fn scaling_exponent(rows: &[BenchRow], mode: &str) -> f64 {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.mode == mode)
        .map(|r| ((r.n as f64).ln(), r.ms_per_step.max(1e-9).ln()))
        .collect();
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

pub fn write_csv(path: &std::path::Path, rows: &[BenchRow], seed: u64) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "# neuroboids bench v{} task=bench config_hash=0000000000000000 seed={seed}", crate::FORMAT_VERSION)?;
    writeln!(file, "n,mode,theta,ms_per_step,p99_rel_error")?;
    for r in rows {
        writeln!(file, "{},{},{},{},{}", r.n, r.mode, r.theta, r.ms_per_step, r.p99_rel_error)?;
    }
    Ok(())
}
