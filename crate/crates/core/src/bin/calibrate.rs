//! Scratch harness for tuning study presets. Not shipped.

use neuroboids::config::RunConfig;
use neuroboids::engine::Simulation;
use std::time::Instant;

struct Metrics {
    first_neighbors: f64,
    last_neighbors: f64,
    final_pop: u64,
    extinct_at: Option<u64>,
    mean_eff_last_third: f64,
    peak_coop: f64,
    assort_at_peak: f64,
    wall: f64,
}

fn run_one(mut config: RunConfig, seed: u64, muted: bool, steps: u64) -> Metrics {
    config.run.seed = seed;
    config.run.steps = steps;
    config.signals.muted = muted;
    let started = Instant::now();
    let mut sim = Simulation::new(config.clone());
    let mut neighbors = Vec::new();
    let mut eff = Vec::new();
    let mut coop_steps: Vec<(u64, f64)> = Vec::new();
    let mut snapshots: Vec<(u64, Vec<(f64, f64, f64, bool)>)> = Vec::new();
    let mut extinct_at = None;
    while sim.step < steps {
        let stats = sim.step().unwrap();
        if stats.step % 100 == 0 {
            neighbors.push(stats.mean_neighbors);
            eff.push(stats.efficiency);
            coop_steps.push((stats.step, stats.cooperator_fraction));
            if config.run.task == neuroboids::tasks::TaskKind::Pd {
                snapshots.push((
                    stats.step,
                    sim.agents
                        .iter()
                        .filter(|a| a.alive)
                        .map(|a| (a.pose.position.x, a.pose.position.y, a.pose.position.z, a.action))
                        .collect(),
                ));
                if snapshots.len() > 40 {
                    // keep memory bounded: retain every 4th older snapshot
                    let keep: Vec<_> = snapshots
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| i % 4 == 0 || *i + 10 >= snapshots.len())
                        .map(|(_, s)| s.clone())
                        .collect();
                    snapshots = keep;
                }
            }
        }
        if stats.extinct {
            extinct_at = Some(stats.step);
            break;
        }
    }
    let n = neighbors.len().max(1);
    let fifth = (n / 5).max(1);
    let first_neighbors = neighbors.iter().take(fifth).sum::<f64>() / fifth as f64;
    let last_neighbors = neighbors.iter().rev().take(fifth).sum::<f64>() / fifth as f64;
    let third = (eff.len() / 3).max(1);
    let mean_eff_last_third = eff.iter().rev().take(third).sum::<f64>() / third as f64;

    let (peak_step, peak_coop) = coop_steps
        .iter()
        .copied()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap_or((0, 0.0));
    let assort_at_peak = snapshots
        .iter()
        .min_by_key(|(s, _)| s.abs_diff(peak_step))
        .map(|(_, agents)| {
            let positions: Vec<neuroboids::Vec3> = agents
                .iter()
                .map(|&(x, y, z, _)| neuroboids::Vec3::new(x, y, z))
                .collect();
            let actions: Vec<bool> = agents.iter().map(|&(_, _, _, a)| a).collect();
            neuroboids::analysis::assortment(
                &positions,
                &actions,
                config.pd.interaction_radius,
                config.world.box_length,
            )
        })
        .unwrap_or(0.0);

    Metrics {
        first_neighbors,
        last_neighbors,
        final_pop: sim.population() as u64,
        extinct_at,
        mean_eff_last_third,
        peak_coop,
        assort_at_peak,
        wall: started.elapsed().as_secs_f64(),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let config_path = args.get(1).expect("usage: calibrate <config> <steps> <seeds> [muted]");
    let steps: u64 = args.get(2).expect("steps").parse().unwrap();
    let seeds: u64 = args.get(3).expect("seeds").parse().unwrap();
    let seed_base: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0);
    let muted_too: bool = args.get(4).map(|s| s == "muted").unwrap_or(false);
    let config = RunConfig::load(std::path::Path::new(config_path)).unwrap();

    let mut jobs: Vec<(u64, bool)> = Vec::new();
    for seed in seed_base..seed_base + seeds {
        jobs.push((seed, false));
        if muted_too {
            jobs.push((seed, true));
        }
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..2 {
            scope.spawn(|| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
                loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= jobs.len() {
                        break;
                    }
                    let (seed, muted) = jobs[i];
                    let m = pool.install(|| run_one(config.clone(), seed, muted, steps));
                    results.lock().unwrap().push((seed, muted, m));
                }
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|&(s, m, _)| (s, m));
    println!("seed,muted,first_nb,last_nb,final_pop,extinct_at,eff_last3,peak_coop,assort,wall_s");
    for (seed, muted, m) in results {
        println!(
            "{seed},{},{:.3},{:.3},{},{},{:.5},{:.3},{:.3},{:.1}",
            muted as u8,
            m.first_neighbors,
            m.last_neighbors,
            m.final_pop,
            m.extinct_at.map(|s| s.to_string()).unwrap_or_default(),
            m.mean_eff_last_third,
            m.peak_coop,
            m.assort_at_peak,
            m.wall
        );
    }
}
