//! Shared test support: independent oracles and the named property
//! registry that the acceptance suite runs as one gate.

#![allow(dead_code)]


use neuroboids::analysis;
use neuroboids::boids::{self, BoidsSim};
use neuroboids::config::{RunConfig, SignalMode};
use neuroboids::controller::{
    forward, genotype_hash, mutate, random_genotype, ControllerState, Genotype,
    MutationParams, NetworkShape, HIDDEN, OUTPUTS, SIGNAL_INPUTS,
};
use neuroboids::engine::Simulation;
use neuroboids::evolution::{self, EnergyParams, LineageRecord};
use neuroboids::grid::UniformGrid;
use neuroboids::rng::Stream;
use neuroboids::signals::{
    accumulate, direction_bin, emission_cost, sense_exact, sense_exact_skip, Emitter, SenseParams,
    SignalFrame, DIR_BACK, DIR_FRONT, DIR_LEFT, DIR_RIGHT,
};
use neuroboids::tasks::{self, EnergySource, NoiseModel, PdParams, TaskKind};
use neuroboids::treecode::{SignalTree, TreeScratch, DEFAULT_LEAF_CAPACITY};
use neuroboids::vec3::Vec3;
use neuroboids::world::{self, min_image_delta, toroidal_distance, Pose};
use rand::Rng;
use std::f64::consts::{FRAC_PI_2, PI};

pub struct Property {
    pub name: &'static str,
    pub run: fn() -> Result<(), String>,
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

macro_rules! properties {
    ($($f:ident),* $(,)?) => {
        vec![$(Property { name: stringify!($f), run: $f }),*]
    };
}

fn rng(seed: u64) -> Stream {
    Stream::new(seed, 0xFEED, 0)
}

fn random_positions(n: usize, l: f64, seed: u64) -> Vec<Vec3> {
    let mut s = rng(seed);
    (0..n)
        .map(|_| {
            Vec3::new(
                s.rng().random::<f64>() * l,
                s.rng().random::<f64>() * l,
                s.rng().random::<f64>() * l,
            )
        })
        .collect()
}

fn random_emitters(n: usize, l: f64, seed: u64) -> Vec<Emitter> {
    let mut s = rng(seed ^ 0xABCD);
    random_positions(n, l, seed)
        .into_iter()
        .map(|position| Emitter {
            position,
            intensity: [s.rng().random::<f64>(), s.rng().random::<f64>()],
        })
        .collect()
}

fn default_pose(position: Vec3) -> Pose {
    Pose::new(position, Vec3::X, Vec3::Z)
}

fn tiny_config(task: TaskKind) -> RunConfig {
    let mut config = RunConfig::default();
    config.run.task = task;
    config.run.seed = 99;
    config.world.box_length = 200.0;
    config.evolution.initial_population = 50;
    config.evolution.population_cap = 150;
    config.foraging.source_count = 4;
    config.foraging.source_radius = 30.0;
    config
}

// ---------------------------------------------------------------- world --

fn wrap_examples() -> Result<(), String> {
    ensure!(world::wrap1(105.0, 100.0) == 5.0, "wrap(105)");
    ensure!(world::wrap1(0.0, 100.0) == 0.0, "wrap(0)");
    ensure!(world::wrap1(-3.0, 100.0) == 97.0, "wrap(-3)");
    Ok(())
}

fn wrap_stays_in_box() -> Result<(), String> {
    let mut s = rng(1);
    for _ in 0..10_000 {
        let l = 0.1 + s.rng().random::<f64>() * 500.0;
        let x = (s.rng().random::<f64>() - 0.5) * 4.0 * l;
        let w = world::wrap1(x, l);
        ensure!((0.0..l).contains(&w), "wrap({x}, {l}) = {w}");
    }
    Ok(())
}

fn min_image_examples() -> Result<(), String> {
    ensure!(world::min_image1(1.0, 99.0, 100.0) == -2.0, "short way around");
    let z = min_image_delta(Vec3::new(3.0, 4.0, 5.0), Vec3::new(3.0, 4.0, 5.0), 100.0);
    ensure!(z == Vec3::ZERO, "identity");
    ensure!(world::min_image1(0.0, 50.0, 100.0) == -50.0, "half-box tie to -L/2");
    Ok(())
}

fn min_image_symmetry_and_range() -> Result<(), String> {
    let l = 73.0;
    let positions = random_positions(60, l, 2);
    for (i, &a) in positions.iter().enumerate() {
        for &b in positions.iter().skip(i + 1) {
            let ab = toroidal_distance(a, b, l);
            let ba = toroidal_distance(b, a, l);
            ensure!((ab - ba).abs() < 1e-12, "distance not symmetric");
            let d = min_image_delta(a, b, l);
            for c in [d.x, d.y, d.z] {
                ensure!((-l / 2.0..l / 2.0).contains(&c), "component {c} outside [-L/2, L/2)");
            }
            let oracle = oracles::image_distance(a, b, l);
            ensure!((ab - oracle).abs() < 1e-9, "minimum image disagrees with 27-image scan");
        }
    }
    Ok(())
}

fn rotation_neutral_identity() -> Result<(), String> {
    let mut pose = default_pose(Vec3::ZERO);
    let before = pose;
    for _ in 0..1000 {
        pose.apply_rotation(FRAC_PI_2, FRAC_PI_2);
    }
    ensure!(pose.heading == before.heading && pose.up == before.up, "neutral motors moved frame");
    Ok(())
}

fn rotation_matrix_oracle_agrees() -> Result<(), String> {
    // Compose +0.1 then -0.1 yaw with explicit rotation matrices.
    let mut pose = default_pose(Vec3::ZERO);
    pose.apply_rotation(FRAC_PI_2, FRAC_PI_2 + 0.1);
    let up_after = pose.up;
    let yaw_matrix = oracles::Mat3::rotation(up_after, 0.1);
    let expect_restored = yaw_matrix.mul(&oracles::Mat3::rotation(up_after, -0.1));
    let ident = oracles::Mat3::identity();
    for i in 0..3 {
        for j in 0..3 {
            ensure!(
                (expect_restored.0[i][j] - ident.0[i][j]).abs() < 1e-12,
                "oracle matrices do not invert"
            );
        }
    }
    pose.apply_rotation(FRAC_PI_2, FRAC_PI_2 - 0.1);
    ensure!((pose.heading - Vec3::X).norm() < 1e-9, "heading not restored: {:?}", pose.heading);

    // A generic pitch+yaw matches the matrix composition (pitch about
    // right axis, then yaw about the pitched up axis).
    let mut pose = default_pose(Vec3::ZERO);
    let (psi, theta) = (FRAC_PI_2 + 0.3, FRAC_PI_2 - 0.45);
    let right = pose.right();
    let pitch = oracles::Mat3::rotation(right, psi - FRAC_PI_2);
    let up_mid = pitch.mul_vec(Vec3::Z);
    let yaw = oracles::Mat3::rotation(up_mid, theta - FRAC_PI_2);
    let expected_heading = yaw.mul_vec(pitch.mul_vec(Vec3::X));
    pose.apply_rotation(psi, theta);
    ensure!(
        (pose.heading - expected_heading).norm() < 1e-9,
        "heading diverges from matrix oracle"
    );
    Ok(())
}

fn rotation_circle_closure() -> Result<(), String> {
    let speed = 1.0;
    let l = 1000.0;
    let mut pose = default_pose(Vec3::new(500.0, 500.0, 500.0));
    let k = (2.0 * PI / 0.1).ceil() as usize;
    let start = pose.position;
    let mut points = Vec::new();
    for _ in 0..k {
        pose.apply_rotation(FRAC_PI_2, FRAC_PI_2 + 0.1);
        pose.advance(speed, l);
        points.push(pose.position);
    }
    let closure = toroidal_distance(start, pose.position, l);
    ensure!(closure < 0.5 * speed, "trajectory fails to close: gap {closure}");
    // Every point lies on a common circle: equidistant from the centroid.
    let centroid = points.iter().fold(Vec3::ZERO, |acc, &p| acc + p) / points.len() as f64;
    let radii: Vec<f64> = points.iter().map(|&p| (p - centroid).norm()).collect();
    let (lo, hi) = radii
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    ensure!(hi - lo < 0.05 * hi, "radius spread {lo}..{hi} is not a circle");
    Ok(())
}

fn frame_stays_orthonormal_over_a_million_rotations() -> Result<(), String> {
    let mut pose = default_pose(Vec3::ZERO);
    let mut s = rng(3);
    for _ in 0..1_000_000 {
        let psi = s.rng().random::<f64>() * PI;
        let theta = s.rng().random::<f64>() * PI;
        pose.apply_rotation(psi, theta);
    }
    ensure!(pose.heading.dot(pose.up).abs() < 1e-6, "frame lost orthogonality");
    ensure!((pose.heading.norm() - 1.0).abs() < 1e-9, "heading not unit");
    ensure!((pose.up.norm() - 1.0).abs() < 1e-9, "up not unit");
    Ok(())
}

fn pinned_motors_keep_heading_constant() -> Result<(), String> {
    let mut pose = default_pose(Vec3::ZERO);
    let h0 = pose.heading;
    for _ in 0..10_000 {
        pose.apply_rotation(FRAC_PI_2, FRAC_PI_2);
        pose.advance(0.7, 50.0);
    }
    ensure!(pose.heading == h0, "heading drifted under neutral motors");
    Ok(())
}

fn advance_examples() -> Result<(), String> {
    let mut pose = default_pose(Vec3::ZERO);
    pose.advance(1.0, 100.0);
    ensure!((pose.position - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12, "unit advance");
    let mut pose = default_pose(Vec3::new(99.5, 0.0, 0.0));
    pose.advance(1.0, 100.0);
    ensure!((pose.position.x - 0.5).abs() < 1e-12, "wrapped advance");
    let mut pose = default_pose(Vec3::ZERO);
    for _ in 0..100 {
        pose.advance(0.005, 1.0);
    }
    ensure!((pose.position.x - 0.5).abs() < 1e-9, "100 x 0.005 must land at 0.5");
    Ok(())
}

fn neighbors_match_brute_force() -> Result<(), String> {
    let l = 150.0;
    let radius = 25.0;
    let positions = random_positions(200, l, 4);
    let grid = UniformGrid::build(&positions, l, radius);
    for i in 0..positions.len() {
        let fast: Vec<u32> =
            grid.neighbors_within(&positions, i, radius).into_iter().map(|(j, _, _)| j).collect();
        let slow = oracles::brute_neighbors(&positions, i, radius, l);
        ensure!(fast == slow, "agent {i}: grid {fast:?} != oracle {slow:?}");
    }
    Ok(())
}

fn neighbor_cutoff_is_strict() -> Result<(), String> {
    let l = 300.0;
    for (gap, expected) in [(49.9, 1usize), (50.1, 0usize)] {
        let positions = vec![
            Vec3::new(100.0, 100.0, 100.0),
            Vec3::new(100.0 + gap, 100.0, 100.0),
        ];
        let grid = UniformGrid::build(&positions, l, 50.0);
        ensure!(
            grid.neighbors_within(&positions, 0, 50.0).len() == expected,
            "gap {gap}: wrong neighbor count"
        );
        ensure!(
            grid.neighbors_within(&positions, 1, 50.0).len() == expected,
            "gap {gap}: asymmetric result"
        );
    }
    Ok(())
}

fn cached_lists_remain_supersets_while_stale() -> Result<(), String> {
    // Random walkers with lists rebuilt every `interval` steps using the
    // inflated capture radius; between rebuilds the stale list must contain
    // every true neighbor (checked against the 27-image oracle).
    let l = 120.0;
    let radius = 20.0;
    let speed = 0.9;
    let interval = 10u64;
    let capture = radius + interval as f64 * 2.0 * speed;
    let n = 150;
    let mut positions = random_positions(n, l, 5);
    let mut headings: Vec<Vec3> = random_positions(n, 2.0, 6)
        .into_iter()
        .map(|v| (v - Vec3::new(1.0, 1.0, 1.0)).normalized().unwrap_or(Vec3::X))
        .collect();
    let mut s = rng(7);
    let mut lists: Vec<Vec<u32>> = Vec::new();
    for step in 0..1000u64 {
        if step % interval == 0 {
            let grid = UniformGrid::build(&positions, l, capture);
            lists = (0..n)
                .map(|i| {
                    let mut cand = Vec::new();
                    grid.candidates(positions[i], &mut cand);
                    cand.retain(|&j| {
                        j as usize != i
                            && min_image_delta(positions[i], positions[j as usize], l).norm()
                                <= capture
                    });
                    cand
                })
                .collect();
        }
        // Spot-check a sample of agents at every intermediate step.
        for probe in 0..10 {
            let i = ((step as usize) * 17 + probe * 31) % n;
            let truth = oracles::brute_neighbors(&positions, i, radius, l);
            for j in truth {
                ensure!(
                    lists[i].contains(&j),
                    "step {step}: stale list for {i} misses true neighbor {j}"
                );
            }
        }
        for i in 0..n {
            // Random turn, fixed speed.
            let axis = Vec3::new(
                s.rng().random::<f64>() - 0.5,
                s.rng().random::<f64>() - 0.5,
                s.rng().random::<f64>() - 0.5,
            )
            .normalized()
            .unwrap_or(Vec3::Z);
            headings[i] = world::rotate_about(headings[i], axis, 0.4)
                .normalized()
                .unwrap_or(headings[i]);
            positions[i] = world::wrap(positions[i] + headings[i] * speed, l);
        }
    }
    Ok(())
}

fn positions_stay_in_box_during_runs() -> Result<(), String> {
    let mut sim = Simulation::new(tiny_config(TaskKind::Foraging));
    for _ in 0..200 {
        sim.step().map_err(|e| e.to_string())?;
        for a in sim.agents.iter().filter(|a| a.alive) {
            let p = a.pose.position;
            for c in [p.x, p.y, p.z] {
                ensure!((0.0..200.0).contains(&c), "position {c} escaped the box");
            }
        }
    }
    Ok(())
}

// ----------------------------------------------------------- controller --

fn zero_genotype_is_neutral() -> Result<(), String> {
    let shape = NetworkShape::signal_only();
    let g = Genotype { weights: vec![0.0; shape.weight_count()] };
    let (cmd, state) =
        forward(shape, &g, &ControllerState::zeroed(), &[0.4; SIGNAL_INPUTS]).map_err(|e| e.to_string())?;
    ensure!(state.hidden == [0.0; HIDDEN], "hidden must be zero");
    ensure!(cmd.psi == PI * 0.5 && cmd.theta == PI * 0.5, "motors must center");
    ensure!(cmd.signal_out == [0.5, 0.5], "signals must be 0.5");
    ensure!(!cmd.action_bit, "0.5 > 0.5 must be false");
    Ok(())
}

fn saturated_bias_saturates_outputs() -> Result<(), String> {
    let shape = NetworkShape::signal_only();
    let mut g = Genotype { weights: vec![0.0; shape.weight_count()] };
    let bias_base = shape.weight_count() - OUTPUTS;
    g.weights[bias_base] = 10.0;
    let (cmd, _) = forward(shape, &g, &ControllerState::zeroed(), &[0.0; SIGNAL_INPUTS])
        .map_err(|e| e.to_string())?;
    ensure!(cmd.psi > 0.99 * PI, "psi should saturate, got {}", cmd.psi);
    Ok(())
}

fn forward_is_pure_and_deterministic() -> Result<(), String> {
    let shape = NetworkShape::signal_only();
    let mut s = rng(8);
    let g = random_genotype(shape, s.rng());
    let other = random_genotype(shape, s.rng());
    let inputs: Vec<f64> = (0..SIGNAL_INPUTS).map(|i| (i as f64 * 0.77).sin()).collect();
    let state = ControllerState::zeroed();
    let first = forward(shape, &g, &state, &inputs).map_err(|e| e.to_string())?;
    // Interleave unrelated evaluations; the replay must be bit-identical.
    for _ in 0..5 {
        let _ = forward(shape, &other, &state, &inputs);
    }
    let second = forward(shape, &g, &state, &inputs).map_err(|e| e.to_string())?;
    ensure!(first == second, "forward is not a pure function");
    Ok(())
}

fn context_equals_previous_hidden_for_any_sequence() -> Result<(), String> {
    let shape = NetworkShape::signal_only();
    let mut s = rng(9);
    for _ in 0..20 {
        let g = random_genotype(shape, s.rng());
        let mut state = ControllerState::zeroed();
        for _ in 0..30 {
            let inputs: Vec<f64> =
                (0..SIGNAL_INPUTS).map(|_| s.rng().random::<f64>() * 2.0 - 1.0).collect();
            let prev_hidden = state.hidden;
            let (_, next) = forward(shape, &g, &state, &inputs).map_err(|e| e.to_string())?;
            ensure!(next.context == next.hidden, "context must copy current hidden");
            let _ = prev_hidden;
            state = next;
        }
    }
    Ok(())
}

fn output_ranges_hold_across_the_clamp_box() -> Result<(), String> {
    let shape = NetworkShape::signal_only();
    let mut s = rng(10);
    for _ in 0..2000 {
        let mut g = random_genotype(shape, s.rng());
        for w in g.weights.iter_mut() {
            *w *= 8.0; // span the clamp box
        }
        let mut state = ControllerState::zeroed();
        for _ in 0..20 {
            let inputs: Vec<f64> =
                (0..SIGNAL_INPUTS).map(|_| s.rng().random::<f64>() * 10.0).collect();
            let (cmd, next) = forward(shape, &g, &state, &inputs).map_err(|e| e.to_string())?;
            ensure!((0.0..=PI).contains(&cmd.psi), "psi out of range: {}", cmd.psi);
            ensure!((0.0..=PI).contains(&cmd.theta), "theta out of range");
            ensure!(
                cmd.signal_out.iter().all(|v| (0.0..=1.0).contains(v)),
                "signal out of range"
            );
            ensure!(
                next.hidden.iter().all(|h| (-1.0..=1.0).contains(h)),
                "hidden out of range"
            );
            state = next;
        }
    }
    Ok(())
}

fn genotype_length_is_invariant_under_mutation() -> Result<(), String> {
    let shape = NetworkShape::signal_only();
    let mut s = rng(11);
    let mut g = random_genotype(shape, s.rng());
    for _ in 0..200 {
        g = mutate(&g, &MutationParams::default(), s.rng());
        ensure!(g.len() == 285, "genotype length changed to {}", g.len());
        ensure!(g.weights.iter().all(|w| w.abs() <= 8.0), "weight escaped the clamp box");
    }
    Ok(())
}

fn mutation_expected_step_length_matches_chi() -> Result<(), String> {
    let shape = NetworkShape::signal_only();
    let w = shape.weight_count();
    let oracle = oracles::chi_mean(w, 0.1);
    ensure!((oracle - 1.69).abs() < 0.01, "oracle sanity: 0.1 * sqrt(285) ~ 1.69, got {oracle}");
    let parent = Genotype { weights: vec![0.0; w] };
    let params = MutationParams { rate: 1.0, sigma: 0.1, clamp: 8.0 };
    let mut s = rng(12);
    let mut total = 0.0;
    let trials = 10_000;
    for _ in 0..trials {
        let child = mutate(&parent, &params, s.rng());
        let d2: f64 = child.weights.iter().map(|x| x * x).sum();
        total += d2.sqrt();
    }
    let sample = total / trials as f64;
    ensure!(
        (sample - oracle).abs() / oracle < 0.05,
        "sample mean {sample} deviates more than 5% from chi mean {oracle}"
    );
    Ok(())
}

fn mutation_zero_sigma_and_clamp_edges() -> Result<(), String> {
    let shape = NetworkShape::signal_only();
    let mut s = rng(13);
    let parent = random_genotype(shape, s.rng());
    let same = mutate(&parent, &MutationParams { rate: 1.0, sigma: 0.0, clamp: 8.0 }, s.rng());
    ensure!(same == parent, "sigma 0 must be the identity");
    let at_bound = Genotype { weights: vec![8.0; shape.weight_count()] };
    for _ in 0..10 {
        let child =
            mutate(&at_bound, &MutationParams { rate: 1.0, sigma: 1.0, clamp: 8.0 }, s.rng());
        ensure!(child.weights.iter().all(|w| *w <= 8.0), "clamp bound violated upward");
    }
    Ok(())
}

fn mutation_leaves_parent_untouched() -> Result<(), String> {
    let shape = NetworkShape::signal_only();
    let mut s = rng(14);
    let parent = random_genotype(shape, s.rng());
    let snapshot = parent.clone();
    let _ = mutate(&parent, &MutationParams::default(), s.rng());
    ensure!(parent == snapshot, "mutation modified the parent");
    Ok(())
}

fn random_genotypes_are_seeded_and_centered() -> Result<(), String> {
    let shape = NetworkShape::signal_only();
    let a = random_genotype(shape, Stream::new(21, 5, 0).rng());
    let b = random_genotype(shape, Stream::new(21, 5, 0).rng());
    ensure!(a == b, "same stream must give the same genotype");
    let mut s = rng(15);
    let mut sum = 0.0;
    let mut count = 0usize;
    while count < 100_000 {
        let g = random_genotype(shape, s.rng());
        sum += g.weights.iter().sum::<f64>();
        count += g.len();
    }
    let mean = sum / count as f64;
    ensure!(mean.abs() < 0.01, "uniform [-1,1] sample mean drifted: {mean}");
    ensure!(
        a.weights.iter().all(|w| (-1.0..=1.0).contains(w)),
        "random genotype outside [-1, 1]"
    );
    Ok(())
}

fn initial_populations_split_actions_evenly() -> Result<(), String> {
    let shape = NetworkShape::signal_only();
    let mut cooperators = 0;
    let n = 1000;
    for id in 0..n {
        let mut stream = Stream::new(400, id, 0);
        let g = random_genotype(shape, stream.rng());
        let (cmd, _) = forward(shape, &g, &ControllerState::zeroed(), &[0.0; SIGNAL_INPUTS])
            .map_err(|e| e.to_string())?;
        cooperators += u64::from(cmd.action_bit);
    }
    let fraction = cooperators as f64 / n as f64;
    ensure!(
        (fraction - 0.5).abs() <= 0.05,
        "random controllers should split actions 50/50 +- 5%, got {fraction}"
    );
    Ok(())
}

fn genotype_hash_tracks_content() -> Result<(), String> {
    let shape = NetworkShape::signal_only();
    let mut s = rng(16);
    let a = random_genotype(shape, s.rng());
    let mut b = a.clone();
    ensure!(genotype_hash(&a) == genotype_hash(&b), "equal genotypes, unequal hash");
    b.weights[17] += 1e-9;
    ensure!(genotype_hash(&a) != genotype_hash(&b), "hash ignored a weight change");
    Ok(())
}

// -------------------------------------------------------------- signals --

fn single_emitter_front_bin() -> Result<(), String> {
    let params = SenseParams { box_length: 600.0, cutoff: 50.0, min_distance: 1.0 };
    let pose = default_pose(Vec3::new(100.0, 100.0, 100.0));
    let emitters =
        [Emitter { position: Vec3::new(110.0, 100.0, 100.0), intensity: [1.0, 0.0] }];
    let frame = sense_exact(&pose, &emitters, &params);
    ensure!((frame.values[DIR_FRONT][0] - 0.01).abs() < 1e-15, "front bin must get 1/100");
    ensure!(frame.total() == frame.values[DIR_FRONT][0], "other bins must stay zero");
    Ok(())
}

fn emitter_outside_radius_is_silent() -> Result<(), String> {
    let params = SenseParams { box_length: 600.0, cutoff: 50.0, min_distance: 1.0 };
    let pose = default_pose(Vec3::new(100.0, 100.0, 100.0));
    let emitters =
        [Emitter { position: Vec3::new(151.0, 100.0, 100.0), intensity: [1.0, 1.0] }];
    ensure!(
        sense_exact(&pose, &emitters, &params) == SignalFrame::zero(),
        "emitter at r=51 must contribute nothing"
    );
    Ok(())
}

fn mirror_emitters_balance() -> Result<(), String> {
    let params = SenseParams { box_length: 600.0, cutoff: 50.0, min_distance: 1.0 };
    let pose = default_pose(Vec3::new(100.0, 100.0, 100.0));
    let emitters = [
        Emitter { position: Vec3::new(100.0, 120.0, 100.0), intensity: [0.8, 0.0] },
        Emitter { position: Vec3::new(100.0, 80.0, 100.0), intensity: [0.8, 0.0] },
    ];
    let frame = sense_exact(&pose, &emitters, &params);
    ensure!(
        frame.values[DIR_LEFT][0] == frame.values[DIR_RIGHT][0],
        "mirror symmetry broken"
    );
    Ok(())
}

fn sensed_values_are_nonnegative() -> Result<(), String> {
    let params = SenseParams { box_length: 100.0, cutoff: 45.0, min_distance: 1.0 };
    let emitters = random_emitters(300, 100.0, 17);
    for i in (0..300).step_by(13) {
        let pose = default_pose(emitters[i].position);
        let frame = sense_exact_skip(&pose, &emitters, i, &params);
        ensure!(
            frame.values.iter().flatten().all(|v| *v >= 0.0 && v.is_finite()),
            "negative or non-finite sensed value"
        );
    }
    Ok(())
}

fn quarter_turn_permutes_bins() -> Result<(), String> {
    let params = SenseParams { box_length: 600.0, cutoff: 50.0, min_distance: 1.0 };
    let center = Vec3::new(300.0, 300.0, 300.0);
    let emitters = random_emitters(40, 60.0, 18)
        .into_iter()
        .map(|mut e| {
            e.position = world::wrap(center + e.position - Vec3::new(30.0, 30.0, 30.0), 600.0);
            e
        })
        .collect::<Vec<_>>();
    let before = sense_exact(&default_pose(center), &emitters, &params);
    // Turn the receiver 90 degrees clockwise about up (heading -> -left).
    let turned = Pose::new(center, Vec3::new(0.0, -1.0, 0.0), Vec3::Z);
    let after = sense_exact(&turned, &emitters, &params);
    let pairs = [
        (DIR_FRONT, DIR_LEFT),
        (DIR_LEFT, DIR_BACK),
        (DIR_BACK, DIR_RIGHT),
        (DIR_RIGHT, DIR_FRONT),
    ];
    for (from, to) in pairs {
        for c in 0..2 {
            ensure!(
                (before.values[from][c] - after.values[to][c]).abs() < 1e-12,
                "bin {from} -> {to} changed value under a quarter turn"
            );
        }
    }
    Ok(())
}

fn near_field_clamp_bounds_the_weight() -> Result<(), String> {
    let params = SenseParams { box_length: 600.0, cutoff: 50.0, min_distance: 1.0 };
    let pose = default_pose(Vec3::new(100.0, 100.0, 100.0));
    let emitters =
        [Emitter { position: Vec3::new(100.1, 100.0, 100.0), intensity: [1.0, 1.0] }];
    let frame = sense_exact(&pose, &emitters, &params);
    ensure!(
        (frame.values[DIR_FRONT][0] - 1.0).abs() < 1e-12,
        "near-field weight must clamp to 1/min_distance^2"
    );
    Ok(())
}

fn emission_cost_examples() -> Result<(), String> {
    ensure!(emission_cost([0.0, 0.0], 0.01) == 0.0, "silent emission costs nothing");
    ensure!((emission_cost([1.0, 1.0], 0.01) - 0.02).abs() < 1e-15, "full emission cost");
    Ok(())
}

fn muted_runs_accrue_zero_signaling_cost() -> Result<(), String> {
    let mut config = tiny_config(TaskKind::Foraging);
    config.signals.muted = true;
    let mut sim = Simulation::new(config);
    let mut total = 0.0;
    for _ in 0..100 {
        let stats = sim.step().map_err(|e| e.to_string())?;
        total += stats.ledger.signaling;
    }
    ensure!(total == 0.0, "muted population paid signaling cost {total}");
    Ok(())
}

fn tree_single_emitter_is_one_leaf() -> Result<(), String> {
    let e = Emitter { position: Vec3::new(5.0, 6.0, 7.0), intensity: [0.25, 0.75] };
    let tree = SignalTree::build(vec![e], 100.0, DEFAULT_LEAF_CAPACITY);
    ensure!(tree.node_count() == 1, "single emitter should be a lone leaf");
    ensure!(tree.root_intensity() == [0.25, 0.75], "leaf aggregate wrong");
    Ok(())
}

fn tree_root_conserves_intensity() -> Result<(), String> {
    let emitters = random_emitters(10_000, 300.0, 19);
    let sum: [f64; 2] = emitters
        .iter()
        .fold([0.0, 0.0], |acc, e| [acc[0] + e.intensity[0], acc[1] + e.intensity[1]]);
    let tree = SignalTree::build(emitters, 300.0, DEFAULT_LEAF_CAPACITY);
    let root = tree.root_intensity();
    for c in 0..2 {
        ensure!(
            (root[c] - sum[c]).abs() <= 1e-9 * sum[c],
            "root aggregate differs from population sum"
        );
    }
    ensure!(tree.aggregates_consistent(1e-12), "internal aggregates inconsistent");
    Ok(())
}

fn tree_depth_stays_logarithmic() -> Result<(), String> {
    let n = 1000;
    let bound = ((n as f64 / DEFAULT_LEAF_CAPACITY as f64).ln() / 8f64.ln()).ceil() as usize + 4;
    for seed in 0..100 {
        let emitters = random_emitters(n, 200.0, 2000 + seed);
        let tree = SignalTree::build(emitters, 200.0, DEFAULT_LEAF_CAPACITY);
        ensure!(
            tree.max_depth() <= bound,
            "seed {seed}: depth {} exceeds log8 bound {bound}",
            tree.max_depth()
        );
    }
    Ok(())
}

fn tree_with_zero_theta_is_exact_everywhere() -> Result<(), String> {
    for seed in 0..50 {
        let n = 100 + (seed as usize * 97) % 4900;
        let l = 200.0;
        let params = SenseParams { box_length: l, cutoff: 50.0, min_distance: 1.0 };
        let emitters = random_emitters(n, l, 3000 + seed);
        let tree = SignalTree::build(emitters.clone(), l, DEFAULT_LEAF_CAPACITY);
        let mut scratch = TreeScratch::default();
        for i in (0..n).step_by((n / 7).max(1)) {
            let pose = default_pose(emitters[i].position);
            let exact = sense_exact_skip(&pose, &emitters, i, &params);
            let approx = tree.sense(&pose, Some(i as u32), 0.0, &params, &mut scratch);
            ensure!(approx == exact, "seed {seed} receiver {i}: theta=0 not bit-exact");
        }
    }
    Ok(())
}

fn tree_p99_error_within_five_percent() -> Result<(), String> {
    let l = 200.0;
    let n = 5000;
    let params = SenseParams { box_length: l, cutoff: 50.0, min_distance: 1.0 };
    let emitters = random_emitters(n, l, 31);
    let errors = neuroboids::bench::tree_errors(&emitters, &params, 0.5, 100, 77);
    ensure!(!errors.is_empty(), "no measurable bins");
    let p99 = oracles::percentile(errors, 0.99);
    ensure!(p99 <= 0.05, "p99 relative error {p99} exceeds 5%");
    Ok(())
}

fn distant_cluster_monopole_error_bound() -> Result<(), String> {
    let l = 600.0;
    let params = SenseParams { box_length: l, cutoff: 50.0, min_distance: 1.0 };
    let mut s = rng(20);
    let center = Vec3::new(340.0, 300.0, 300.0);
    let cluster_radius = 1.5;
    let emitters: Vec<Emitter> = (0..64)
        .map(|_| {
            let offset = Vec3::new(
                (s.rng().random::<f64>() - 0.5) * cluster_radius,
                (s.rng().random::<f64>() - 0.5) * cluster_radius,
                (s.rng().random::<f64>() - 0.5) * cluster_radius,
            );
            Emitter { position: center + offset, intensity: [1.0, 0.3] }
        })
        .collect();
    let tree = SignalTree::build(emitters.clone(), l, DEFAULT_LEAF_CAPACITY);
    let pose = default_pose(Vec3::new(300.0, 300.0, 300.0));
    let approx = tree.sense(&pose, None, 0.5, &params, &mut TreeScratch::default());
    let exact = sense_exact(&pose, &emitters, &params);
    let bound = (cluster_radius / 40.0) * (cluster_radius / 40.0) * 4.0;
    let rel = approx.max_abs_diff(&exact) / exact.total();
    ensure!(rel <= bound, "monopole error {rel} above analytic bound {bound}");
    Ok(())
}

fn total_intensity_invariant_under_relabeling() -> Result<(), String> {
    let l = 150.0;
    let params = SenseParams { box_length: l, cutoff: 40.0, min_distance: 1.0 };
    let emitters = random_emitters(400, l, 21);
    let mut relabeled = emitters.clone();
    relabeled.reverse();
    let probes = random_positions(25, l, 22);
    let total = |set: &[Emitter]| -> f64 {
        probes.iter().map(|&p| sense_exact(&default_pose(p), set, &params).total()).sum()
    };
    let a = total(&emitters);
    let b = total(&relabeled);
    ensure!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "relabeling changed total intensity");
    Ok(())
}

fn treecode_scales_subquadratically() -> Result<(), String> {
    // Machine-relative: doubling N must cost clearly less than 4x.
    let time_for = |n: usize| -> f64 {
        let l = (n as f64 / 0.002).cbrt();
        let params = SenseParams { box_length: l, cutoff: 25.0, min_distance: 1.0 };
        let emitters = random_emitters(n, l, 23);
        let tree = SignalTree::build(emitters.clone(), l, DEFAULT_LEAF_CAPACITY);
        let mut scratch = TreeScratch::default();
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let start = std::time::Instant::now();
            let mut sink = 0.0;
            for (i, e) in emitters.iter().enumerate() {
                sink += tree
                    .sense(&default_pose(e.position), Some(i as u32), 0.5, &params, &mut scratch)
                    .total();
            }
            std::hint::black_box(sink);
            best = best.min(start.elapsed().as_secs_f64());
        }
        best
    };
    let t1 = time_for(1 << 13);
    let t2 = time_for(1 << 14);
    ensure!(
        t2 / t1 < 2.6,
        "doubling N scaled tree sensing by {:.2}x (>= 2.6x)",
        t2 / t1
    );
    Ok(())
}

// ------------------------------------------------------------ evolution --

fn deaths_trigger_at_zero_energy() -> Result<(), String> {
    let shape = NetworkShape::signal_only();
    let (mut agents, mut lineage, _) =
        evolution::population_seed(3, shape, EnergyParams::default(), 100.0, 3);
    agents[0].energy = 0.0;
    agents[1].energy = 1e-9;
    agents[2].energy = -0.5;
    let mut ledger = evolution::StepLedger::default();
    let removed = evolution::step_deaths(&mut agents, 11, &mut ledger, &mut lineage);
    ensure!(removed == vec![0, 2], "exactly energies <= 0 must die, got {removed:?}");
    ensure!(lineage[0].death_step == Some(11), "death step not recorded");
    ensure!(lineage[1].death_step.is_none(), "survivor must have no death step");
    Ok(())
}

fn extinction_empties_the_population() -> Result<(), String> {
    let mut config = tiny_config(TaskKind::Foraging);
    config.evolution.initial_energy = 0.004;
    config.foraging.source_count = 0;
    let mut sim = Simulation::new(config);
    for _ in 0..5 {
        let stats = sim.step().map_err(|e| e.to_string())?;
        if stats.extinct {
            ensure!(stats.population == 0, "extinct with positive population");
            return Ok(());
        }
    }
    Err("population with near-zero energy failed to go extinct".to_string())
}

fn reproduction_needs_strictly_more_than_threshold() -> Result<(), String> {
    let energy = EnergyParams::default();
    let shape = NetworkShape::signal_only();
    let (mut agents, mut lineage, mut next_id) =
        evolution::population_seed(2, shape, energy, 100.0, 5);
    agents[0].energy = energy.reproduction_threshold;
    agents[1].energy = energy.reproduction_threshold + 0.001;
    let mut ledger = evolution::StepLedger::default();
    let mut params = evolution::BirthParams {
        energy,
        mutation: MutationParams::default(),
        shape,
        box_length: 100.0,
        population_cap: 10,
        run_seed: 5,
        lineage: &mut lineage,
    };
    let born = evolution::step_births(&mut agents, 4, &mut next_id, &mut ledger, &mut params);
    ensure!(born == 1, "strict threshold: exactly one birth expected");
    ensure!(lineage[2].parent == Some(1), "wrong parent");
    ensure!(agents[1].energy > 0.0, "reproduction must not kill the parent");
    Ok(())
}

fn one_infant_per_step_is_enforced_in_runs() -> Result<(), String> {
    let mut config = tiny_config(TaskKind::Foraging);
    config.foraging.source_income = 0.5;
    config.foraging.source_radius = 60.0;
    let mut sim = Simulation::new(config);
    for _ in 0..300 {
        if sim.step().map_err(|e| e.to_string())?.extinct {
            break;
        }
    }
    let mut counts = std::collections::HashMap::new();
    for r in sim.lineage.iter().filter(|r| r.parent.is_some()) {
        let key = (r.parent.unwrap(), r.birth_step);
        *counts.entry(key).or_insert(0u32) += 1;
    }
    ensure!(
        counts.values().all(|&c| c <= 1),
        "some agent had two children in one step"
    );
    Ok(())
}

fn lineage_of_a_run_is_a_valid_forest() -> Result<(), String> {
    let mut sim = Simulation::new(tiny_config(TaskKind::Foraging));
    for _ in 0..400 {
        if sim.step().map_err(|e| e.to_string())?.extinct {
            break;
        }
    }
    let records = &sim.lineage;
    let mut ids = std::collections::HashSet::new();
    for r in records {
        ensure!(ids.insert(r.id), "duplicate id {}", r.id);
    }
    for r in records {
        if let Some(p) = r.parent {
            let parent = &records[p as usize];
            ensure!(parent.id == p, "lineage not id-indexed");
            ensure!(parent.birth_step < r.birth_step, "parent born after child");
            if let Some(d) = parent.death_step {
                ensure!(d >= r.birth_step, "parent {p} died before child {} was born", r.id);
            }
        }
    }
    // Every chain terminates at a founder: follow parents.
    for r in records {
        let mut cursor = r;
        let mut hops = 0;
        while let Some(p) = cursor.parent {
            cursor = &records[p as usize];
            hops += 1;
            ensure!(hops <= records.len(), "cycle in lineage");
        }
    }
    analysis::phylogeny_forest(records, sim.step).map_err(|e| e.to_string())?;
    Ok(())
}

fn seeding_is_deterministic_and_distinct() -> Result<(), String> {
    let shape = NetworkShape::signal_only();
    for seed in 0..100 {
        let (agents, _, _) =
            evolution::population_seed(50, shape, EnergyParams::default(), 600.0, seed);
        let (again, _, _) =
            evolution::population_seed(50, shape, EnergyParams::default(), 600.0, seed);
        for (a, b) in agents.iter().zip(&again) {
            ensure!(a.pose.position == b.pose.position, "seeding not deterministic");
        }
        for (i, a) in agents.iter().enumerate() {
            let p = a.pose.position;
            for c in [p.x, p.y, p.z] {
                ensure!((0.0..600.0).contains(&c), "position out of box");
            }
            for b in agents.iter().skip(i + 1) {
                ensure!(
                    a.pose.position != b.pose.position,
                    "two founders at the same position"
                );
            }
        }
    }
    Ok(())
}

fn child_offsets_stay_within_the_unit_ball() -> Result<(), String> {
    let mut sim = Simulation::new(tiny_config(TaskKind::Foraging));
    let mut checked = 0;
    for _ in 0..400 {
        let stats = sim.step().map_err(|e| e.to_string())?;
        if stats.ledger.births > 0 {
            for r in sim.lineage.iter().filter(|r| r.birth_step + 1 == sim.step) {
                if let Some(p) = r.parent {
                    let child = sim.agents.iter().find(|a| a.id == r.id);
                    let parent = sim.agents.iter().find(|a| a.id == p);
                    if let (Some(c), Some(par)) = (child, parent) {
                        // Both moved at most one speed unit since the birth.
                        let d = toroidal_distance(
                            c.pose.position,
                            par.pose.position,
                            200.0,
                        );
                        ensure!(
                            d <= 1.0 + 2.0 * sim.config.world.agent_speed + 1e-9,
                            "child spawned {d} away from parent"
                        );
                        checked += 1;
                    }
                }
            }
        }
        if checked > 50 {
            break;
        }
    }
    ensure!(checked > 0, "no births observed");
    Ok(())
}

fn ledger_identity_holds_across_tasks() -> Result<(), String> {
    for task in [TaskKind::Foraging, TaskKind::Pd, TaskKind::NoisyForaging] {
        let mut sim = Simulation::new(tiny_config(task));
        for _ in 0..150 {
            let stats = sim.step().map_err(|e| e.to_string())?;
            ensure!(
                stats.residual.abs() < 1e-9,
                "{}: residual {} at step {}",
                task.as_str(),
                stats.residual,
                stats.step
            );
            if stats.extinct {
                break;
            }
        }
    }
    Ok(())
}

fn trajectories_are_thread_count_invariant() -> Result<(), String> {
    let run = |threads: usize| -> Result<Vec<(u64, Vec3, f64)>, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| {
            let mut sim = Simulation::new(tiny_config(TaskKind::Foraging));
            for _ in 0..60 {
                sim.step().map_err(|e| e.to_string())?;
            }
            Ok(sim
                .agents
                .iter()
                .filter(|a| a.alive)
                .map(|a| (a.id, a.pose.position, a.energy))
                .collect())
        })
    };
    let one = run(1)?;
    let four = run(4)?;
    ensure!(one == four, "thread count changed the trajectory");
    Ok(())
}

// ----------------------------------------------------------------- tasks --

fn foraging_income_cases() -> Result<(), String> {
    let l = 200.0;
    let src = |x: f64| EnergySource {
        center: Vec3::new(x, 100.0, 100.0),
        radius: 20.0,
        income_rate: 0.1,
    };
    let sources = [src(50.0), src(60.0)];
    let at = |x: f64| tasks::foraging_income(Vec3::new(x, 100.0, 100.0), &sources, l);
    ensure!((at(55.0) - 0.2).abs() < 1e-15, "overlap must pay additively");
    ensure!(at(120.0) == 0.0, "outside all sources must pay nothing");
    ensure!((at(30.0) - 0.1).abs() < 1e-15, "boundary counts as inside");
    Ok(())
}

fn relocation_preserves_shape_and_is_deterministic() -> Result<(), String> {
    let mut a = vec![
        EnergySource { center: Vec3::ZERO, radius: 7.0, income_rate: 0.3 };
        4
    ];
    let mut b = a.clone();
    tasks::relocate_sources(&mut a, Stream::new(5, 1, 2).rng(), 300.0);
    tasks::relocate_sources(&mut b, Stream::new(5, 1, 2).rng(), 300.0);
    ensure!(a == b, "relocation not deterministic");
    ensure!(
        a.iter().all(|s| s.radius == 7.0 && s.income_rate == 0.3),
        "relocation changed radii or rates"
    );
    ensure!(a.iter().any(|s| s.center != Vec3::ZERO), "relocation did not move sources");
    // Interval arithmetic for the relocation schedule.
    let events = (1..=1_000_000u64).filter(|s| s % 10_000 == 0).count();
    ensure!(events == 100, "10^6 steps at interval 10^4 must relocate 100 times");
    Ok(())
}

fn relocations_are_logged_at_the_interval() -> Result<(), String> {
    let mut config = tiny_config(TaskKind::Foraging);
    config.foraging.relocation_interval = 50;
    let mut sim = Simulation::new(config);
    let mut last = 0;
    for _ in 0..500 {
        let stats = sim.step().map_err(|e| e.to_string())?;
        last = stats.relocations;
        if stats.extinct {
            return Ok(());
        }
    }
    ensure!(last == 10, "500 steps at interval 50 must log 10 relocations, got {last}");
    Ok(())
}

fn foraging_income_is_translation_invariant() -> Result<(), String> {
    let l = 240.0;
    let offset = Vec3::new(101.0, 57.0, 213.0);
    let sources: Vec<EnergySource> = random_positions(6, l, 24)
        .into_iter()
        .map(|center| EnergySource { center, radius: 25.0, income_rate: 0.2 })
        .collect();
    let shifted: Vec<EnergySource> = sources
        .iter()
        .map(|s| EnergySource { center: world::wrap(s.center + offset, l), ..*s })
        .collect();
    for p in random_positions(200, l, 25) {
        let a = tasks::foraging_income(p, &sources, l);
        let b = tasks::foraging_income(world::wrap(p + offset, l), &shifted, l);
        ensure!(a == b, "income changed under a rigid shift");
    }
    Ok(())
}

fn pd_lone_agent_scores_zero() -> Result<(), String> {
    let params = PdParams {
        interaction_radius: 30.0,
        benefit: 2.0,
        cost: 1.0,
        distance_exponent: 1.0,
    };
    ensure!(tasks::pd_round(true, &[], &params) == 0.0, "lone cooperator must score 0");
    ensure!(tasks::pd_round(false, &[], &params) == 0.0, "lone defector must score 0");
    Ok(())
}

fn pd_defector_limit_collects_k_benefits() -> Result<(), String> {
    let params = PdParams {
        interaction_radius: 30.0,
        benefit: 2.0,
        cost: 1.0,
        distance_exponent: 1.0,
    };
    for k in [1usize, 3, 7] {
        let neighbors = vec![(true, 1e-12); k];
        let payoff = tasks::pd_round(false, &neighbors, &params);
        ensure!(
            (payoff - k as f64 * params.benefit).abs() < 1e-9,
            "defector among {k} adjacent cooperators must approach k*b"
        );
    }
    Ok(())
}

fn pd_pairwise_matrix_is_a_dilemma() -> Result<(), String> {
    let params = PdParams {
        interaction_radius: 30.0,
        benefit: 2.0,
        cost: 1.0,
        distance_exponent: 1.0,
    };
    for r in [0.5, 10.0, 25.0] {
        let t = tasks::pd_round(false, &[(true, r)], &params);
        let rew = tasks::pd_round(true, &[(true, r)], &params);
        let p = tasks::pd_round(false, &[(false, r)], &params);
        let s = tasks::pd_round(true, &[(false, r)], &params);
        ensure!(t > rew && rew > p && p > s, "ordering broke at r={r}: T={t} R={rew} P={p} S={s}");
        ensure!(2.0 * rew > t + s, "2R > T+S must hold at r={r}");
    }
    Ok(())
}

fn noisy_vision_at_zero_amplitude_is_exact() -> Result<(), String> {
    let l = 200.0;
    let sense = SenseParams { box_length: l, cutoff: 50.0, min_distance: 1.0 };
    let sources: Vec<EnergySource> = random_positions(5, l, 26)
        .into_iter()
        .map(|center| EnergySource { center, radius: 10.0, income_rate: 0.15 })
        .collect();
    let pose = default_pose(Vec3::new(100.0, 100.0, 100.0));
    let mut s = rng(27);
    let noisy =
        tasks::noisy_food_sense(&pose, &sources, &NoiseModel { amplitude: 0.0 }, &sense, s.rng());
    // Expected: exactly the signal-style binning of the food field.
    let emitters: Vec<Emitter> = sources
        .iter()
        .map(|src| Emitter { position: src.center, intensity: [src.income_rate, 0.0] })
        .collect();
    let frame = sense_exact(&pose, &emitters, &sense);
    for d in 0..6 {
        ensure!(noisy[d] == frame.values[d][0], "direction {d} differs from exact binning");
    }
    Ok(())
}

fn noise_deviation_scales_linearly() -> Result<(), String> {
    let l = 200.0;
    let sense = SenseParams { box_length: l, cutoff: 50.0, min_distance: 1.0 };
    let sources = [EnergySource {
        center: Vec3::new(110.0, 100.0, 100.0),
        radius: 10.0,
        income_rate: 0.1,
    }];
    let pose = default_pose(Vec3::new(100.0, 100.0, 100.0));
    let truth = tasks::food_field(&pose, &sources, &sense);
    let v20 = tasks::noisy_food_sense(
        &pose,
        &sources,
        &NoiseModel { amplitude: 20.0 },
        &sense,
        Stream::new(7, 7, 7).rng(),
    );
    let v40 = tasks::noisy_food_sense(
        &pose,
        &sources,
        &NoiseModel { amplitude: 40.0 },
        &sense,
        Stream::new(7, 7, 7).rng(),
    );
    for d in 0..6 {
        if v20[d] > 0.0 && v40[d] > 0.0 {
            let d20 = v20[d] - truth[d];
            let d40 = v40[d] - truth[d];
            ensure!((d40 - 2.0 * d20).abs() < 1e-9, "same draws must deviate exactly 2x");
        }
    }
    ensure!(v20.iter().all(|v| *v >= 0.0), "clamp at zero violated");
    Ok(())
}

fn amplitude_forty_drowns_the_signal() -> Result<(), String> {
    let true_value: f64 = 0.01;
    let noise_rms = 40.0 / 3f64.sqrt();
    ensure!(true_value / noise_rms < 1e-3, "noise 40 must dominate a 0.01 signal");
    Ok(())
}

fn noisy_task_extends_the_input_vector() -> Result<(), String> {
    ensure!(NetworkShape::with_vision().inputs == 18, "12 + 6 vision inputs");
    ensure!(NetworkShape::with_vision().weight_count() == 345, "genotype must grow to 345");
    let sim = Simulation::new(tiny_config(TaskKind::NoisyForaging));
    ensure!(
        sim.agents.iter().all(|a| a.genotype.len() == 345),
        "noisy-task agents must carry 345 weights"
    );
    Ok(())
}

fn single_boid_flies_straight() -> Result<(), String> {
    let mut sim = BoidsSim::new(boids::default_params(1), 6);
    let v = sim.velocities[0];
    for _ in 0..100 {
        sim.step();
    }
    ensure!(sim.velocities[0] == v, "lone boid changed velocity");
    Ok(())
}

fn zero_rule_weights_preserve_velocities() -> Result<(), String> {
    let mut params = boids::default_params(128);
    params.w_separation = 0.0;
    params.w_alignment = 0.0;
    params.w_cohesion = 0.0;
    let mut sim = BoidsSim::new(params, 8);
    let before = sim.velocities.clone();
    for _ in 0..50 {
        sim.step();
    }
    ensure!(sim.velocities == before, "velocities changed with all weights zero");
    Ok(())
}

fn two_boids_under_cohesion_converge_monotonically() -> Result<(), String> {
    // Two boids in a unit box (density 2 per cubic unit).
    let mut params = boids::default_params(2);
    params.density = 2.0;
    params.w_separation = 0.0;
    params.w_alignment = 0.0;
    params.w_cohesion = 0.05;
    params.perception_radius = 0.2;
    params.separation_radius = 0.01;
    let mut sim = BoidsSim::new(params, 9);
    sim.positions[0] = Vec3::new(0.2, 0.25, 0.25);
    sim.positions[1] = Vec3::new(0.35, 0.25, 0.25);
    sim.velocities[0] = Vec3::new(0.0, 0.001, 0.0);
    sim.velocities[1] = Vec3::new(0.0, -0.001, 0.0);
    let l = sim.box_length;
    let oracle = oracles::two_body_cohesion_distances(
        sim.positions[0],
        sim.positions[1],
        sim.velocities[0],
        sim.velocities[1],
        0.05,
        0.001,
        0.005,
        l,
        60,
    );
    let mut last = toroidal_distance(sim.positions[0], sim.positions[1], l);
    for step in 0..60 {
        ensure!(
            (oracle[step] - last).abs() < 1e-9,
            "distance trace diverged from the 2-body oracle at step {step}"
        );
        sim.step();
        let d = toroidal_distance(sim.positions[0], sim.positions[1], l);
        if d <= params.separation_radius {
            break;
        }
        ensure!(d <= last + 1e-12, "distance increased ({last} -> {d}) under pure cohesion");
        last = d;
    }
    Ok(())
}

fn boids_speeds_stay_clamped() -> Result<(), String> {
    let mut sim = BoidsSim::new(boids::default_params(256), 10);
    for _ in 0..60 {
        sim.step();
    }
    for v in &sim.velocities {
        let s = v.norm();
        ensure!((0.001 - 1e-12..=0.005 + 1e-12).contains(&s), "speed {s} escaped the clamp");
    }
    Ok(())
}

fn efficiency_series_definition_holds() -> Result<(), String> {
    let income = [0.0, 5.0, 1.5, 2.0];
    let pop = [10u64, 10, 3, 0];
    let series = tasks::efficiency_series(&income, &pop);
    ensure!(series[0] == Some(0.0), "zero income must give e=0");
    ensure!(series[1] == Some(0.5), "10 agents earning 5 total must give 0.5");
    ensure!(series[2] == Some(0.5), "definition is income over population");
    ensure!(series[3].is_none(), "empty population must be missing");
    // Aggregation across runs: mean and std on a synthetic constant series.
    let (mean, std) = analysis::mean_std(&[0.5, 0.5, 0.5]);
    ensure!(mean == 0.5 && std == 0.0, "constant series must have zero spread");
    Ok(())
}

// -------------------------------------------------------------- analysis --

fn pca_rank_one_data_explains_everything() -> Result<(), String> {
    let dir: Vec<f64> = (0..285).map(|i| ((i * 31 + 7) % 23) as f64 / 23.0 - 0.5).collect();
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|i| dir.iter().map(|&d| d * (i as f64 - 20.0) + 3.0).collect())
        .collect();
    let result = analysis::pca(&rows, 2).map_err(|e| e.to_string())?;
    ensure!(
        (result.explained_variance_ratio[0] - 1.0).abs() < 1e-9,
        "rank-1 data must put all variance on the first component"
    );
    Ok(())
}

fn pca_isotropic_cloud_has_flat_spectrum() -> Result<(), String> {
    // 10^4 samples in 285 dims: eigenvalue spread follows the
    // Marchenko-Pastur edges (1 +- sqrt(285/10^4))^2; check with margin.
    let d = 285;
    let n = 10_000;
    let mut s = rng(28);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::with_capacity(d);
        for _ in 0..(d / 2) {
            // Box-Muller from the uniform stream.
            let u1: f64 = s.rng().random::<f64>().max(1e-12);
            let u2: f64 = s.rng().random();
            let r = (-2.0 * u1.ln()).sqrt();
            row.push(r * (2.0 * PI * u2).cos());
            row.push(r * (2.0 * PI * u2).sin());
        }
        row.push(s.rng().random::<f64>() * 2.0 - 1.0);
        rows.push(row);
    }
    let result = analysis::pca(&rows, 2).map_err(|e| e.to_string())?;
    let ratios = &result.explained_variance_ratio;
    let expected = 1.0 / d as f64;
    let edge = (d as f64 / n as f64).sqrt();
    let hi = (1.0 + edge) * (1.0 + edge) * 1.1;
    let lo = (1.0 - edge) * (1.0 - edge) * 0.85;
    // The last dimension is uniform (variance 1/3), so skip the tail entry
    // when checking the lower edge.
    ensure!(
        ratios[0] / expected <= hi,
        "top ratio {} outside the Marchenko-Pastur edge {hi}",
        ratios[0] / expected
    );
    let mid = ratios[1..d - 2].iter().copied().fold(f64::INFINITY, f64::min);
    ensure!(mid / expected >= lo, "bulk ratio {} below the lower edge {lo}", mid / expected);
    let sum: f64 = ratios.iter().sum();
    ensure!((sum - 1.0).abs() < 1e-9, "ratios must sum to 1");
    Ok(())
}

fn pca_projects_the_mean_to_the_origin() -> Result<(), String> {
    let mut s = rng(29);
    let rows: Vec<Vec<f64>> = (0..80)
        .map(|_| (0..30).map(|_| s.rng().random::<f64>() * 5.0 - 1.0).collect())
        .collect();
    let result = analysis::pca(&rows, 2).map_err(|e| e.to_string())?;
    let mean = result.mean.clone();
    let (x, y) = result.project2(&mean);
    ensure!(x.abs() < 1e-9 && y.abs() < 1e-9, "mean projected to ({x}, {y})");
    Ok(())
}

fn pca_reconstruction_recovers_centered_data() -> Result<(), String> {
    let d = 24;
    let mut s = rng(30);
    let rows: Vec<Vec<f64>> = (0..60)
        .map(|_| (0..d).map(|_| s.rng().random::<f64>() * 3.0 - 1.5).collect())
        .collect();
    let result = analysis::pca(&rows, d).map_err(|e| e.to_string())?;
    // Components must be orthonormal.
    for i in 0..d {
        for j in i..d {
            let dot: f64 = result.components[i]
                .iter()
                .zip(&result.components[j])
                .map(|(a, b)| a * b)
                .sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            ensure!((dot - expected).abs() < 1e-9, "components {i},{j} not orthonormal");
        }
    }
    for row in &rows {
        let centered: Vec<f64> =
            row.iter().zip(&result.mean).map(|(x, m)| x - m).collect();
        let coefficients: Vec<f64> = result
            .components
            .iter()
            .map(|c| c.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect();
        for j in 0..d {
            let rebuilt: f64 = result
                .components
                .iter()
                .zip(&coefficients)
                .map(|(c, k)| c[j] * k)
                .sum();
            ensure!(
                (rebuilt - centered[j]).abs() < 1e-6,
                "reconstruction error {} at column {j}",
                (rebuilt - centered[j]).abs()
            );
        }
    }
    Ok(())
}

fn pca_ratios_are_sorted_and_bounded() -> Result<(), String> {
    let mut s = rng(31);
    let rows: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..12).map(|_| s.rng().random::<f64>()).collect())
        .collect();
    let result = analysis::pca(&rows, 3).map_err(|e| e.to_string())?;
    let r = &result.explained_variance_ratio;
    for pair in r.windows(2) {
        ensure!(pair[0] >= pair[1] - 1e-12, "ratios not sorted");
    }
    ensure!(r.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)), "ratio outside [0, 1]");
    ensure!(r.iter().sum::<f64>() <= 1.0 + 1e-9, "ratios exceed 1");
    ensure!(analysis::pca(&rows[..1], 2).is_err(), "single row must be an error");
    Ok(())
}

fn newick_single_founder_renders_lifespan() -> Result<(), String> {
    let records = vec![LineageRecord {
        id: 7,
        parent: None,
        birth_step: 0,
        death_step: Some(42),
        genotype_hash: 0,
    }];
    let forest = analysis::phylogeny_forest(&records, 100).map_err(|e| e.to_string())?;
    ensure!(forest.len() == 1, "one founder, one tree");
    ensure!(
        analysis::to_newick(&forest[0]) == "7:42;",
        "got {}",
        analysis::to_newick(&forest[0])
    );
    Ok(())
}

fn newick_two_children_has_three_leaves() -> Result<(), String> {
    let rec = |id, parent, birth, death| LineageRecord {
        id,
        parent,
        birth_step: birth,
        death_step: death,
        genotype_hash: 0,
    };
    let records =
        vec![rec(0, None, 0, Some(50)), rec(1, Some(0), 10, Some(30)), rec(2, Some(0), 20, None)];
    let forest = analysis::phylogeny_forest(&records, 60).map_err(|e| e.to_string())?;
    fn leaves(node: &analysis::NewickNode) -> usize {
        if node.children.is_empty() {
            1
        } else {
            node.children.iter().map(leaves).sum()
        }
    }
    ensure!(leaves(&forest[0]) == 3, "expected a 3-leaf topology");
    ensure!(
        analysis::to_newick(&forest[0]) == "((0:30,2:40):10,1:20):10;",
        "unexpected topology {}",
        analysis::to_newick(&forest[0])
    );
    Ok(())
}

fn newick_round_trip_on_simulated_lineages() -> Result<(), String> {
    let mut sim = Simulation::new(tiny_config(TaskKind::Foraging));
    for _ in 0..300 {
        if sim.step().map_err(|e| e.to_string())?.extinct {
            break;
        }
    }
    let forest = analysis::phylogeny_forest(&sim.lineage, sim.step).map_err(|e| e.to_string())?;
    ensure!(!forest.is_empty(), "no trees produced");
    for tree in &forest {
        let text = analysis::to_newick(tree);
        let parsed = analysis::parse_newick(&text).map_err(|e| e.to_string())?;
        ensure!(&parsed == tree, "round trip altered the tree {text}");
    }
    Ok(())
}

fn corrupt_lineages_are_rejected() -> Result<(), String> {
    let rec = |id, parent, birth| LineageRecord {
        id,
        parent,
        birth_step: birth,
        death_step: None,
        genotype_hash: 0,
    };
    ensure!(
        analysis::phylogeny_forest(&[rec(0, None, 10), rec(1, Some(0), 5)], 20).is_err(),
        "child older than parent must be rejected"
    );
    ensure!(
        analysis::phylogeny_forest(&[rec(1, Some(9), 5)], 20).is_err(),
        "unknown parent must be rejected"
    );
    ensure!(analysis::parse_newick("((a:1,b:2):3").is_err(), "unterminated Newick accepted");
    Ok(())
}

fn assortment_null_and_degenerate_cases() -> Result<(), String> {
    let l = 100.0;
    let positions = random_positions(2000, l, 32);
    let mut s = rng(33);
    let actions: Vec<bool> = (0..2000).map(|_| s.rng().random::<f64>() < 0.5).collect();
    let a = analysis::assortment(&positions, &actions, 10.0, l);
    ensure!(a.abs() < 0.05, "random actions should give ~0 assortment, got {a}");
    let all = vec![true; 500];
    let a = analysis::assortment(&positions[..500], &all, 10.0, l);
    ensure!(a == 0.0, "all-cooperator assortment must be exactly 0");
    Ok(())
}

fn assortment_detects_segregation() -> Result<(), String> {
    let l = 100.0;
    let mut positions = Vec::new();
    let mut actions = Vec::new();
    let mut s = rng(34);
    for i in 0..600 {
        let coop = i % 2 == 0;
        let x = if coop { 5.0 } else { 55.0 } + s.rng().random::<f64>() * 40.0;
        positions.push(Vec3::new(x, s.rng().random::<f64>() * l, s.rng().random::<f64>() * l));
        actions.push(coop);
    }
    let a = analysis::assortment(&positions, &actions, 8.0, l);
    ensure!((a - 0.5).abs() < 0.1, "segregated halves should give ~1 - global, got {a}");
    Ok(())
}

fn neighbor_series_matches_hand_computed_fixture() -> Result<(), String> {
    let mk = |step, id, neighbors| neuroboids::logs::AgentRow {
        step,
        id,
        x: 0.0,
        y: 0.0,
        z: 0.0,
        energy: 1.0,
        action: 0,
        income: 0.0,
        neighbors,
    };
    let rows = vec![mk(0, 0, 2), mk(0, 1, 4), mk(0, 2, 0), mk(100, 0, 1), mk(100, 1, 1)];
    let series = analysis::neighbor_series(&rows);
    ensure!(series == vec![(0, 2.0), (100, 1.0)], "fixture means wrong: {series:?}");
    Ok(())
}

fn two_agents_in_radius_have_one_neighbor_each() -> Result<(), String> {
    let mut config = tiny_config(TaskKind::Foraging);
    config.evolution.initial_population = 2;
    config.evolution.initial_energy = 100.0;
    config.evolution.reproduction_threshold = 1000.0;
    config.world.agent_speed = 1e-9;
    let mut sim = Simulation::new(config);
    // Pin both agents well inside the signal radius.
    sim.agents[0].pose.position = Vec3::new(100.0, 100.0, 100.0);
    sim.agents[1].pose.position = Vec3::new(110.0, 100.0, 100.0);
    let stats = sim.step().map_err(|e| e.to_string())?;
    ensure!(stats.mean_neighbors == 1.0, "each agent must see exactly one neighbor");
    // And far apart they see nobody.
    let mut config = tiny_config(TaskKind::Foraging);
    config.evolution.initial_population = 2;
    config.world.agent_speed = 1e-9;
    let mut sim = Simulation::new(config);
    sim.agents[0].pose.position = Vec3::new(10.0, 10.0, 10.0);
    sim.agents[1].pose.position = Vec3::new(110.0, 110.0, 110.0);
    let stats = sim.step().map_err(|e| e.to_string())?;
    ensure!(stats.mean_neighbors == 0.0, "distant agents must see nobody");
    Ok(())
}

// ------------------------------------------------------- engine/artifacts --

fn same_seed_same_trajectory() -> Result<(), String> {
    let mut a = Simulation::new(tiny_config(TaskKind::Pd));
    let mut b = Simulation::new(tiny_config(TaskKind::Pd));
    for _ in 0..50 {
        let sa = a.step().map_err(|e| e.to_string())?;
        let sb = b.step().map_err(|e| e.to_string())?;
        ensure!(sa.ledger == sb.ledger, "ledgers diverged");
    }
    Ok(())
}

fn snapshot_round_trip_is_bit_exact() -> Result<(), String> {
    let config = tiny_config(TaskKind::Foraging);
    let mut original = Simulation::new(config.clone());
    for _ in 0..25 {
        original.step().map_err(|e| e.to_string())?;
    }
    let bytes = neuroboids::snapshot::encode_simulation(&original);
    let snap = neuroboids::snapshot::decode_snapshot(&bytes, "mem").map_err(|e| e.to_string())?;
    let mut resumed =
        neuroboids::snapshot::resume_simulation(config, snap, "mem").map_err(|e| e.to_string())?;
    for _ in 0..25 {
        let a = original.step().map_err(|e| e.to_string())?;
        let b = resumed.step().map_err(|e| e.to_string())?;
        ensure!(a.ledger == b.ledger && a.population == b.population, "resume diverged");
    }
    let left: Vec<_> = original
        .agents
        .iter()
        .filter(|a| a.alive)
        .map(|a| (a.id, a.pose.position, a.energy))
        .collect();
    let right: Vec<_> = resumed
        .agents
        .iter()
        .filter(|a| a.alive)
        .map(|a| (a.id, a.pose.position, a.energy))
        .collect();
    ensure!(left == right, "agent state differs after resume");
    Ok(())
}

fn snapshot_corruption_is_detected() -> Result<(), String> {
    let sim = Simulation::new(tiny_config(TaskKind::Foraging));
    let mut bytes = neuroboids::snapshot::encode_simulation(&sim);
    let n = bytes.len();
    bytes[n / 2] ^= 0x55;
    ensure!(
        neuroboids::snapshot::decode_snapshot(&bytes, "mem").is_err(),
        "bit flip escaped the CRC"
    );
    Ok(())
}

fn config_rejects_unknown_keys_and_bad_geometry() -> Result<(), String> {
    ensure!(
        RunConfig::from_toml_str("[world]\nbox_size = 10.0\n").is_err(),
        "unknown key accepted"
    );
    ensure!(
        RunConfig::from_toml_str("[world]\nbox_length = 80.0\nsignal_radius = 45.0\n").is_err(),
        "radius >= L/2 accepted"
    );
    let config = RunConfig::default();
    let resolved = config.resolved_toml();
    let parsed = RunConfig::from_toml_str(&resolved).map_err(|e| e.to_string())?;
    ensure!(parsed.hash() == config.hash(), "resolved config does not round-trip");
    Ok(())
}

fn tree_mode_requires_positive_theta() -> Result<(), String> {
    let err = RunConfig::from_toml_str("[signals]\nmode = \"tree\"\nopening_angle = 0.0\n");
    ensure!(err.is_err(), "tree mode with theta = 0 must be a configuration error");
    ensure!(
        RunConfig::from_toml_str("[signals]\nmode = \"exact\"\nopening_angle = 0.0\n").is_ok(),
        "exact mode must not care about theta"
    );
    Ok(())
}

fn exact_and_tiny_theta_tree_agree_in_runs() -> Result<(), String> {
    let mut exact_config = tiny_config(TaskKind::Foraging);
    exact_config.signals.mode = SignalMode::Exact;
    let mut tree_config = tiny_config(TaskKind::Foraging);
    tree_config.signals.mode = SignalMode::Tree;
    tree_config.signals.opening_angle = 1e-12;
    let mut a = Simulation::new(exact_config);
    let mut b = Simulation::new(tree_config);
    for _ in 0..40 {
        a.step().map_err(|e| e.to_string())?;
        b.step().map_err(|e| e.to_string())?;
    }
    let pa: Vec<_> = a.agents.iter().map(|x| (x.id, x.pose.position, x.energy)).collect();
    let pb: Vec<_> = b.agents.iter().map(|x| (x.id, x.pose.position, x.energy)).collect();
    ensure!(pa == pb, "tree backend with vanishing theta diverged from exact");
    Ok(())
}

fn accumulate_matches_sense_exact_composition() -> Result<(), String> {
    let params = SenseParams { box_length: 100.0, cutoff: 40.0, min_distance: 1.0 };
    let emitters = random_emitters(50, 100.0, 35);
    let pose = default_pose(Vec3::new(50.0, 50.0, 50.0));
    let direct = sense_exact(&pose, &emitters, &params);
    let mut manual = SignalFrame::zero();
    for e in &emitters {
        accumulate(&mut manual, &pose, e, &params);
    }
    ensure!(manual == direct, "sense_exact must equal per-emitter accumulation");
    let bin = direction_bin(&pose, Vec3::new(1.0, 0.2, -0.1));
    ensure!(bin == DIR_FRONT, "dominant +x must bin front");
    Ok(())
}

pub fn all_properties() -> Vec<Property> {
    properties![
        // world
        wrap_examples,
        wrap_stays_in_box,
        min_image_examples,
        min_image_symmetry_and_range,
        rotation_neutral_identity,
        rotation_matrix_oracle_agrees,
        rotation_circle_closure,
        frame_stays_orthonormal_over_a_million_rotations,
        pinned_motors_keep_heading_constant,
        advance_examples,
        neighbors_match_brute_force,
        neighbor_cutoff_is_strict,
        cached_lists_remain_supersets_while_stale,
        positions_stay_in_box_during_runs,
        // controller
        zero_genotype_is_neutral,
        saturated_bias_saturates_outputs,
        forward_is_pure_and_deterministic,
        context_equals_previous_hidden_for_any_sequence,
        output_ranges_hold_across_the_clamp_box,
        genotype_length_is_invariant_under_mutation,
        mutation_expected_step_length_matches_chi,
        mutation_zero_sigma_and_clamp_edges,
        mutation_leaves_parent_untouched,
        random_genotypes_are_seeded_and_centered,
        initial_populations_split_actions_evenly,
        genotype_hash_tracks_content,
        // signals
        single_emitter_front_bin,
        emitter_outside_radius_is_silent,
        mirror_emitters_balance,
        sensed_values_are_nonnegative,
        quarter_turn_permutes_bins,
        near_field_clamp_bounds_the_weight,
        emission_cost_examples,
        muted_runs_accrue_zero_signaling_cost,
        tree_single_emitter_is_one_leaf,
        tree_root_conserves_intensity,
        tree_depth_stays_logarithmic,
        tree_with_zero_theta_is_exact_everywhere,
        tree_p99_error_within_five_percent,
        distant_cluster_monopole_error_bound,
        total_intensity_invariant_under_relabeling,
        treecode_scales_subquadratically,
        accumulate_matches_sense_exact_composition,
        // evolution
        deaths_trigger_at_zero_energy,
        extinction_empties_the_population,
        reproduction_needs_strictly_more_than_threshold,
        one_infant_per_step_is_enforced_in_runs,
        lineage_of_a_run_is_a_valid_forest,
        seeding_is_deterministic_and_distinct,
        child_offsets_stay_within_the_unit_ball,
        ledger_identity_holds_across_tasks,
        trajectories_are_thread_count_invariant,
        // tasks
        foraging_income_cases,
        relocation_preserves_shape_and_is_deterministic,
        relocations_are_logged_at_the_interval,
        foraging_income_is_translation_invariant,
        pd_lone_agent_scores_zero,
        pd_defector_limit_collects_k_benefits,
        pd_pairwise_matrix_is_a_dilemma,
        noisy_vision_at_zero_amplitude_is_exact,
        noise_deviation_scales_linearly,
        amplitude_forty_drowns_the_signal,
        noisy_task_extends_the_input_vector,
        single_boid_flies_straight,
        zero_rule_weights_preserve_velocities,
        two_boids_under_cohesion_converge_monotonically,
        boids_speeds_stay_clamped,
        efficiency_series_definition_holds,
        // analysis
        pca_rank_one_data_explains_everything,
        pca_isotropic_cloud_has_flat_spectrum,
        pca_projects_the_mean_to_the_origin,
        pca_reconstruction_recovers_centered_data,
        pca_ratios_are_sorted_and_bounded,
        newick_single_founder_renders_lifespan,
        newick_two_children_has_three_leaves,
        newick_round_trip_on_simulated_lineages,
        corrupt_lineages_are_rejected,
        assortment_null_and_degenerate_cases,
        assortment_detects_segregation,
        neighbor_series_matches_hand_computed_fixture,
        two_agents_in_radius_have_one_neighbor_each,
        // engine and artifacts
        same_seed_same_trajectory,
        snapshot_round_trip_is_bit_exact,
        snapshot_corruption_is_detected,
        config_rejects_unknown_keys_and_bad_geometry,
        tree_mode_requires_positive_theta,
        exact_and_tiny_theta_tree_agree_in_runs,
    ]
}
