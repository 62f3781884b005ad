//! Stateless boids baseline: no controllers, no evolution, just the three
//! classic steering rules with periodic boundaries. The box size is derived
//! from the boid count at a fixed number density, so larger runs occupy
//! proportionally larger worlds.

use crate::grid::UniformGrid;
use crate::rng::Stream;
use crate::vec3::Vec3;
use crate::world::{min_image_delta, wrap};
use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use rayon::prelude::*;

#[derive(Clone, Copy, Debug)]
pub struct BoidsParams {
    pub count: usize,
    /// Boids per cubic unit; the box edge is `(count / density)^(1/3)`.
    pub density: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    pub perception_radius: f64,
    pub separation_radius: f64,
    pub w_separation: f64,
    pub w_alignment: f64,
    pub w_cohesion: f64,
    pub neighbor_refresh_interval: u64,
}

impl BoidsParams {
    pub fn box_length(&self) -> f64 {
        (self.count as f64 / self.density).cbrt()
    }
}

pub struct BoidsSim {
    pub params: BoidsParams,
    pub box_length: f64,
    pub step: u64,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub world_stream: Stream,
    cache: Option<NeighborCache>,
}

struct NeighborCache {
    built_step: u64,
    lists: Vec<Vec<u32>>,
}

impl BoidsSim {
    pub fn new(params: BoidsParams, run_seed: u64) -> Self {
        let l = params.box_length();
        let mut stream = Stream::new(run_seed, crate::rng::STREAM_WORLD, 0);
        let mut positions = Vec::with_capacity(params.count);
        let mut velocities = Vec::with_capacity(params.count);
        for _ in 0..params.count {
            positions.push(Vec3::new(
                stream.rng().random::<f64>() * l,
                stream.rng().random::<f64>() * l,
                stream.rng().random::<f64>() * l,
            ));
            let dir: [f64; 3] = UnitSphere.sample(stream.rng());
            let speed = params.min_speed
                + (params.max_speed - params.min_speed) * stream.rng().random::<f64>();
            velocities.push(Vec3::new(dir[0], dir[1], dir[2]) * speed);
        }
        BoidsSim {
            params,
            box_length: l,
            step: 0,
            positions,
            velocities,
            world_stream: stream,
            cache: None,
        }
    }

    /// Rebuild from snapshot state.
    pub fn restore(
        params: BoidsParams,
        run_seed: u64,
        step: u64,
        positions: Vec<Vec3>,
        velocities: Vec<Vec3>,
        world_word_pos: u128,
    ) -> Self {
        let l = params.box_length();
        BoidsSim {
            params,
            box_length: l,
            step,
            positions,
            velocities,
            world_stream: Stream::restore(run_seed, crate::rng::STREAM_WORLD, 0, world_word_pos),
            cache: None,
        }
    }

    fn capture_radius(&self) -> f64 {
        self.params.perception_radius
            + self.params.neighbor_refresh_interval as f64 * 2.0 * self.params.max_speed
    }

    fn refresh_cache(&mut self) {
        let capture = self.capture_radius();
        let grid = UniformGrid::build(&self.positions, self.box_length, capture);
        let positions = &self.positions;
        let cap2 = capture * capture;
        let l = self.box_length;
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
        self.cache = Some(NeighborCache { built_step: self.step, lists });
    }

    /// One synchronous update: all new velocities are computed from the
    /// previous state, then committed together.
    pub fn step(&mut self) {
        let need_refresh = match &self.cache {
            None => true,
            Some(c) => {
                self.step - c.built_step >= self.params.neighbor_refresh_interval
            }
        };
        if need_refresh {
            self.refresh_cache();
        }
        let cache = self.cache.as_ref().expect("cache just built");
        let p = &self.params;
        let l = self.box_length;
        let positions = &self.positions;
        let velocities = &self.velocities;
        let perception2 = p.perception_radius * p.perception_radius;
        let separation2 = p.separation_radius * p.separation_radius;

        let new_velocities: Vec<Vec3> = (0..positions.len())
            .into_par_iter()
            .map(|i| {
                let mut sep = Vec3::ZERO;
                let mut avg_vel = Vec3::ZERO;
                let mut center = Vec3::ZERO;
                let mut n = 0.0;
                for &j in &cache.lists[i] {
                    let delta = min_image_delta(positions[i], positions[j as usize], l);
                    let d2 = delta.norm_squared();
                    if d2 > perception2 {
                        continue;
                    }
                    n += 1.0;
                    avg_vel += velocities[j as usize];
                    center += delta;
                    if d2 < separation2 && d2 > 0.0 {
                        let d = d2.sqrt();
                        // Push away, stronger the closer the intruder.
                        sep -= delta * ((1.0 - d / p.separation_radius) / d);
                    }
                }
                let mut v = velocities[i];
                if n > 0.0 {
                    let inv = 1.0 / n;
                    v += (avg_vel * inv - velocities[i]) * p.w_alignment;
                    v += center * inv * p.w_cohesion;
                    v += sep * p.w_separation;
                }
                clamp_speed(v, velocities[i], p.min_speed, p.max_speed)
            })
            .collect();

        for (pos, v) in self.positions.iter_mut().zip(&new_velocities) {
            *pos = wrap(*pos + *v, l);
        }
        self.velocities = new_velocities;
        self.step += 1;
    }

    /// Mean cosine between each boid's heading and its neighbors' headings,
    /// averaged over boids with at least one neighbor within perception.
    pub fn mean_local_alignment(&self) -> f64 {
        let grid = UniformGrid::build(&self.positions, self.box_length, self.params.perception_radius);
        let positions = &self.positions;
        let velocities = &self.velocities;
        let r2 = self.params.perception_radius * self.params.perception_radius;
        let l = self.box_length;
        let (sum, count): (f64, u64) = (0..positions.len())
            .into_par_iter()
            .map(|i| {
                let mut cand = Vec::new();
                grid.candidates(positions[i], &mut cand);
                let hi = match velocities[i].normalized() {
                    Some(h) => h,
                    None => return (0.0, 0u64),
                };
                let mut acc = 0.0;
                let mut n = 0u64;
                for j in cand {
                    if j as usize == i {
                        continue;
                    }
                    let delta = min_image_delta(positions[i], positions[j as usize], l);
                    if delta.norm_squared() > r2 {
                        continue;
                    }
                    if let Some(hj) = velocities[j as usize].normalized() {
                        acc += hi.dot(hj);
                        n += 1;
                    }
                }
                if n > 0 {
                    (acc / n as f64, 1u64)
                } else {
                    (0.0, 0u64)
                }
            })
            .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    pub fn mean_speed(&self) -> f64 {
        if self.velocities.is_empty() {
            return 0.0;
        }
        self.velocities.iter().map(|v| v.norm()).sum::<f64>() / self.velocities.len() as f64
    }
}

fn clamp_speed(v: Vec3, previous: Vec3, min_speed: f64, max_speed: f64) -> Vec3 {
    let speed = v.norm();
    if (min_speed..=max_speed).contains(&speed) {
        return v;
    }
    match v.normalized() {
        Some(dir) => dir * speed.clamp(min_speed, max_speed),
        // Steering cancelled the velocity exactly: keep the old direction.
        None => match previous.normalized() {
            Some(dir) => dir * min_speed,
            None => Vec3::X * min_speed,
        },
    }
}

pub fn default_params(count: usize) -> BoidsParams {
    BoidsParams {
        count,
        density: 16_384.0,
        min_speed: 0.001,
        max_speed: 0.005,
        perception_radius: 0.05,
        separation_radius: 0.02,
        w_separation: 0.05,
        w_alignment: 0.2,
        w_cohesion: 0.05,
        neighbor_refresh_interval: 10,
    }
}
