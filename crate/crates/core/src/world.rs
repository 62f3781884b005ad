//! Periodic 3D space and agent kinematics.
//!
//! The world is a cube `[0, L)^3` with periodic boundaries. Agents carry an
//! orthonormal local frame (heading, up) and move at a fixed speed along
//! their heading; the controller steers by emitting a pitch and a yaw angle
//! each step, both in `[0, pi]` with `pi/2` meaning "no turn".

use crate::vec3::Vec3;
use std::f64::consts::FRAC_PI_2;

/// Wrap a coordinate into `[0, L)`.
pub fn wrap1(x: f64, l: f64) -> f64 {
    let w = x.rem_euclid(l);
    // rem_euclid can return exactly `l` when x is a tiny negative number.
    if w >= l {
        w - l
    } else {
        w
    }
}

/// Wrap a position into the box `[0, L)^3`.
pub fn wrap(p: Vec3, l: f64) -> Vec3 {
    Vec3::new(wrap1(p.x, l), wrap1(p.y, l), wrap1(p.z, l))
}

/// Minimum-image component of `b - a`, mapped into `[-L/2, L/2)`.
///
/// Both coordinates must already be wrapped into `[0, L)`, which bounds the
/// raw difference to `(-L, L)` and lets a branch replace the division.
/// A separation of exactly half a box maps to `-L/2`.
pub fn min_image1(a: f64, b: f64, l: f64) -> f64 {
    debug_assert!((0.0..l).contains(&a) && (0.0..l).contains(&b));
    let d = b - a;
    let half = l * 0.5;
    if d >= half {
        d - l
    } else if d < -half {
        d + l
    } else {
        d
    }
}

/// Minimum-image displacement from `a` to `b` on the torus.
pub fn min_image_delta(a: Vec3, b: Vec3, l: f64) -> Vec3 {
    Vec3::new(
        min_image1(a.x, b.x, l),
        min_image1(a.y, b.y, l),
        min_image1(a.z, b.z, l),
    )
}

/// Toroidal distance between two wrapped positions.
pub fn toroidal_distance(a: Vec3, b: Vec3, l: f64) -> f64 {
    min_image_delta(a, b, l).norm()
}

/// Rotate `v` about unit axis `axis` by `angle` (Rodrigues).
pub fn rotate_about(v: Vec3, axis: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    v * c + axis.cross(v) * s + axis * (axis.dot(v) * (1.0 - c))
}

/// An agent's position and orthonormal local frame.
///
/// `heading` is the direction of travel, `up` the local vertical. The third
/// axis is derived: `left = up x heading`, `right = heading x up`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub heading: Vec3,
    pub up: Vec3,
}

impl Pose {
    pub fn new(position: Vec3, heading: Vec3, up: Vec3) -> Self {
        let mut pose = Pose { position, heading, up };
        pose.renormalize();
        pose
    }

    pub fn left(&self) -> Vec3 {
        self.up.cross(self.heading)
    }

    pub fn right(&self) -> Vec3 {
        self.heading.cross(self.up)
    }

    /// Re-orthonormalize the frame (Gram-Schmidt, heading first).
    pub fn renormalize(&mut self) {
        self.heading = self.heading.normalized().unwrap_or(Vec3::X);
        let up = self.up - self.heading * self.up.dot(self.heading);
        self.up = up.normalized().unwrap_or_else(|| {
            // Degenerate frame: pick any vector orthogonal to heading.
            let fallback = if self.heading.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
            (fallback - self.heading * fallback.dot(self.heading))
                .normalized()
                .expect("fallback axis is independent of heading")
        });
    }

    /// Steer by raw motor angles `psi` (pitch) and `theta` (yaw), both
    /// expected in `[0, pi]` and centered so `pi/2` means straight ahead.
    ///
    /// Pitch is applied first, about the local right axis; yaw second,
    /// about the (pitched) up axis. Out-of-range angles are clamped and
    /// counted; the return value is the number of clamp events (0..=2).
    pub fn apply_rotation(&mut self, psi: f64, theta: f64) -> u32 {
        let mut clamps = 0;
        let psi = clamp_angle(psi, &mut clamps);
        let theta = clamp_angle(theta, &mut clamps);
        let pitch = psi - FRAC_PI_2;
        let yaw = theta - FRAC_PI_2;
        if pitch == 0.0 && yaw == 0.0 {
            // Neutral motors leave the frame bit-identical.
            return clamps;
        }

        if pitch != 0.0 {
            let right = self.right();
            self.heading = rotate_about(self.heading, right, pitch);
            self.up = rotate_about(self.up, right, pitch);
        }
        if yaw != 0.0 {
            self.heading = rotate_about(self.heading, self.up, yaw);
        }
        self.renormalize();
        clamps
    }

    /// Move `speed` units along the heading and wrap into the box.
    pub fn advance(&mut self, speed: f64, l: f64) {
        self.position = wrap(self.position + self.heading * speed, l);
    }
}

fn clamp_angle(a: f64, clamps: &mut u32) -> f64 {
    if (0.0..=std::f64::consts::PI).contains(&a) {
        a
    } else {
        *clamps += 1;
        a.clamp(0.0, std::f64::consts::PI)
    }
}
