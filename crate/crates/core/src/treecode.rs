//! Barnes-Hut style octree for signal propagation.
//!
//! The octree is built over the unwrapped box once per sensing phase and
//! traversed read-only by every receiver. A node whose angular size falls
//! below the opening angle, and whose bounding ball lies entirely inside
//! the cutoff radius, is absorbed as a single point source at its
//! intensity-weighted centroid; everything else is descended, and leaf
//! members are evaluated exactly in ascending emitter order (so an opening
//! angle of zero reproduces exact summation bit for bit).
//!
//! Periodic boundaries are handled by measuring node distances through the
//! minimum image. That is unambiguous only while a node's bounding ball is
//! small relative to `L/2 - cutoff`; larger nodes are simply descended.

use crate::signals::{accumulate, Emitter, SenseParams, SignalFrame};
use crate::vec3::Vec3;
use crate::world::{min_image_delta, Pose};

pub const DEFAULT_LEAF_CAPACITY: usize = 16;
const MAX_DEPTH: usize = 32;
const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Clone, Debug)]
struct Node {
    /// Cube center (unwrapped box coordinates).
    center: Vec3,
    half_width: f64,
    /// Intensity-weighted centroid of the members (arithmetic mean when
    /// the node carries no intensity).
    centroid: Vec3,
    /// Per-channel intensity totals; internal nodes hold the sum of their
    /// children's totals.
    intensity: [f64; 2],
    /// Index range into the member order; valid for every node.
    members: (u32, u32),
    /// Child node indices, `u32::MAX` when absent. Empty for leaves.
    children: [u32; 8],
    leaf: bool,
    depth: u32,
}

const NO_CHILD: u32 = u32::MAX;

impl Node {
    fn contains(&self, p: Vec3) -> bool {
        let h = self.half_width;
        p.x >= self.center.x - h
            && p.x < self.center.x + h
            && p.y >= self.center.y - h
            && p.y < self.center.y + h
            && p.z >= self.center.z - h
            && p.z < self.center.z + h
    }
}

/// Reusable per-thread traversal buffers.
#[derive(Default)]
pub struct TreeScratch {
    stack: Vec<u32>,
    exact: Vec<u32>,
}

#[derive(Debug)]
pub struct SignalTree {
    nodes: Vec<Node>,
    /// Emitter indices, grouped so each node's members are contiguous.
    order: Vec<u32>,
    emitters: Vec<Emitter>,
    box_length: f64,
}

impl SignalTree {
    /// Build an octree over emitters with wrapped positions.
    pub fn build(emitters: Vec<Emitter>, box_length: f64, leaf_capacity: usize) -> Self {
        assert!(leaf_capacity >= 1);
        let mut order: Vec<u32> = (0..emitters.len() as u32).collect();
        let mut tree = SignalTree { nodes: Vec::new(), order: Vec::new(), emitters, box_length };
        if !tree.emitters.is_empty() {
            let half = box_length * 0.5;
            tree.build_node(
                &mut order,
                0,
                Vec3::new(half, half, half),
                half,
                0,
                leaf_capacity,
            );
        }
        tree.order = order;
        tree
    }

    fn build_node(
        &mut self,
        order: &mut [u32],
        offset: u32,
        center: Vec3,
        half_width: f64,
        depth: usize,
        leaf_capacity: usize,
    ) -> u32 {
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node {
            center,
            half_width,
            centroid: Vec3::ZERO,
            intensity: [0.0, 0.0],
            members: (offset, offset + order.len() as u32),
            children: [NO_CHILD; 8],
            leaf: true,
            depth: depth as u32,
        });

        if order.len() <= leaf_capacity || depth >= MAX_DEPTH {
            let (centroid, intensity) = self.aggregate_members(order);
            let node = &mut self.nodes[idx as usize];
            node.centroid = centroid;
            node.intensity = intensity;
            return idx;
        }

        // Stable partition into octants (x high bit, then y, then z).
        let octant_of = |e: &Emitter| -> usize {
            ((e.position.x >= center.x) as usize) << 2
                | ((e.position.y >= center.y) as usize) << 1
                | ((e.position.z >= center.z) as usize)
        };
        let mut buckets: [Vec<u32>; 8] = Default::default();
        for &i in order.iter() {
            buckets[octant_of(&self.emitters[i as usize])].push(i);
        }
        let mut cursor = 0usize;
        let mut children = [NO_CHILD; 8];
        let quarter = half_width * 0.5;
        let mut ranges = [(0usize, 0usize); 8];
        for (o, bucket) in buckets.iter().enumerate() {
            let start = cursor;
            order[cursor..cursor + bucket.len()].copy_from_slice(bucket);
            cursor += bucket.len();
            ranges[o] = (start, cursor);
        }
        for (o, &(start, end)) in ranges.iter().enumerate() {
            if start == end {
                continue;
            }
            let child_center = Vec3::new(
                center.x + if o & 4 != 0 { quarter } else { -quarter },
                center.y + if o & 2 != 0 { quarter } else { -quarter },
                center.z + if o & 1 != 0 { quarter } else { -quarter },
            );
            children[o] = self.build_node(
                &mut order[start..end],
                offset + start as u32,
                child_center,
                quarter,
                depth + 1,
                leaf_capacity,
            );
        }

        // Fold child aggregates upward.
        let mut intensity = [0.0; 2];
        let mut weighted = Vec3::ZERO;
        let mut weight = 0.0;
        let mut count_weighted = Vec3::ZERO;
        let mut count = 0.0;
        for &c in children.iter().filter(|&&c| c != NO_CHILD) {
            let child = &self.nodes[c as usize];
            intensity[0] += child.intensity[0];
            intensity[1] += child.intensity[1];
            let w = child.intensity[0] + child.intensity[1];
            weighted += child.centroid * w;
            weight += w;
            let n = (child.members.1 - child.members.0) as f64;
            count_weighted += child.centroid * n;
            count += n;
        }
        let centroid = if weight > 0.0 { weighted / weight } else { count_weighted / count };
        let node = &mut self.nodes[idx as usize];
        node.children = children;
        node.leaf = false;
        node.centroid = centroid;
        node.intensity = intensity;
        idx
    }

    fn aggregate_members(&self, members: &[u32]) -> (Vec3, [f64; 2]) {
        let mut intensity = [0.0; 2];
        let mut weighted = Vec3::ZERO;
        let mut weight = 0.0;
        let mut mean = Vec3::ZERO;
        for &i in members {
            let e = &self.emitters[i as usize];
            intensity[0] += e.intensity[0];
            intensity[1] += e.intensity[1];
            let w = e.intensity[0] + e.intensity[1];
            weighted += e.position * w;
            weight += w;
            mean += e.position;
        }
        let centroid = if weight > 0.0 {
            weighted / weight
        } else if members.is_empty() {
            Vec3::ZERO
        } else {
            mean / members.len() as f64
        };
        (centroid, intensity)
    }

    pub fn len(&self) -> usize {
        self.emitters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emitters.is_empty()
    }

    pub fn emitters(&self) -> &[Emitter] {
        &self.emitters
    }

    /// Per-channel intensity totals at the root.
    pub fn root_intensity(&self) -> [f64; 2] {
        if self.nodes.is_empty() {
            [0.0, 0.0]
        } else {
            self.nodes[0].intensity
        }
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth as usize).max().unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Check the aggregate-sum invariant on every internal node.
    pub fn aggregates_consistent(&self, tol: f64) -> bool {
        self.nodes.iter().all(|n| {
            if n.leaf {
                return true;
            }
            let mut sum = [0.0; 2];
            for &c in n.children.iter().filter(|&&c| c != NO_CHILD) {
                sum[0] += self.nodes[c as usize].intensity[0];
                sum[1] += self.nodes[c as usize].intensity[1];
            }
            (sum[0] - n.intensity[0]).abs() <= tol * n.intensity[0].abs().max(1.0)
                && (sum[1] - n.intensity[1]).abs() <= tol * n.intensity[1].abs().max(1.0)
        })
    }

    /// Sense the field at `pose` with opening angle `theta`.
    ///
    /// `skip` removes one emitter index (the receiver itself). With
    /// `theta = 0` every node is opened and the result matches
    /// [`crate::signals::sense_exact`] exactly.
    pub fn sense(
        &self,
        pose: &Pose,
        skip: Option<u32>,
        theta: f64,
        params: &SenseParams,
        scratch: &mut TreeScratch,
    ) -> SignalFrame {
        let mut frame = SignalFrame::zero();
        if self.nodes.is_empty() {
            return frame;
        }
        let l = self.box_length;
        // Nodes with bounding balls at least this large cannot use the
        // minimum image unambiguously and are always descended.
        let safe_ball = 0.5 * l - params.cutoff;
        let prune_slack = 1e-9 * params.cutoff;

        scratch.stack.clear();
        scratch.exact.clear();
        scratch.stack.push(0);
        while let Some(n) = scratch.stack.pop() {
            let node = &self.nodes[n as usize];
            let ball = node.half_width * SQRT3;
            let inside = node.contains(pose.position);
            if !inside && ball < safe_ball {
                let to_center = min_image_delta(pose.position, node.center, l);
                let dist_center = to_center.norm();
                if dist_center - ball > params.cutoff + prune_slack {
                    continue;
                }
                let to_centroid = min_image_delta(pose.position, node.centroid, l);
                let dist_centroid = to_centroid.norm();
                if 2.0 * node.half_width < theta * dist_centroid
                    && dist_center + ball <= params.cutoff
                {
                    accumulate(
                        &mut frame,
                        pose,
                        &Emitter { position: node.centroid, intensity: node.intensity },
                        params,
                    );
                    continue;
                }
            }
            if node.leaf {
                let (start, end) = node.members;
                scratch.exact.extend_from_slice(&self.order[start as usize..end as usize]);
            } else {
                for &c in node.children.iter().rev() {
                    if c != NO_CHILD {
                        scratch.stack.push(c);
                    }
                }
            }
        }

        scratch.exact.sort_unstable();
        for &i in &scratch.exact {
            if Some(i) != skip {
                accumulate(&mut frame, pose, &self.emitters[i as usize], params);
            }
        }
        frame
    }
}
