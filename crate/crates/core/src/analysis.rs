//! Offline analytics over run logs. Everything here is a pure function of
//! its inputs; re-running an analysis produces identical bytes.

use crate::evolution::LineageRecord;
use crate::grid::UniformGrid;
use crate::logs::AgentRow;
use crate::vec3::Vec3;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("PCA needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("lineage is corrupt: {0}")]
    CorruptLineage(String),
    #[error("failed to parse Newick text: {0}")]
    NewickParse(String),
}

/// Mean neighbor count of living agents per logged step.
pub fn neighbor_series(rows: &[AgentRow]) -> Vec<(u64, f64)> {
    let mut out: Vec<(u64, f64)> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let step = rows[i].step;
        let mut sum = 0u64;
        let mut n = 0u64;
        while i < rows.len() && rows[i].step == step {
            sum += rows[i].neighbors as u64;
            n += 1;
            i += 1;
        }
        out.push((step, sum as f64 / n as f64));
    }
    out
}

#[derive(Clone, Debug)]
pub struct PcaResult {
    /// Top-k component vectors, rows of length `d`, orthonormal, each with
    /// its largest-magnitude entry made positive.
    pub components: Vec<Vec<f64>>,
    /// All `d` explained-variance ratios, non-increasing, summing to <= 1.
    pub explained_variance_ratio: Vec<f64>,
    /// Per-row projection onto the first two components.
    pub projection: Vec<(f64, f64)>,
    /// Column means used for centering.
    pub mean: Vec<f64>,
}

impl PcaResult {
    /// Project a raw row onto the first two components.
    pub fn project2(&self, row: &[f64]) -> (f64, f64) {
        let mut p = (0.0, 0.0);
        for (j, &x) in row.iter().enumerate() {
            let c = x - self.mean[j];
            if let Some(c0) = self.components.first() {
                p.0 += c * c0[j];
            }
            if let Some(c1) = self.components.get(1) {
                p.1 += c * c1[j];
            }
        }
        p
    }
}

/// Covariance-eigendecomposition PCA with a deterministic sign convention.
pub fn pca(rows: &[Vec<f64>], top_k: usize) -> Result<PcaResult, AnalysisError> {
    let n = rows.len();
    if n < 2 {
        return Err(AnalysisError::TooFewRows(n));
    }
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for row in rows {
        assert_eq!(row.len(), d, "ragged genotype matrix");
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eigen = nalgebra::SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eigen.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    let ratios: Vec<f64> = if total > 0.0 {
        eigenvalues.iter().map(|&l| l / total).collect()
    } else {
        vec![0.0; d]
    };

    let k = top_k.min(d);
    let mut components = Vec::with_capacity(k);
    for &col in order.iter().take(k) {
        let mut v: Vec<f64> = eigen.eigenvectors.column(col).iter().copied().collect();
        // Deterministic sign: make the largest-magnitude entry positive.
        let dominant = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        if v[dominant] < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
        components.push(v);
    }

    let projection = rows
        .iter()
        .map(|row| {
            let centered = DVector::from_fn(d, |j, _| row[j] - mean[j]);
            let p0 = components
                .first()
                .map(|c| c.iter().zip(centered.iter()).map(|(a, b)| a * b).sum())
                .unwrap_or(0.0);
            let p1 = components
                .get(1)
                .map(|c| c.iter().zip(centered.iter()).map(|(a, b)| a * b).sum())
                .unwrap_or(0.0);
            (p0, p1)
        })
        .collect();

    Ok(PcaResult { components, explained_variance_ratio: ratios, projection, mean })
}

/// A phylogeny node in the bifurcation representation: every birth splits
/// the parent's timeline, so each agent ends in exactly one leaf labeled
/// with its id.
#[derive(Clone, Debug, PartialEq)]
pub struct NewickNode {
    pub label: String,
    pub length: f64,
    pub children: Vec<NewickNode>,
}

fn validate_lineage(records: &[LineageRecord]) -> Result<(), AnalysisError> {
    let by_id: std::collections::HashMap<u64, &LineageRecord> =
        records.iter().map(|r| (r.id, r)).collect();
    if by_id.len() != records.len() {
        return Err(AnalysisError::CorruptLineage("duplicate ids".to_string()));
    }
    for r in records {
        if let Some(pid) = r.parent {
            let parent = by_id.get(&pid).ok_or_else(|| {
                AnalysisError::CorruptLineage(format!("agent {} has unknown parent {pid}", r.id))
            })?;
            if parent.birth_step >= r.birth_step {
                return Err(AnalysisError::CorruptLineage(format!(
                    "parent {} (born {}) not older than child {} (born {}); lineage has a cycle or corrupt rows",
                    pid, parent.birth_step, r.id, r.birth_step
                )));
            }
            if let Some(d) = parent.death_step {
                if d < r.birth_step {
                    return Err(AnalysisError::CorruptLineage(format!(
                        "parent {} died at {} before child {} was born at {}",
                        pid, d, r.id, r.birth_step
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Build one tree per founder. Branch lengths are step spans; an agent's
/// timeline is split at each of its children's births and its final
/// segment is the leaf carrying its id.
pub fn phylogeny_forest(
    records: &[LineageRecord],
    end_step: u64,
) -> Result<Vec<NewickNode>, AnalysisError> {
    validate_lineage(records)?;
    let mut children: std::collections::HashMap<u64, Vec<&LineageRecord>> =
        std::collections::HashMap::new();
    for r in records {
        if let Some(pid) = r.parent {
            children.entry(pid).or_default().push(r);
        }
    }
    for list in children.values_mut() {
        list.sort_by_key(|r| (r.birth_step, r.id));
    }

    // `child_cursor` walks the agent's birth events; each one splits the
    // timeline into (continuation, newborn subtree).
    fn subtree(
        record: &LineageRecord,
        from_step: u64,
        child_cursor: usize,
        children: &std::collections::HashMap<u64, Vec<&LineageRecord>>,
        end_step: u64,
    ) -> NewickNode {
        let kids = children.get(&record.id).map(Vec::as_slice).unwrap_or(&[]);
        if child_cursor >= kids.len() {
            return NewickNode {
                label: record.id.to_string(),
                length: (record.death_step.unwrap_or(end_step)).saturating_sub(from_step) as f64,
                children: Vec::new(),
            };
        }
        let child = kids[child_cursor];
        let split = child.birth_step;
        let continuation = subtree(record, split, child_cursor + 1, children, end_step);
        let child_tree = subtree(child, split, 0, children, end_step);
        NewickNode {
            label: String::new(),
            length: split.saturating_sub(from_step) as f64,
            children: vec![continuation, child_tree],
        }
    }

    Ok(records
        .iter()
        .filter(|r| r.parent.is_none())
        .map(|founder| subtree(founder, founder.birth_step, 0, &children, end_step))
        .collect())
}

fn write_node(node: &NewickNode, out: &mut String) {
    if !node.children.is_empty() {
        out.push('(');
        for (i, child) in node.children.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write_node(child, out);
        }
        out.push(')');
    }
    out.push_str(&node.label);
    out.push(':');
    out.push_str(&format_length(node.length));
}

fn format_length(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// One Newick string per tree, `;`-terminated.
pub fn to_newick(node: &NewickNode) -> String {
    let mut out = String::new();
    write_node(node, &mut out);
    out.push(';');
    out
}

/// Minimal Newick parser covering what [`to_newick`] emits.
pub fn parse_newick(text: &str) -> Result<NewickNode, AnalysisError> {
    struct Parser<'a> {
        chars: std::iter::Peekable<std::str::Chars<'a>>,
    }
    impl Parser<'_> {
        fn err(&mut self, what: &str) -> AnalysisError {
            AnalysisError::NewickParse(what.to_string())
        }
        fn node(&mut self) -> Result<NewickNode, AnalysisError> {
            let mut children = Vec::new();
            if self.chars.peek() == Some(&'(') {
                self.chars.next();
                loop {
                    children.push(self.node()?);
                    match self.chars.next() {
                        Some(',') => continue,
                        Some(')') => break,
                        _ => return Err(self.err("expected ',' or ')'")),
                    }
                }
            }
            let mut label = String::new();
            while let Some(&c) = self.chars.peek() {
                if c == ':' || c == ',' || c == ')' || c == ';' {
                    break;
                }
                label.push(c);
                self.chars.next();
            }
            let mut length = 0.0;
            if self.chars.peek() == Some(&':') {
                self.chars.next();
                let mut num = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' || c == 'e' || c == 'E'
                    {
                        num.push(c);
                        self.chars.next();
                    } else {
                        break;
                    }
                }
                length = num
                    .parse()
                    .map_err(|_| AnalysisError::NewickParse(format!("bad length {num}")))?;
            }
            Ok(NewickNode { label, length, children })
        }
    }
    let mut p = Parser { chars: text.trim().chars().peekable() };
    let node = p.node()?;
    match p.chars.next() {
        Some(';') => Ok(node),
        other => Err(AnalysisError::NewickParse(format!(
            "expected terminating ';', found {other:?}"
        ))),
    }
}

/// Excess cooperator frequency around cooperators: mean over cooperators
/// (with at least one neighbor) of the cooperating fraction among their
/// neighbors, minus the global cooperator fraction. Positive values mean
/// clustering; returns 0 when there are no cooperators with neighbors.
pub fn assortment(positions: &[Vec3], actions: &[bool], radius: f64, box_length: f64) -> f64 {
    assert_eq!(positions.len(), actions.len());
    if positions.is_empty() {
        return 0.0;
    }
    let total = positions.len() as f64;
    let global = actions.iter().filter(|&&a| a).count() as f64 / total;
    let grid = UniformGrid::build(positions, box_length, radius.min(box_length / 2.0));
    let mut acc = 0.0;
    let mut count = 0u64;
    for i in 0..positions.len() {
        if !actions[i] {
            continue;
        }
        let neighbors = grid.neighbors_within(positions, i, radius);
        if neighbors.is_empty() {
            continue;
        }
        let coop = neighbors.iter().filter(|&&(j, _, _)| actions[j as usize]).count();
        acc += coop as f64 / neighbors.len() as f64;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        acc / count as f64 - global
    }
}

/// Sample mean and (population) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}
