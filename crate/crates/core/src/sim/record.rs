use std::fmt::Write as _;
use std::io;

use serde::Serialize;

use super::SimError;

/// A simulated tree. Vertex ids are birth order, the root is vertex 0 and
/// types are 0-based in memory (1-based in exports).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeRecord {
    pub p: usize,
    pub root_type: usize,
    pub types: Vec<u32>,
    /// `u32::MAX` marks the root.
    pub parents: Vec<u32>,
    pub birth_times: Vec<f64>,
    /// Row-major `len() x p` child counts.
    pub child_counts: Vec<u32>,
    pub final_time: f64,
    pub events: u64,
    /// Number of per-vertex rate re-evaluations done by the sampler.
    pub rate_updates: u64,
    pub seed: u64,
    pub spec_fingerprint: u64,
}

pub(super) const ROOT_PARENT: u32 = u32::MAX;

impl TreeRecord {
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn vertex_type(&self, v: usize) -> usize {
        self.types[v] as usize
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        let p = self.parents[v];
        (p != ROOT_PARENT).then_some(p as usize)
    }

    pub fn children(&self, v: usize) -> &[u32] {
        &self.child_counts[v * self.p..(v + 1) * self.p]
    }

    pub fn child_total(&self, v: usize) -> u32 {
        self.children(v).iter().sum()
    }

    pub fn check_invariants(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Invariant(msg));
        let n = self.len();
        if n == 0 {
            return bad("empty record".into());
        }
        if self.parents.len() != n || self.birth_times.len() != n || self.child_counts.len() != n * self.p {
            return bad("column lengths disagree".into());
        }
        if self.parents[0] != ROOT_PARENT || self.parents[1..].contains(&ROOT_PARENT) {
            return bad("vertex 0 must be the only root".into());
        }
        if self.types[0] as usize != self.root_type {
            return bad("root type mismatch".into());
        }
        let mut counts = vec![0u32; n * self.p];
        for v in 0..n {
            if self.types[v] as usize >= self.p {
                return bad(format!("vertex {v} has type out of range"));
            }
            if v > 0 {
                if self.birth_times[v] <= self.birth_times[v - 1] {
                    return bad(format!("birth time of vertex {v} is not increasing"));
                }
                let par = self.parents[v] as usize;
                if par >= v {
                    return bad(format!("parent of vertex {v} is born later"));
                }
                counts[par * self.p + self.types[v] as usize] += 1;
            }
        }
        if counts != self.child_counts {
            return bad("child counts disagree with parent links".into());
        }
        Ok(())
    }

    /// Rows `id,type,parent_id,birth_time`; 1-based types, empty parent
    /// for the root, shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.len() * 24);
        s.push_str("id,type,parent_id,birth_time\n");
        for v in 0..self.len() {
            let parent = self.parent(v).map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{}", v, self.types[v] + 1, parent, self.birth_times[v]);
        }
        s
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }
}

/// The tree as a discrete attachment sequence: for each non-root vertex in
/// birth order, its type and the vertex it attached to.
pub fn embed_discrete(record: &TreeRecord) -> Vec<(usize, usize)> {
    (1..record.len())
        .map(|v| (record.vertex_type(v), record.parent(v).expect("non-root")))
        .collect()
}
