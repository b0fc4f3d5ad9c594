//! City region graph: boundary adjacency plus a two-level containment
//! hierarchy (region -> parent district).
//!
//! Region ids are arbitrary non-negative integers (the bundled Chicago
//! graph uses the official community-area numbers 1..=77). Internally every
//! region also has a dense index `0..N` in ascending id order; tensors are
//! laid out by dense index.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Chicago community-area adjacency and side membership, format version 1.
pub const CHICAGO_GRAPH: &str = include_str!("../data/chicago_community_areas.graph");

#[derive(Debug, Clone, PartialEq)]
pub struct RegionGraph {
    ids: Vec<u32>,
    index: HashMap<u32, usize>,
    parent: Vec<u32>,
    /// Dense neighborhood lists, self included, ascending.
    neighborhoods: Vec<Vec<usize>>,
    /// Dense indices of all regions sharing each region's parent.
    siblings: Vec<Vec<usize>>,
    edge_count: usize,
}

impl RegionGraph {
    pub fn build(edges: &[(u32, u32)], parents: &BTreeMap<u32, u32>) -> Result<Self> {
        let ids: Vec<u32> = parents.keys().copied().collect();
        let index: HashMap<u32, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

        let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ids.len()];
        let mut unique = BTreeSet::new();
        for &(a, b) in edges {
            if a == b {
                return Err(Error::Graph(format!("self-loop on region {a}")));
            }
            let ia = *index
                .get(&a)
                .ok_or_else(|| Error::Graph(format!("region {a} has no parent")))?;
            let ib = *index
                .get(&b)
                .ok_or_else(|| Error::Graph(format!("region {b} has no parent")))?;
            adjacency[ia].insert(ib);
            adjacency[ib].insert(ia);
            unique.insert((ia.min(ib), ia.max(ib)));
        }

        let neighborhoods = adjacency
            .into_iter()
            .enumerate()
            .map(|(i, mut set)| {
                set.insert(i);
                set.into_iter().collect()
            })
            .collect();

        let parent: Vec<u32> = ids.iter().map(|id| parents[id]).collect();
        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &p) in parent.iter().enumerate() {
            groups.entry(p).or_default().push(i);
        }
        let siblings = parent.iter().map(|p| groups[p].clone()).collect();

        Ok(Self {
            ids,
            index,
            parent,
            neighborhoods,
            siblings,
            edge_count: unique.len(),
        })
    }

    /// Parses the line-oriented graph format:
    ///
    /// ```text
    /// # comment
    /// parent <region-id> <parent-id>
    /// edge <region-id> <region-id>
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut parents = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |detail: &str| Error::Format {
                what: "graph file",
                detail: format!("line {}: {detail}: {raw:?}", lineno + 1),
            };
            if fields.len() != 3 {
                return Err(bad("expected `<kind> <id> <id>`"));
            }
            let a: u32 = fields[1].parse().map_err(|_| bad("bad id"))?;
            let b: u32 = fields[2].parse().map_err(|_| bad("bad id"))?;
            match fields[0] {
                "edge" => edges.push((a, b)),
                "parent" => {
                    if parents.insert(a, b).is_some_and(|prev| prev != b) {
                        return Err(bad("conflicting parent"));
                    }
                }
                _ => return Err(bad("unknown record kind")),
            }
        }
        Self::build(&edges, &parents)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn chicago() -> Self {
        Self::parse(CHICAGO_GRAPH).expect("bundled graph file is valid")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, &id) in self.ids.iter().enumerate() {
            let _ = writeln!(out, "parent {id} {}", self.parent[i]);
        }
        for (i, nbrs) in self.neighborhoods.iter().enumerate() {
            for &j in nbrs.iter().filter(|&&j| j > i) {
                let _ = writeln!(out, "edge {} {}", self.ids[i], self.ids[j]);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn index_of(&self, id: u32) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownRegion(id))
    }

    pub fn id_of(&self, index: usize) -> u32 {
        self.ids[index]
    }

    pub fn parent_of(&self, id: u32) -> Result<u32> {
        Ok(self.parent[self.index_of(id)?])
    }

    pub fn parent_count(&self) -> usize {
        self.parent.iter().collect::<BTreeSet<_>>().len()
    }

    /// First-order neighbors of `id` including itself, ascending.
    pub fn neighborhood(&self, id: u32) -> Result<Vec<u32>> {
        let i = self.index_of(id)?;
        Ok(self.neighborhoods[i].iter().map(|&j| self.ids[j]).collect())
    }

    /// Dense-index variant of [`Self::neighborhood`].
    pub fn neighborhood_of(&self, index: usize) -> &[usize] {
        &self.neighborhoods[index]
    }

    /// Dense indices of every region under the same parent as `index`.
    pub fn siblings_of(&self, index: usize) -> &[usize] {
        &self.siblings[index]
    }

    /// Parent-level feature: each region receives the sum of `x` over all
    /// regions sharing its parent. `x` is indexed by dense region index.
    pub fn parent_feature<S: Real>(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.len() {
            return Err(Error::Shape(format!(
                "parent_feature: {} values for {} regions",
                x.len(),
                self.len()
            )));
        }
        Ok(self
            .siblings
            .iter()
            .map(|group| group.iter().fold(S::zero(), |acc, &n| acc + x[n]))
            .collect())
    }

    pub fn is_connected(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighborhoods[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}
