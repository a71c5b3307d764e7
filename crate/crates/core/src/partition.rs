//! K-way districting plan with incrementally maintained aggregates.
//!
//! Besides the assignment, a [`Partition`] keeps per-district totals, the set
//! of boundary `(node, adjacent district)` pairs the flip proposal samples
//! from, and the set of cut edges. A flip touches only the donor and
//! recipient totals and the boundary structures around the flipped node.

use std::collections::hash_map::DefaultHasher;
use std::collections::{HashSet, VecDeque};
use std::hash::{Hash, Hasher};

use indexmap::IndexSet;
use thiserror::Error;

use crate::graph::{district_geometry_delta, ContiguityGraph};

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("assignment has {got} entries but the graph has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("node {node} assigned to district {district}, outside 0..{num_districts}")]
    DistrictOutOfRange {
        node: usize,
        district: u32,
        num_districts: usize,
    },
    #[error("invalid flip of node {node}: {reason}")]
    InvalidMove { node: usize, reason: &'static str },
}

/// Running totals for one district.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DistrictStats {
    pub population: u64,
    pub capacity: u64,
    pub size: usize,
    pub centers: u32,
    pub area: f64,
    pub perimeter: f64,
}

/// Reassignment of one boundary node from `donor` to `recipient`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlipMove {
    pub node: usize,
    pub donor: u32,
    pub recipient: u32,
}

impl FlipMove {
    pub fn inverse(&self) -> FlipMove {
        FlipMove {
            node: self.node,
            donor: self.recipient,
            recipient: self.donor,
        }
    }
}

/// Donor and recipient totals as they would be after a flip, computed
/// without touching the partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposedFlip {
    pub mv: FlipMove,
    pub donor: DistrictStats,
    pub recipient: DistrictStats,
}

/// District totals of either the committed plan or the plan with one
/// proposed flip applied.
#[derive(Debug, Clone, Copy)]
pub struct PlanView<'a> {
    partition: &'a Partition,
    flip: Option<&'a ProposedFlip>,
}

impl<'a> PlanView<'a> {
    pub fn num_districts(&self) -> usize {
        self.partition.num_districts()
    }

    pub fn district(&self, d: u32) -> &'a DistrictStats {
        match self.flip {
            Some(f) if d == f.mv.donor => &f.donor,
            Some(f) if d == f.mv.recipient => &f.recipient,
            _ => &self.partition.districts[d as usize],
        }
    }

    pub fn districts(&self) -> impl Iterator<Item = &'a DistrictStats> + Clone + 'a {
        let view = *self;
        (0..self.num_districts() as u32).map(move |d| view.district(d))
    }

    pub fn flip(&self) -> Option<&'a ProposedFlip> {
        self.flip
    }

    pub fn partition(&self) -> &'a Partition {
        self.partition
    }
}

/// Reusable buffers for the local contiguity search.
#[derive(Debug, Clone, Default)]
pub struct ContiguityScratch {
    stamp: Vec<u32>,
    epoch: u32,
    queue: VecDeque<usize>,
    targets: Vec<usize>,
}

impl ContiguityScratch {
    pub fn new(num_nodes: usize) -> Self {
        ContiguityScratch {
            stamp: vec![0; num_nodes],
            epoch: 0,
            queue: VecDeque::new(),
            targets: Vec::new(),
        }
    }

    fn next_epoch(&mut self, num_nodes: usize) -> u32 {
        if self.stamp.len() != num_nodes {
            self.stamp = vec![0; num_nodes];
            self.epoch = 0;
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.queue.clear();
        self.epoch
    }
}

#[derive(Debug, Clone)]
pub struct Partition {
    assignment: Vec<u32>,
    districts: Vec<DistrictStats>,
    /// Per node: `(district, number of neighbors in it)`, zero counts dropped.
    neighbor_districts: Vec<Vec<(u32, u32)>>,
    boundary_pairs: IndexSet<(usize, u32)>,
    cut_edges: IndexSet<usize>,
}

impl Partition {
    /// Builds a partition from a zero-based assignment, computing every
    /// aggregate from scratch.
    pub fn from_assignment(graph: &ContiguityGraph, assignment: Vec<u32>) -> Result<Self, PartitionError> {
        let n = graph.num_nodes();
        let k = graph.num_districts();
        if assignment.len() != n {
            return Err(PartitionError::LengthMismatch {
                expected: n,
                got: assignment.len(),
            });
        }
        if let Some((node, &district)) = assignment.iter().enumerate().find(|(_, &d)| d as usize >= k) {
            return Err(PartitionError::DistrictOutOfRange {
                node,
                district,
                num_districts: k,
            });
        }

        let mut districts = vec![DistrictStats::default(); k];
        for (u, &d) in assignment.iter().enumerate() {
            let stats = &mut districts[d as usize];
            stats.population += graph.population(u);
            stats.capacity += graph.capacity(u);
            stats.size += 1;
            stats.centers += graph.is_center(u) as u32;
            stats.area += graph.area(u);
            stats.perimeter += graph.exterior_perimeter(u);
        }

        let mut cut_edges = IndexSet::new();
        for (e, edge) in graph.edges().iter().enumerate() {
            let (u, v) = edge.endpoints;
            if assignment[u] == assignment[v] {
                districts[assignment[u] as usize].perimeter -= 2.0 * edge.shared_perimeter;
            } else {
                cut_edges.insert(e);
            }
        }

        let mut neighbor_districts = vec![Vec::new(); n];
        let mut boundary_pairs = IndexSet::new();
        for u in 0..n {
            let counts: &mut Vec<(u32, u32)> = &mut neighbor_districts[u];
            for w in graph.neighbors(u) {
                bump(counts, assignment[w]);
            }
            for &(d, _) in counts.iter() {
                if d != assignment[u] {
                    boundary_pairs.insert((u, d));
                }
            }
        }

        Ok(Partition {
            assignment,
            districts,
            neighbor_districts,
            boundary_pairs,
            cut_edges,
        })
    }

    pub fn num_districts(&self) -> usize {
        self.districts.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    #[inline]
    pub fn district_of(&self, u: usize) -> u32 {
        self.assignment[u]
    }

    pub fn district(&self, d: u32) -> &DistrictStats {
        &self.districts[d as usize]
    }

    pub fn districts(&self) -> &[DistrictStats] {
        &self.districts
    }

    pub fn view(&self) -> PlanView<'_> {
        PlanView {
            partition: self,
            flip: None,
        }
    }

    pub fn view_with<'a>(&'a self, flip: &'a ProposedFlip) -> PlanView<'a> {
        PlanView {
            partition: self,
            flip: Some(flip),
        }
    }

    /// The `(node, adjacent foreign district)` pairs; the flip proposal draws
    /// uniformly from this set.
    pub fn boundary_pairs(&self) -> &IndexSet<(usize, u32)> {
        &self.boundary_pairs
    }

    pub fn cut_edges(&self) -> &IndexSet<usize> {
        &self.cut_edges
    }

    pub fn boundary_nodes(&self) -> HashSet<usize> {
        self.boundary_pairs.iter().map(|&(u, _)| u).collect()
    }

    /// Number of neighbors of `u` assigned to district `d`.
    pub fn neighbors_in(&self, u: usize, d: u32) -> u32 {
        self.neighbor_districts[u]
            .iter()
            .find(|(x, _)| *x == d)
            .map_or(0, |&(_, c)| c)
    }

    /// Node lists per district, each in increasing node order.
    pub fn district_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_districts()];
        for (u, &d) in self.assignment.iter().enumerate() {
            members[d as usize].push(u);
        }
        members
    }

    pub fn max_district_size(&self) -> usize {
        self.districts.iter().map(|d| d.size).max().unwrap_or(0)
    }

    /// Checks the structural preconditions of a flip.
    pub fn validate_move(&self, mv: &FlipMove) -> Result<(), PartitionError> {
        let invalid = |reason| PartitionError::InvalidMove { node: mv.node, reason };
        if mv.node >= self.num_nodes() {
            return Err(invalid("node out of range"));
        }
        if mv.recipient as usize >= self.num_districts() {
            return Err(invalid("recipient out of range"));
        }
        if mv.donor == mv.recipient {
            return Err(invalid("donor equals recipient"));
        }
        if self.assignment[mv.node] != mv.donor {
            return Err(invalid("node is not in the donor district"));
        }
        if self.neighbors_in(mv.node, mv.recipient) == 0 {
            return Err(invalid("node has no neighbor in the recipient district"));
        }
        Ok(())
    }

    /// Donor and recipient totals after `mv`, without committing it.
    pub fn preview_flip(&self, graph: &ContiguityGraph, mv: FlipMove) -> ProposedFlip {
        let u = mv.node;
        let geometry = district_geometry_delta(graph, &mv, self);
        let center = graph.is_center(u) as u32;

        let mut donor = self.districts[mv.donor as usize];
        donor.population -= graph.population(u);
        donor.capacity -= graph.capacity(u);
        donor.size -= 1;
        donor.centers -= center;
        donor.area += geometry.donor_area;
        donor.perimeter += geometry.donor_perimeter;

        let mut recipient = self.districts[mv.recipient as usize];
        recipient.population += graph.population(u);
        recipient.capacity += graph.capacity(u);
        recipient.size += 1;
        recipient.centers += center;
        recipient.area += geometry.recipient_area;
        recipient.perimeter += geometry.recipient_perimeter;

        ProposedFlip { mv, donor, recipient }
    }

    /// Validates and applies a flip.
    pub fn apply_flip(&mut self, graph: &ContiguityGraph, mv: FlipMove) -> Result<(), PartitionError> {
        self.validate_move(&mv)?;
        let proposed = self.preview_flip(graph, mv);
        self.commit(graph, &proposed);
        Ok(())
    }

    /// Commits a previewed flip. The preview must have been computed against
    /// the current state.
    pub fn commit(&mut self, graph: &ContiguityGraph, proposed: &ProposedFlip) {
        let FlipMove {
            node: u,
            donor,
            recipient,
        } = proposed.mv;
        debug_assert_eq!(self.assignment[u], donor);
        self.districts[donor as usize] = proposed.donor;
        self.districts[recipient as usize] = proposed.recipient;
        self.assignment[u] = recipient;

        // Pairs owned by u itself.
        self.boundary_pairs.swap_remove(&(u, recipient));
        if self.neighbors_in(u, donor) > 0 {
            self.boundary_pairs.insert((u, donor));
        }

        for a in graph.adjacency(u) {
            let w = a.node;
            let home = self.assignment[w];
            let counts = &mut self.neighbor_districts[w];
            if drop(counts, donor) && home != donor {
                self.boundary_pairs.swap_remove(&(w, donor));
            }
            if bump(counts, recipient) && home != recipient {
                self.boundary_pairs.insert((w, recipient));
            }
            if home == recipient {
                self.cut_edges.swap_remove(&a.edge);
            } else {
                self.cut_edges.insert(a.edge);
            }
        }
    }

    /// Whether the district of `node` stays connected once `node` leaves it.
    pub fn is_district_connected_after_removal(&self, graph: &ContiguityGraph, node: usize) -> bool {
        let mut scratch = ContiguityScratch::new(graph.num_nodes());
        self.is_district_connected_after_removal_with(graph, node, &mut scratch)
    }

    /// Breadth-first search inside the district from one in-district neighbor
    /// of `node`, stopping as soon as every in-district neighbor is reached.
    pub fn is_district_connected_after_removal_with(
        &self,
        graph: &ContiguityGraph,
        node: usize,
        scratch: &mut ContiguityScratch,
    ) -> bool {
        let d = self.assignment[node];
        let targets = self.neighbors_in(node, d) as usize;
        if targets <= 1 {
            return true;
        }
        let epoch = scratch.next_epoch(graph.num_nodes());
        scratch.targets.clear();
        scratch
            .targets
            .extend(graph.neighbors(node).filter(|&w| self.assignment[w] == d));
        let start = scratch.targets.swap_remove(0);
        scratch.stamp[node] = epoch;
        scratch.stamp[start] = epoch;
        scratch.queue.push_back(start);
        while let Some(x) = scratch.queue.pop_front() {
            for y in graph.neighbors(x) {
                if self.assignment[y] != d || scratch.stamp[y] == epoch {
                    continue;
                }
                if let Some(i) = scratch.targets.iter().position(|&t| t == y) {
                    scratch.targets.swap_remove(i);
                    if scratch.targets.is_empty() {
                        return true;
                    }
                }
                scratch.stamp[y] = epoch;
                scratch.queue.push_back(y);
            }
        }
        false
    }

    /// Whether district `d` induces a connected subgraph (empty counts as
    /// connected).
    pub fn is_district_connected(&self, graph: &ContiguityGraph, d: u32) -> bool {
        let members: Vec<usize> = (0..self.num_nodes()).filter(|&u| self.assignment[u] == d).collect();
        let Some(&start) = members.first() else {
            return true;
        };
        let mut seen = vec![false; self.num_nodes()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut reached = 1;
        while let Some(x) = queue.pop_front() {
            for y in graph.neighbors(x) {
                if self.assignment[y] == d && !seen[y] {
                    seen[y] = true;
                    reached += 1;
                    queue.push_back(y);
                }
            }
        }
        reached == members.len()
    }

    pub fn all_districts_connected(&self, graph: &ContiguityGraph) -> bool {
        (0..self.num_districts() as u32).all(|d| self.is_district_connected(graph, d))
    }

    /// Stable hash of the assignment and every aggregate.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.assignment.hash(&mut h);
        for d in &self.districts {
            (d.population, d.capacity, d.size, d.centers).hash(&mut h);
            d.area.to_bits().hash(&mut h);
            d.perimeter.to_bits().hash(&mut h);
        }
        let mut pairs: Vec<_> = self.boundary_pairs.iter().copied().collect();
        pairs.sort_unstable();
        pairs.hash(&mut h);
        let mut cuts: Vec<_> = self.cut_edges.iter().copied().collect();
        cuts.sort_unstable();
        cuts.hash(&mut h);
        h.finish()
    }
}

impl PartialEq for Partition {
    fn eq(&self, other: &Self) -> bool {
        let sorted = |v: &Vec<(u32, u32)>| {
            let mut v = v.clone();
            v.sort_unstable();
            v
        };
        self.assignment == other.assignment
            && self.districts == other.districts
            && self.boundary_pairs == other.boundary_pairs
            && self.cut_edges == other.cut_edges
            && self
                .neighbor_districts
                .iter()
                .zip(&other.neighbor_districts)
                .all(|(a, b)| sorted(a) == sorted(b))
    }
}

/// Increments the count for `d`; true if it went from zero to one.
fn bump(counts: &mut Vec<(u32, u32)>, d: u32) -> bool {
    match counts.iter_mut().find(|(x, _)| *x == d) {
        Some((_, c)) => {
            *c += 1;
            false
        }
        None => {
            counts.push((d, 1));
            true
        }
    }
}

/// Decrements the count for `d`; true if it reached zero.
fn drop(counts: &mut Vec<(u32, u32)>, d: u32) -> bool {
    let i = counts
        .iter()
        .position(|(x, _)| *x == d)
        .expect("neighbor count present for the donor district");
    counts[i].1 -= 1;
    if counts[i].1 == 0 {
        counts.swap_remove(i);
        true
    } else {
        false
    }
}
