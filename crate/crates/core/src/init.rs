//! Starting plans: distance-based, randomized region growth, and repair of an
//! existing (possibly non-contiguous) plan.

use std::collections::VecDeque;

use indexmap::IndexSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::ContiguityGraph;
use crate::partition::{Partition, PartitionError};

#[derive(Debug, Error, PartialEq)]
pub enum InitError {
    #[error("node {0} is unreachable from every center")]
    Unreachable(usize),
    #[error("district {0} contains no center and cannot be repaired")]
    DistrictWithoutCenter(u32),
    #[error("district {district} contains {centers} centers")]
    MultipleCenters { district: u32, centers: usize },
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

/// Assigns every node to its nearest center by hop count, ties going to the
/// lowest district index. The seed is unused.
pub fn init_distance(graph: &ContiguityGraph, _seed: u64) -> Result<Partition, InitError> {
    const UNSET: u32 = u32::MAX;
    let mut assignment = vec![UNSET; graph.num_nodes()];
    let mut queue = VecDeque::with_capacity(graph.num_nodes());
    for (d, &c) in graph.centers().iter().enumerate() {
        assignment[c] = d as u32;
        queue.push_back(c);
    }
    // Layer-synchronous BFS: labels of a layer are final before it expands,
    // so a tied node takes the smallest label among its parents.
    let mut dist = vec![usize::MAX; graph.num_nodes()];
    for &c in graph.centers() {
        dist[c] = 0;
    }
    while let Some(u) = queue.pop_front() {
        for w in graph.neighbors(u) {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                assignment[w] = assignment[u];
                queue.push_back(w);
            } else if dist[w] == dist[u] + 1 && assignment[u] < assignment[w] {
                assignment[w] = assignment[u];
            }
        }
    }
    if let Some(u) = assignment.iter().position(|&d| d == UNSET) {
        return Err(InitError::Unreachable(u));
    }
    Ok(Partition::from_assignment(graph, assignment)?)
}

/// Simultaneous randomized region growth from the centers: repeatedly assign
/// a uniformly drawn (frontier node, adjacent district) pair.
pub fn init_random(graph: &ContiguityGraph, seed: u64) -> Result<Partition, InitError> {
    const UNSET: u32 = u32::MAX;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![UNSET; graph.num_nodes()];
    let mut frontier: IndexSet<(usize, u32)> = IndexSet::new();
    for (d, &c) in graph.centers().iter().enumerate() {
        assignment[c] = d as u32;
    }
    for (d, &c) in graph.centers().iter().enumerate() {
        for w in graph.neighbors(c) {
            if assignment[w] == UNSET {
                frontier.insert((w, d as u32));
            }
        }
    }
    while !frontier.is_empty() {
        let i = rng.gen_range(0..frontier.len());
        let (u, d) = frontier.swap_remove_index(i).expect("index in range");
        if assignment[u] != UNSET {
            continue;
        }
        assignment[u] = d;
        for w in graph.neighbors(u) {
            if assignment[w] == UNSET {
                frontier.insert((w, d));
            }
        }
    }
    if let Some(u) = assignment.iter().position(|&d| d == UNSET) {
        return Err(InitError::Unreachable(u));
    }
    Ok(Partition::from_assignment(graph, assignment)?)
}

/// Restores contiguity of a plan while keeping every center in place.
///
/// Each district keeps the component containing its center. Orphaned
/// fragments are handed over wholesale to the adjacent anchored district with
/// the longest shared boundary (lowest index on ties), repeating until no
/// orphans remain.
pub fn repair_plan(graph: &ContiguityGraph, assignment: Vec<u32>) -> Result<Partition, InitError> {
    // Validates length and range.
    let partition = Partition::from_assignment(graph, assignment)?;
    let k = graph.num_districts();
    let mut assignment = partition.assignment().to_vec();

    let mut center_of = vec![None; k];
    for &c in graph.centers() {
        let d = assignment[c];
        if center_of[d as usize].replace(c).is_some() {
            let centers = graph.centers().iter().filter(|&&x| assignment[x] == d).count();
            return Err(InitError::MultipleCenters { district: d, centers });
        }
    }
    if let Some(d) = center_of.iter().position(Option::is_none) {
        return Err(InitError::DistrictWithoutCenter(d as u32));
    }
    let centers: Vec<usize> = center_of.into_iter().map(|c| c.expect("checked")).collect();

    let n = graph.num_nodes();
    loop {
        // Anchored nodes: connected to their own district's center.
        let mut anchored = vec![false; n];
        for (d, &c) in centers.iter().enumerate() {
            let mut queue = VecDeque::from([c]);
            anchored[c] = true;
            while let Some(x) = queue.pop_front() {
                for y in graph.neighbors(x) {
                    if !anchored[y] && assignment[y] == d as u32 {
                        anchored[y] = true;
                        queue.push_back(y);
                    }
                }
            }
        }
        if anchored.iter().all(|&a| a) {
            break;
        }

        // Orphan fragments, discovered in node order.
        let mut fragment_of = vec![usize::MAX; n];
        let mut fragments: Vec<Vec<usize>> = Vec::new();
        for start in 0..n {
            if anchored[start] || fragment_of[start] != usize::MAX {
                continue;
            }
            let id = fragments.len();
            let label = assignment[start];
            let mut members = vec![start];
            fragment_of[start] = id;
            let mut i = 0;
            while i < members.len() {
                let x = members[i];
                i += 1;
                for y in graph.neighbors(x) {
                    if !anchored[y] && fragment_of[y] == usize::MAX && assignment[y] == label {
                        fragment_of[y] = id;
                        members.push(y);
                    }
                }
            }
            fragments.push(members);
        }

        let mut moved = false;
        for members in &fragments {
            let mut shared = vec![0.0f64; k];
            let mut touches = vec![false; k];
            for &x in members {
                for a in graph.adjacency(x) {
                    if anchored[a.node] {
                        let d = assignment[a.node] as usize;
                        touches[d] = true;
                        shared[d] += graph.edge(a.edge).shared_perimeter;
                    }
                }
            }
            let best = (0..k)
                .filter(|&d| touches[d])
                .fold(None, |best: Option<usize>, d| match best {
                    Some(b) if shared[b] >= shared[d] => Some(b),
                    _ => Some(d),
                });
            if let Some(d) = best {
                for &x in members {
                    assignment[x] = d as u32;
                }
                moved = true;
            }
        }
        // A connected graph always has an orphan fragment next to an anchored node.
        debug_assert!(moved);
        if !moved {
            break;
        }
    }
    Ok(Partition::from_assignment(graph, assignment)?)
}
