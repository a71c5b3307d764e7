#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use flipdist::graph::ContiguityGraph;
use flipdist::partition::Partition;

/// Per-district totals recomputed from the raw assignment.
#[derive(Debug, Clone, Default)]
pub struct Totals {
    pub population: u64,
    pub capacity: u64,
    pub size: usize,
    pub centers: u32,
    pub area: f64,
    pub perimeter: f64,
}

pub fn totals(graph: &ContiguityGraph, assignment: &[u32], k: usize) -> Vec<Totals> {
    let mut out = vec![Totals::default(); k];
    for (u, &d) in assignment.iter().enumerate() {
        let t = &mut out[d as usize];
        let node = graph.node(u);
        t.population += graph.population(u);
        t.capacity += node.capacity;
        t.size += 1;
        t.centers += node.is_center as u32;
        t.area += node.area;
        t.perimeter += node.exterior_perimeter;
    }
    for e in graph.edges() {
        let (u, v) = e.endpoints;
        if assignment[u] == assignment[v] {
            out[assignment[u] as usize].perimeter -= 2.0 * e.shared_perimeter;
        }
    }
    out
}

/// Perimeter of each district on a unit-square grid: four sides per cell
/// minus two per same-district grid neighbour pair.
pub fn grid_perimeters(rows: usize, cols: usize, assignment: &[u32], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k];
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            let d = assignment[i];
            let mut sides = 4.0;
            let nbrs = [
                (r > 0).then(|| i - cols),
                (r + 1 < rows).then(|| i + cols),
                (c > 0).then(|| i - 1),
                (c + 1 < cols).then(|| i + 1),
            ];
            for j in nbrs.into_iter().flatten() {
                if assignment[j] == d {
                    sides -= 1.0;
                }
            }
            out[d as usize] += sides;
        }
    }
    out
}

pub fn boundary_pairs(graph: &ContiguityGraph, assignment: &[u32]) -> BTreeSet<(usize, u32)> {
    let mut out = BTreeSet::new();
    for e in graph.edges() {
        let (u, v) = e.endpoints;
        if assignment[u] != assignment[v] {
            out.insert((u, assignment[v]));
            out.insert((v, assignment[u]));
        }
    }
    out
}

pub fn cut_edges(graph: &ContiguityGraph, assignment: &[u32]) -> BTreeSet<usize> {
    graph
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| assignment[e.endpoints.0] != assignment[e.endpoints.1])
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct Scores {
    pub imbalance: f64,
    pub harmonic_pp: f64,
    pub dispersion: f64,
    pub balance: f64,
    pub compactness: f64,
}

pub fn scores(t: &[Totals], lambda: f64) -> Scores {
    let pp: Vec<f64> = t
        .iter()
        .map(|d| 4.0 * PI * d.area / (d.perimeter * d.perimeter))
        .collect();
    let imbalance: f64 = t
        .iter()
        .map(|d| (1.0 - d.population as f64 / d.capacity as f64).abs())
        .sum();
    let deficit: f64 = pp.iter().map(|p| (1.0 - p).abs()).sum();
    Scores {
        imbalance,
        harmonic_pp: pp.len() as f64 / pp.iter().map(|p| 1.0 / p).sum::<f64>(),
        dispersion: lambda * imbalance + (1.0 - lambda) * deficit,
        balance: 100.0 * (1.0 - imbalance).abs(),
        compactness: 100.0 * pp.iter().sum::<f64>() / pp.len() as f64,
    }
}

pub fn scores_of(graph: &ContiguityGraph, partition: &Partition, lambda: f64) -> Scores {
    scores(
        &totals(graph, partition.assignment(), partition.num_districts()),
        lambda,
    )
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// True when every district is non-empty, holds one center and is connected.
pub fn is_valid_plan(graph: &ContiguityGraph, assignment: &[u32], k: usize) -> bool {
    let t = totals(graph, assignment, k);
    if t.iter().any(|d| d.size == 0 || d.centers != 1) {
        return false;
    }
    (0..k as u32).all(|d| connected(graph, assignment, d))
}

pub fn connected(graph: &ContiguityGraph, assignment: &[u32], d: u32) -> bool {
    let members: Vec<usize> = (0..assignment.len()).filter(|&u| assignment[u] == d).collect();
    let Some(&start) = members.first() else {
        return true;
    };
    let mut seen = vec![false; assignment.len()];
    seen[start] = true;
    let mut stack = vec![start];
    let mut count = 1;
    while let Some(x) = stack.pop() {
        for y in graph.neighbors(x) {
            if !seen[y] && assignment[y] == d {
                seen[y] = true;
                count += 1;
                stack.push(y);
            }
        }
    }
    count == members.len()
}

pub fn grid_neighbors(rows: usize, cols: usize, i: usize) -> Vec<usize> {
    let (r, c) = (i / cols, i % cols);
    let mut out = Vec::new();
    if r > 0 {
        out.push(i - cols);
    }
    if r + 1 < rows {
        out.push(i + cols);
    }
    if c > 0 {
        out.push(i - 1);
    }
    if c + 1 < cols {
        out.push(i + 1);
    }
    out
}

pub fn side_connected(rows: usize, cols: usize, mask: u32, side: bool) -> bool {
    let n = rows * cols;
    let in_side = |i: usize| ((mask >> i) & 1 == 1) == side;
    let members: Vec<usize> = (0..n).filter(|&i| in_side(i)).collect();
    let Some(&start) = members.first() else {
        return false;
    };
    let mut seen = 1u32 << start;
    let mut stack = vec![start];
    while let Some(x) = stack.pop() {
        for y in grid_neighbors(rows, cols, x) {
            if in_side(y) && seen & (1 << y) == 0 {
                seen |= 1 << y;
                stack.push(y);
            }
        }
    }
    seen.count_ones() as usize == members.len()
}

/// Every labeled contiguous 2-partition of a grid with up to 32 cells,
/// mapped to its number of boundary nodes, for every mask whose two sides are
/// non-empty and connected. Bit `i` set means node `i` is in district 1.
pub fn enumerate_two_partitions(rows: usize, cols: usize) -> BTreeMap<u32, u32> {
    let n = rows * cols;
    let mut out = BTreeMap::new();
    for mask in 1..(1u32 << n) - 1 {
        if side_connected(rows, cols, mask, true) && side_connected(rows, cols, mask, false) {
            let boundary = (0..n)
                .filter(|&i| {
                    grid_neighbors(rows, cols, i)
                        .iter()
                        .any(|&j| (mask >> i) & 1 != (mask >> j) & 1)
                })
                .count();
            out.insert(mask, boundary as u32);
        }
    }
    out
}

pub fn grid_successors(rows: usize, cols: usize, states: &BTreeMap<u32, u32>, mask: u32) -> BTreeSet<u32> {
    (0..rows * cols)
        .filter(|&i| {
            grid_neighbors(rows, cols, i)
                .iter()
                .any(|&j| (mask >> i) & 1 != (mask >> j) & 1)
        })
        .map(|i| mask ^ (1 << i))
        .filter(|s| states.contains_key(s))
        .collect()
}
