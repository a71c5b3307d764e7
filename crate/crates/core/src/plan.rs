//! Plan CSV: header `node_id,district`, one row per node, districts numbered
//! from 1.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::ContiguityGraph;
use crate::partition::Partition;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed plan CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("plan references unknown node ids: {}", .0.join(", "))]
    UnknownNodes(Vec<String>),
    #[error("plan assigns node {0:?} more than once")]
    DuplicateNode(String),
    #[error("plan misses {} nodes, e.g. {:?}", .0.len(), .0.first())]
    MissingNodes(Vec<String>),
    #[error("node {node:?} has district {district}, outside 1..={num_districts}")]
    DistrictOutOfRange {
        node: String,
        district: u32,
        num_districts: usize,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanRow {
    node_id: String,
    district: u32,
}

/// Writes `partition` in graph node order.
pub fn write_plan<W: Write>(graph: &ContiguityGraph, partition: &Partition, writer: W) -> Result<(), PlanError> {
    let mut w = csv::Writer::from_writer(writer);
    for (u, node) in graph.nodes().iter().enumerate() {
        w.serialize(PlanRow {
            node_id: node.id.clone(),
            district: partition.district_of(u) + 1,
        })?;
    }
    w.flush().map_err(|source| PlanError::Io {
        path: PathBuf::new(),
        source,
    })?;
    Ok(())
}

/// Reads a plan into a zero-based assignment in graph node order.
pub fn read_plan<R: Read>(graph: &ContiguityGraph, reader: R) -> Result<Vec<u32>, PlanError> {
    let k = graph.num_districts();
    let mut assignment = vec![None; graph.num_nodes()];
    let mut unknown = Vec::new();
    let mut r = csv::Reader::from_reader(reader);
    for row in r.deserialize() {
        let PlanRow { node_id, district } = row?;
        let Some(u) = graph.node_index(&node_id) else {
            unknown.push(node_id);
            continue;
        };
        if district == 0 || district as usize > k {
            return Err(PlanError::DistrictOutOfRange {
                node: node_id,
                district,
                num_districts: k,
            });
        }
        if assignment[u].replace(district - 1).is_some() {
            return Err(PlanError::DuplicateNode(node_id));
        }
    }
    if !unknown.is_empty() {
        let mut seen = HashSet::new();
        unknown.retain(|id| seen.insert(id.clone()));
        return Err(PlanError::UnknownNodes(unknown));
    }
    let missing: Vec<String> = assignment
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_none())
        .map(|(u, _)| graph.node(u).id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(PlanError::MissingNodes(missing));
    }
    Ok(assignment.into_iter().map(|d| d.expect("checked")).collect())
}

pub fn save_plan(graph: &ContiguityGraph, partition: &Partition, path: &Path) -> Result<(), PlanError> {
    let io = |source| PlanError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    write_plan(graph, partition, std::io::BufWriter::new(file))
}

pub fn load_plan(graph: &ContiguityGraph, path: &Path) -> Result<Vec<u32>, PlanError> {
    let file = std::fs::File::open(path).map_err(|source| PlanError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_plan(graph, std::io::BufReader::new(file))
}
