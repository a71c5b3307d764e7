//! The immutable contiguity graph: geographic units as nodes, shared borders as
//! edges, with the population, capacity and geometry attributes the scores need.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partition::{FlipMove, Partition};

/// Relative slack allowed when checking a shared perimeter against the
/// exterior perimeters of its endpoints.
const PERIMETER_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed graph JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("graph has no nodes")]
    Empty,
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("edge references unknown node id {0:?}")]
    UnknownNode(String),
    #[error("self-loop on node {0:?}")]
    SelfLoop(String),
    #[error("duplicate edge between {0:?} and {1:?}")]
    DuplicateEdge(String, String),
    #[error("asymmetric adjacency: node {from:?} lists neighbor {to:?} but not vice versa")]
    AsymmetricAdjacency { from: String, to: String },
    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("graph has no center nodes")]
    NoCenters,
    #[error("node {node:?} has negative {field}")]
    NegativeAttribute { node: String, field: &'static str },
    #[error("node {node:?} has non-finite {field}")]
    NonFiniteAttribute { node: String, field: &'static str },
    #[error("node {0:?} has non-positive area")]
    NonPositiveArea(String),
    #[error("node {node:?} has capacity {capacity} but is not a center")]
    CapacityOnNonCenter { node: String, capacity: u64 },
    #[error("edge {u:?}-{v:?}: shared perimeter {shared} exceeds an endpoint's exterior perimeter")]
    SharedPerimeterTooLong { u: String, v: String, shared: f64 },
    #[error("grid dimensions must be positive (got {rows}x{cols})")]
    BadGridDimensions { rows: usize, cols: usize },
    #[error("cannot place {k} centers on {cells} cells")]
    TooManyCenters { k: usize, cells: usize },
}

/// School level selecting which population field a graph is loaded with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum SchoolLevel {
    #[default]
    #[serde(rename = "elem", alias = "elementary")]
    Elementary,
    #[serde(rename = "mid", alias = "middle")]
    Middle,
    #[serde(rename = "high")]
    High,
}

impl SchoolLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            SchoolLevel::Elementary => "elem",
            SchoolLevel::Middle => "mid",
            SchoolLevel::High => "high",
        }
    }
}

impl fmt::Display for SchoolLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchoolLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "elem" | "elementary" => Ok(SchoolLevel::Elementary),
            "mid" | "middle" => Ok(SchoolLevel::Middle),
            "high" => Ok(SchoolLevel::High),
            other => Err(format!("unknown school level {other:?} (expected elem, mid or high)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LevelPopulations {
    pub elementary: u64,
    pub middle: u64,
    pub high: u64,
}

impl LevelPopulations {
    pub fn get(&self, level: SchoolLevel) -> u64 {
        match level {
            SchoolLevel::Elementary => self.elementary,
            SchoolLevel::Middle => self.middle,
            SchoolLevel::High => self.high,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: String,
    pub populations: LevelPopulations,
    /// Program capacity; zero for every node that is not a center.
    pub capacity: u64,
    pub is_center: bool,
    pub area: f64,
    /// Total boundary length of the unit's polygon.
    pub exterior_perimeter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeRecord {
    pub endpoints: (usize, usize),
    pub shared_perimeter: f64,
}

impl EdgeRecord {
    /// The endpoint that is not `node`.
    #[inline]
    pub fn other(&self, node: usize) -> usize {
        if self.endpoints.0 == node {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }
}

/// One entry of a node's adjacency list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Adjacent {
    pub node: usize,
    pub edge: usize,
}

/// Validated, immutable contiguity graph.
///
/// Districts are identified with centers: district `i` (zero-based) is the
/// district of `centers()[i]`, and centers are numbered in node order.
#[derive(Debug, Clone)]
pub struct ContiguityGraph {
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
    adjacency: Vec<Vec<Adjacent>>,
    centers: Vec<usize>,
    level: SchoolLevel,
    population: Vec<u64>,
    index: HashMap<String, usize>,
}

impl ContiguityGraph {
    /// Validates nodes and edges and builds the graph at the given level.
    pub fn new(nodes: Vec<NodeRecord>, edges: Vec<EdgeRecord>, level: SchoolLevel) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateNode(node.id.clone()));
            }
            validate_node(node)?;
        }

        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut seen = HashSet::with_capacity(edges.len());
        for (e, edge) in edges.iter().enumerate() {
            let (u, v) = edge.endpoints;
            for w in [u, v] {
                if w >= nodes.len() {
                    return Err(GraphError::UnknownNode(format!("#{w}")));
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(nodes[u].id.clone()));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(GraphError::DuplicateEdge(nodes[u].id.clone(), nodes[v].id.clone()));
            }
            let shared = edge.shared_perimeter;
            if !shared.is_finite() {
                return Err(GraphError::NonFiniteAttribute {
                    node: nodes[u].id.clone(),
                    field: "shared_perimeter",
                });
            }
            if shared < 0.0 {
                return Err(GraphError::NegativeAttribute {
                    node: nodes[u].id.clone(),
                    field: "shared_perimeter",
                });
            }
            let limit = nodes[u].exterior_perimeter.min(nodes[v].exterior_perimeter);
            if shared > limit * (1.0 + PERIMETER_SLACK) + PERIMETER_SLACK {
                return Err(GraphError::SharedPerimeterTooLong {
                    u: nodes[u].id.clone(),
                    v: nodes[v].id.clone(),
                    shared,
                });
            }
            adjacency[u].push(Adjacent { node: v, edge: e });
            adjacency[v].push(Adjacent { node: u, edge: e });
        }

        let centers: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].is_center).collect();
        if centers.is_empty() {
            return Err(GraphError::NoCenters);
        }

        let components = count_components(&adjacency);
        if components != 1 {
            return Err(GraphError::Disconnected { components });
        }

        let population = nodes.iter().map(|n| n.populations.get(level)).collect();
        Ok(ContiguityGraph {
            nodes,
            edges,
            adjacency,
            centers,
            level,
            population,
            index,
        })
    }

    pub fn from_file(file: GraphFile, level: SchoolLevel) -> Result<Self, GraphError> {
        let mut nodes = Vec::with_capacity(file.nodes.len());
        let mut index = HashMap::with_capacity(file.nodes.len());
        for (i, entry) in file.nodes.iter().enumerate() {
            if index.insert(entry.id.as_str(), i).is_some() {
                return Err(GraphError::DuplicateNode(entry.id.clone()));
            }
            nodes.push(entry.to_record()?);
        }
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| GraphError::UnknownNode(id.to_string()))
        };

        let mut edges = Vec::with_capacity(file.edges.len());
        let mut edge_pairs = HashSet::with_capacity(file.edges.len());
        for entry in &file.edges {
            let (u, v) = (lookup(&entry.u)?, lookup(&entry.v)?);
            edge_pairs.insert((u.min(v), u.max(v)));
            edges.push(EdgeRecord {
                endpoints: (u, v),
                shared_perimeter: entry.shared_perimeter,
            });
        }

        // Optional per-node neighbor lists must be mirrored: by the other
        // node's own list when it has one, otherwise by an explicit edge.
        let mut declared: Vec<Option<HashSet<usize>>> = Vec::with_capacity(file.nodes.len());
        for entry in &file.nodes {
            declared.push(match &entry.neighbors {
                Some(list) => Some(list.iter().map(|id| lookup(id)).collect::<Result<_, _>>()?),
                None => None,
            });
        }
        for (u, list) in declared.iter().enumerate() {
            let Some(list) = list else { continue };
            let mut sorted: Vec<usize> = list.iter().copied().collect();
            sorted.sort_unstable();
            for v in sorted {
                if u == v {
                    return Err(GraphError::SelfLoop(file.nodes[u].id.clone()));
                }
                let key = (u.min(v), u.max(v));
                let mirrored = match &declared[v] {
                    Some(back) => back.contains(&u),
                    None => edge_pairs.contains(&key),
                };
                if !mirrored {
                    return Err(GraphError::AsymmetricAdjacency {
                        from: file.nodes[u].id.clone(),
                        to: file.nodes[v].id.clone(),
                    });
                }
                if u < v && edge_pairs.insert(key) {
                    edges.push(EdgeRecord {
                        endpoints: (u, v),
                        shared_perimeter: 0.0,
                    });
                }
            }
        }

        ContiguityGraph::new(nodes, edges, level)
    }

    pub fn from_json_str(json: &str, level: SchoolLevel) -> Result<Self, GraphError> {
        let file: GraphFile = serde_json::from_str(json)?;
        ContiguityGraph::from_file(file, level)
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeEntry {
                    id: n.id.clone(),
                    pop_elem: n.populations.elementary as i64,
                    pop_mid: n.populations.middle as i64,
                    pop_high: n.populations.high as i64,
                    capacity: n.capacity as i64,
                    is_center: n.is_center,
                    area: n.area,
                    perimeter: n.exterior_perimeter,
                    neighbors: None,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeEntry {
                    u: self.nodes[e.endpoints.0].id.clone(),
                    v: self.nodes[e.endpoints.1].id.clone(),
                    shared_perimeter: e.shared_perimeter,
                })
                .collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("graph file is always serializable")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(|source| GraphError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// The same graph with populations taken from another school level.
    pub fn with_level(&self, level: SchoolLevel) -> Self {
        let mut graph = self.clone();
        graph.population = graph.nodes.iter().map(|n| n.populations.get(level)).collect();
        graph.level = level;
        graph
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Number of districts K, one per center.
    pub fn num_districts(&self) -> usize {
        self.centers.len()
    }

    pub fn level(&self) -> SchoolLevel {
        self.level
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn node(&self, u: usize) -> &NodeRecord {
        &self.nodes[u]
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &EdgeRecord {
        &self.edges[e]
    }

    #[inline]
    pub fn adjacency(&self, u: usize) -> &[Adjacent] {
        &self.adjacency[u]
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[u].iter().map(|a| a.node)
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn centers(&self) -> &[usize] {
        &self.centers
    }

    pub fn is_center(&self, u: usize) -> bool {
        self.nodes[u].is_center
    }

    /// Population of `u` at the loaded school level.
    #[inline]
    pub fn population(&self, u: usize) -> u64 {
        self.population[u]
    }

    #[inline]
    pub fn capacity(&self, u: usize) -> u64 {
        self.nodes[u].capacity
    }

    #[inline]
    pub fn area(&self, u: usize) -> f64 {
        self.nodes[u].area
    }

    #[inline]
    pub fn exterior_perimeter(&self, u: usize) -> f64 {
        self.nodes[u].exterior_perimeter
    }

    pub fn total_population(&self) -> u64 {
        self.population.iter().sum()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }
}

impl PartialEq for ContiguityGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges && self.level == other.level
    }
}

fn validate_node(node: &NodeRecord) -> Result<(), GraphError> {
    for (field, value) in [("area", node.area), ("perimeter", node.exterior_perimeter)] {
        if !value.is_finite() {
            return Err(GraphError::NonFiniteAttribute {
                node: node.id.clone(),
                field,
            });
        }
        if value < 0.0 {
            return Err(GraphError::NegativeAttribute {
                node: node.id.clone(),
                field,
            });
        }
    }
    if node.area == 0.0 {
        return Err(GraphError::NonPositiveArea(node.id.clone()));
    }
    if node.capacity > 0 && !node.is_center {
        return Err(GraphError::CapacityOnNonCenter {
            node: node.id.clone(),
            capacity: node.capacity,
        });
    }
    Ok(())
}

fn count_components(adjacency: &[Vec<Adjacent>]) -> usize {
    let mut seen = vec![false; adjacency.len()];
    let mut queue = VecDeque::new();
    let mut components = 0;
    for start in 0..adjacency.len() {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for a in &adjacency[u] {
                if !seen[a.node] {
                    seen[a.node] = true;
                    queue.push_back(a.node);
                }
            }
        }
    }
    components
}

/// On-disk graph format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub nodes: Vec<NodeEntry>,
    pub edges: Vec<EdgeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEntry {
    pub id: String,
    pub pop_elem: i64,
    pub pop_mid: i64,
    pub pop_high: i64,
    pub capacity: i64,
    pub is_center: bool,
    pub area: f64,
    pub perimeter: f64,
    /// Optional explicit neighbor list; must agree with the other side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighbors: Option<Vec<String>>,
}

impl NodeEntry {
    fn to_record(&self) -> Result<NodeRecord, GraphError> {
        let non_negative = |value: i64, field: &'static str| {
            u64::try_from(value).map_err(|_| GraphError::NegativeAttribute {
                node: self.id.clone(),
                field,
            })
        };
        Ok(NodeRecord {
            id: self.id.clone(),
            populations: LevelPopulations {
                elementary: non_negative(self.pop_elem, "pop_elem")?,
                middle: non_negative(self.pop_mid, "pop_mid")?,
                high: non_negative(self.pop_high, "pop_high")?,
            },
            capacity: non_negative(self.capacity, "capacity")?,
            is_center: self.is_center,
            area: self.area,
            exterior_perimeter: self.perimeter,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeEntry {
    pub u: String,
    pub v: String,
    pub shared_perimeter: f64,
}

/// Reads and validates a graph file, taking populations from `level`.
pub fn load_graph(path: impl AsRef<Path>, level: SchoolLevel) -> Result<ContiguityGraph, GraphError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ContiguityGraph::from_json_str(&text, level)
}

/// Synthetic `rows x cols` grid of unit squares with `k` seeded centers.
pub fn make_grid_instance(rows: usize, cols: usize, k: usize, seed: u64) -> Result<ContiguityGraph, GraphError> {
    make_partial_grid_instance(rows, cols, rows.saturating_mul(cols), k, seed)
}

/// Like [`make_grid_instance`] but keeps only the first `cells` cells in
/// row-major order, which is still connected. Used to hit node counts that
/// are not rectangle areas.
///
/// Populations at each level are uniform on `[1, 100]`; every center gets
/// capacity `ceil(total elementary population / k)`.
pub fn make_partial_grid_instance(
    rows: usize,
    cols: usize,
    cells: usize,
    k: usize,
    seed: u64,
) -> Result<ContiguityGraph, GraphError> {
    if rows == 0 || cols == 0 || cells == 0 || cells > rows * cols {
        return Err(GraphError::BadGridDimensions { rows, cols });
    }
    if k == 0 || k > cells {
        return Err(GraphError::TooManyCenters { k, cells });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_center = vec![false; cells];
    for c in sample(&mut rng, cells, k) {
        is_center[c] = true;
    }
    let populations: Vec<LevelPopulations> = (0..cells)
        .map(|_| LevelPopulations {
            elementary: rng.gen_range(1..=100),
            middle: rng.gen_range(1..=100),
            high: rng.gen_range(1..=100),
        })
        .collect();
    let total: u64 = populations.iter().map(|p| p.elementary).sum();
    let capacity = total.div_ceil(k as u64);

    let nodes = (0..cells)
        .map(|i| NodeRecord {
            id: format!("n{i}"),
            populations: populations[i],
            capacity: if is_center[i] { capacity } else { 0 },
            is_center: is_center[i],
            area: 1.0,
            exterior_perimeter: 4.0,
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..cells {
        let (r, c) = (i / cols, i % cols);
        if c + 1 < cols && i + 1 < cells {
            edges.push(EdgeRecord {
                endpoints: (i, i + 1),
                shared_perimeter: 1.0,
            });
        }
        if r + 1 < rows && i + cols < cells {
            edges.push(EdgeRecord {
                endpoints: (i, i + cols),
                shared_perimeter: 1.0,
            });
        }
    }
    ContiguityGraph::new(nodes, edges, SchoolLevel::Elementary)
}

/// Change in district area and perimeter caused by a flip.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeometryDelta {
    pub donor_area: f64,
    pub donor_perimeter: f64,
    pub recipient_area: f64,
    pub recipient_perimeter: f64,
}

/// Area and perimeter changes of donor and recipient when `mv` is applied.
///
/// A district's perimeter is the sum of its units' exterior perimeters minus
/// twice the perimeter shared between its own units, so moving `u` out of `D`
/// changes it by `-ext(u) + 2 * shared(u, D)`.
pub fn district_geometry_delta(graph: &ContiguityGraph, mv: &FlipMove, partition: &Partition) -> GeometryDelta {
    let u = mv.node;
    let mut shared_donor = 0.0;
    let mut shared_recipient = 0.0;
    for a in graph.adjacency(u) {
        let d = partition.district_of(a.node);
        if d == mv.donor {
            shared_donor += graph.edge(a.edge).shared_perimeter;
        } else if d == mv.recipient {
            shared_recipient += graph.edge(a.edge).shared_perimeter;
        }
    }
    let area = graph.area(u);
    let ext = graph.exterior_perimeter(u);
    GeometryDelta {
        donor_area: -area,
        donor_perimeter: -ext + 2.0 * shared_donor,
        recipient_area: area,
        recipient_perimeter: ext - 2.0 * shared_recipient,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_by_three_json(extra_neighbors: &str) -> String {
        let mut nodes = Vec::new();
        for i in 0..9 {
            let center = i == 0 || i == 8;
            let neighbors = if i == 4 { extra_neighbors } else { "" };
            nodes.push(format!(
                r#"{{"id":"n{}","pop_elem":10,"pop_mid":20,"pop_high":30,"capacity":{},"is_center":{},"area":1.0,"perimeter":4.0{}}}"#,
                i + 1,
                if center { 45 } else { 0 },
                center,
                neighbors
            ));
        }
        let mut edges = Vec::new();
        for i in 0..9 {
            if i % 3 != 2 {
                edges.push(format!(
                    r#"{{"u":"n{}","v":"n{}","shared_perimeter":1.0}}"#,
                    i + 1,
                    i + 2
                ));
            }
            if i < 6 {
                edges.push(format!(
                    r#"{{"u":"n{}","v":"n{}","shared_perimeter":1.0}}"#,
                    i + 1,
                    i + 4
                ));
            }
        }
        format!(r#"{{"nodes":[{}],"edges":[{}]}}"#, nodes.join(","), edges.join(","))
    }

    #[test]
    fn loads_three_by_three_grid() {
        let g = ContiguityGraph::from_json_str(&three_by_three_json(""), SchoolLevel::Elementary).unwrap();
        assert_eq!(g.num_nodes(), 9);
        assert_eq!(g.num_edges(), 12);
        assert_eq!(g.num_districts(), 2);
        assert_eq!(g.population(3), 10);
        let mid = g.with_level(SchoolLevel::Middle);
        assert_eq!(mid.population(3), 20);
    }

    #[test]
    fn asymmetric_neighbor_list_is_rejected() {
        // n9 declares its own neighbors without n5.
        let json = three_by_three_json(r#","neighbors":["n2","n4","n6","n8","n9"]"#).replace(
            r#""id":"n9","pop_elem":10,"pop_mid":20,"pop_high":30,"capacity":45,"is_center":true,"area":1.0,"perimeter":4.0"#,
            r#""id":"n9","pop_elem":10,"pop_mid":20,"pop_high":30,"capacity":45,"is_center":true,"area":1.0,"perimeter":4.0,"neighbors":["n6","n8"]"#,
        );
        let err = ContiguityGraph::from_json_str(&json, SchoolLevel::Elementary).unwrap_err();
        match err {
            GraphError::AsymmetricAdjacency { from, to } => {
                assert_eq!(from, "n5");
                assert_eq!(to, "n9");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn symmetric_neighbor_lists_are_accepted() {
        let json = three_by_three_json(r#","neighbors":["n2","n4","n6","n8"]"#);
        let g = ContiguityGraph::from_json_str(&json, SchoolLevel::Elementary).unwrap();
        assert_eq!(g.num_edges(), 12);
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let json = r#"{"nodes":[
            {"id":"a","pop_elem":1,"pop_mid":1,"pop_high":1,"capacity":1,"is_center":true,"area":1,"perimeter":4},
            {"id":"b","pop_elem":1,"pop_mid":1,"pop_high":1,"capacity":0,"is_center":false,"area":1,"perimeter":4}
        ],"edges":[]}"#;
        assert!(matches!(
            ContiguityGraph::from_json_str(json, SchoolLevel::Elementary),
            Err(GraphError::Disconnected { components: 2 })
        ));
    }

    #[test]
    fn zero_centers_and_negative_values_are_named_errors() {
        let no_center = r#"{"nodes":[
            {"id":"a","pop_elem":1,"pop_mid":1,"pop_high":1,"capacity":0,"is_center":false,"area":1,"perimeter":4}
        ],"edges":[]}"#;
        assert!(matches!(
            ContiguityGraph::from_json_str(no_center, SchoolLevel::Elementary),
            Err(GraphError::NoCenters)
        ));
        let negative = r#"{"nodes":[
            {"id":"a","pop_elem":-3,"pop_mid":1,"pop_high":1,"capacity":5,"is_center":true,"area":1,"perimeter":4}
        ],"edges":[]}"#;
        assert!(matches!(
            ContiguityGraph::from_json_str(negative, SchoolLevel::Elementary),
            Err(GraphError::NegativeAttribute { field: "pop_elem", .. })
        ));
        let negative_perimeter = r#"{"nodes":[
            {"id":"a","pop_elem":3,"pop_mid":1,"pop_high":1,"capacity":5,"is_center":true,"area":1,"perimeter":-4}
        ],"edges":[]}"#;
        assert!(matches!(
            ContiguityGraph::from_json_str(negative_perimeter, SchoolLevel::Elementary),
            Err(GraphError::NegativeAttribute { field: "perimeter", .. })
        ));
        assert!(matches!(
            ContiguityGraph::from_json_str("{not json", SchoolLevel::Elementary),
            Err(GraphError::Parse(_))
        ));
    }

    #[test]
    fn structural_edge_errors() {
        let base = |edges: &str| {
            format!(
                r#"{{"nodes":[
                {{"id":"a","pop_elem":1,"pop_mid":1,"pop_high":1,"capacity":2,"is_center":true,"area":1,"perimeter":4}},
                {{"id":"b","pop_elem":1,"pop_mid":1,"pop_high":1,"capacity":0,"is_center":false,"area":1,"perimeter":4}}
            ],"edges":[{edges}]}}"#
            )
        };
        let parse = |edges: &str| ContiguityGraph::from_json_str(&base(edges), SchoolLevel::Elementary);
        assert!(matches!(
            parse(r#"{"u":"a","v":"a","shared_perimeter":1}"#),
            Err(GraphError::SelfLoop(_))
        ));
        assert!(matches!(
            parse(r#"{"u":"a","v":"b","shared_perimeter":1},{"u":"b","v":"a","shared_perimeter":1}"#),
            Err(GraphError::DuplicateEdge(..))
        ));
        assert!(matches!(
            parse(r#"{"u":"a","v":"z","shared_perimeter":1}"#),
            Err(GraphError::UnknownNode(id)) if id == "z"
        ));
        assert!(matches!(
            parse(r#"{"u":"a","v":"b","shared_perimeter":5}"#),
            Err(GraphError::SharedPerimeterTooLong { .. })
        ));
    }

    #[test]
    fn capacity_requires_center() {
        let json = r#"{"nodes":[
            {"id":"a","pop_elem":1,"pop_mid":1,"pop_high":1,"capacity":2,"is_center":true,"area":1,"perimeter":4},
            {"id":"b","pop_elem":1,"pop_mid":1,"pop_high":1,"capacity":3,"is_center":false,"area":1,"perimeter":4}
        ],"edges":[{"u":"a","v":"b","shared_perimeter":1}]}"#;
        assert!(matches!(
            ContiguityGraph::from_json_str(json, SchoolLevel::Elementary),
            Err(GraphError::CapacityOnNonCenter { capacity: 3, .. })
        ));
    }

    #[test]
    fn grid_instances() {
        let g = make_grid_instance(2, 2, 2, 7).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges(), g.num_districts()), (4, 4, 2));

        let single = make_grid_instance(1, 1, 1, 99).unwrap();
        assert_eq!(single.num_nodes(), 1);
        assert_eq!(single.centers(), &[0]);

        assert_eq!(
            make_grid_instance(3, 3, 2, 1).unwrap(),
            make_grid_instance(3, 3, 2, 1).unwrap()
        );
        assert!(matches!(
            make_grid_instance(2, 2, 5, 0),
            Err(GraphError::TooManyCenters { k: 5, cells: 4 })
        ));
    }

    #[test]
    fn grid_capacity_and_populations() {
        let g = make_grid_instance(4, 5, 3, 11).unwrap();
        let total = g.total_population();
        for u in 0..g.num_nodes() {
            let p = g.population(u);
            assert!((1..=100).contains(&p));
            let expected = if g.is_center(u) { total.div_ceil(3) } else { 0 };
            assert_eq!(g.capacity(u), expected);
        }
    }

    #[test]
    fn partial_grid_is_connected_with_requested_size() {
        let g = make_partial_grid_instance(22, 21, 453, 57, 3).unwrap();
        assert_eq!(g.num_nodes(), 453);
        assert_eq!(g.num_districts(), 57);
    }

    #[test]
    fn file_round_trip_preserves_every_field() {
        let g = make_grid_instance(3, 4, 3, 5).unwrap();
        let back = ContiguityGraph::from_json_str(&g.to_json_string(), SchoolLevel::Elementary).unwrap();
        assert_eq!(g, back);
        assert_eq!(g.to_file(), back.to_file());
    }
}
