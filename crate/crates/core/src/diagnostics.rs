//! Run-time diagnostics sampled every `cadence` proposals: a statistics trace
//! and the binary node co-occurrence matrix.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partition::Partition;
use crate::scores::{CompactnessFormula, PlanScores, ScoreWeights};

/// Largest node count stored as a dense bitset.
pub const DENSE_LIMIT: usize = 5_000;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("step {step} is not a multiple of the cadence {cadence}")]
    OffCadence { step: u64, cadence: u64 },
    #[error("cadence must be positive")]
    ZeroCadence,
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("co-occurrence entry ({u}, {v}) is not strictly upper-triangular for {n} nodes")]
    BadEntry { u: usize, v: usize, n: usize },
}

/// Statistics of the plan at one sampled step. Undefined scores are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub step: u64,
    pub max_district_size: usize,
    #[serde(rename = "imb")]
    pub imbalance: f64,
    #[serde(rename = "hpp")]
    pub harmonic_pp: f64,
    #[serde(rename = "j")]
    pub dispersion: f64,
    #[serde(rename = "bal")]
    pub balance: f64,
    #[serde(rename = "com")]
    pub compactness: f64,
}

impl SampleRecord {
    fn same_as(&self, other: &SampleRecord) -> bool {
        let eq = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        self.step == other.step
            && self.max_district_size == other.max_district_size
            && eq(self.imbalance, other.imbalance)
            && eq(self.harmonic_pp, other.harmonic_pp)
            && eq(self.dispersion, other.dispersion)
            && eq(self.balance, other.balance)
            && eq(self.compactness, other.compactness)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Storage {
    Dense(Vec<u64>),
    Sparse(BTreeSet<(u32, u32)>),
}

/// Strictly upper-triangular binary matrix over node indices: entry `(u, v)`
/// with `u < v` is set once `u` and `v` shared a district in some sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceMatrix {
    n: usize,
    ones: u64,
    storage: Storage,
}

impl CooccurrenceMatrix {
    pub fn new(n: usize) -> Self {
        let storage = if n <= DENSE_LIMIT {
            Storage::Dense(vec![0; Self::slots_for(n).div_ceil(64) as usize])
        } else {
            Storage::Sparse(BTreeSet::new())
        };
        CooccurrenceMatrix { n, ones: 0, storage }
    }

    fn slots_for(n: usize) -> u64 {
        let n = n as u64;
        n * n.saturating_sub(1) / 2
    }

    /// Row-major offset of `(u, v)`, `u < v`, in the upper triangle.
    #[inline]
    fn offset(&self, u: usize, v: usize) -> usize {
        u * self.n - u * (u + 1) / 2 + (v - u - 1)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Number of strictly-upper-triangular slots, `n(n-1)/2`.
    pub fn slots(&self) -> u64 {
        Self::slots_for(self.n)
    }

    pub fn count_ones(&self) -> u64 {
        self.ones
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        let (u, v) = (u.min(v), u.max(v));
        if u == v || v >= self.n {
            return false;
        }
        match &self.storage {
            Storage::Dense(bits) => {
                let i = self.offset(u, v);
                bits[i / 64] >> (i % 64) & 1 == 1
            }
            Storage::Sparse(set) => set.contains(&(u as u32, v as u32)),
        }
    }

    /// Sets `(u, v)` for `u < v`; returns whether the bit was newly set.
    pub fn set(&mut self, u: usize, v: usize) -> bool {
        debug_assert!(u < v && v < self.n);
        let fresh = match &mut self.storage {
            Storage::Dense(bits) => {
                let i = u * self.n - u * (u + 1) / 2 + (v - u - 1);
                let mask = 1u64 << (i % 64);
                let fresh = bits[i / 64] & mask == 0;
                bits[i / 64] |= mask;
                fresh
            }
            Storage::Sparse(set) => set.insert((u as u32, v as u32)),
        };
        self.ones += fresh as u64;
        fresh
    }

    /// Set entries in increasing `(u, v)` order.
    pub fn entries(&self) -> Vec<(usize, usize)> {
        match &self.storage {
            Storage::Dense(bits) => {
                let mut out = Vec::with_capacity(self.ones as usize);
                for u in 0..self.n {
                    for v in u + 1..self.n {
                        let i = self.offset(u, v);
                        if bits[i / 64] >> (i % 64) & 1 == 1 {
                            out.push((u, v));
                        }
                    }
                }
                out
            }
            Storage::Sparse(set) => set.iter().map(|&(u, v)| (u as usize, v as usize)).collect(),
        }
    }

    /// Fraction of zero slots; 1.0 for an empty (or single-node) matrix.
    pub fn sparsity(&self) -> f64 {
        let slots = self.slots();
        if slots == 0 {
            return 1.0;
        }
        (slots - self.ones) as f64 / slots as f64
    }

    /// Marks every pair of nodes sharing a district of `partition`.
    pub fn mark_partition(&mut self, partition: &Partition) {
        for members in partition.district_members() {
            for (i, &u) in members.iter().enumerate() {
                for &v in &members[i + 1..] {
                    self.set(u, v);
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiagnosticsTrace {
    cadence: u64,
    samples: Vec<SampleRecord>,
    cooccurrence: CooccurrenceMatrix,
}

impl DiagnosticsTrace {
    pub const DEFAULT_CADENCE: u64 = 1000;

    pub fn new(num_nodes: usize, cadence: u64) -> Result<Self, DiagnosticsError> {
        if cadence == 0 {
            return Err(DiagnosticsError::ZeroCadence);
        }
        Ok(DiagnosticsTrace {
            cadence,
            samples: Vec::new(),
            cooccurrence: CooccurrenceMatrix::new(num_nodes),
        })
    }

    pub fn cadence(&self) -> u64 {
        self.cadence
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn cooccurrence(&self) -> &CooccurrenceMatrix {
        &self.cooccurrence
    }

    pub fn is_due(&self, step: u64) -> bool {
        step.is_multiple_of(self.cadence)
    }

    /// Appends the statistics of `partition` at `step` and marks its
    /// within-district node pairs.
    pub fn record_sample(
        &mut self,
        partition: &Partition,
        step: u64,
        weights: ScoreWeights,
        formula: CompactnessFormula,
    ) -> Result<(), DiagnosticsError> {
        if !self.is_due(step) {
            return Err(DiagnosticsError::OffCadence {
                step,
                cadence: self.cadence,
            });
        }
        let scores = PlanScores::of_partition(partition, weights, formula).ok();
        let pick = |f: fn(&PlanScores) -> f64| scores.as_ref().map_or(f64::NAN, f);
        self.samples.push(SampleRecord {
            step,
            max_district_size: partition.max_district_size(),
            imbalance: pick(|s| s.imbalance),
            harmonic_pp: pick(|s| s.harmonic_pp),
            dispersion: pick(|s| s.dispersion),
            balance: pick(|s| s.balance),
            compactness: pick(|s| s.compactness),
        });
        self.cooccurrence.mark_partition(partition);
        Ok(())
    }

    pub fn sparsity(&self) -> f64 {
        self.cooccurrence.sparsity()
    }

    pub fn summary(&self) -> SparsitySummary {
        SparsitySummary {
            nodes: self.cooccurrence.num_nodes(),
            cadence: self.cadence,
            samples: self.samples.len(),
            slots: self.cooccurrence.slots(),
            set_entries: self.cooccurrence.count_ones(),
            sparsity: self.sparsity(),
        }
    }
}

impl PartialEq for DiagnosticsTrace {
    fn eq(&self, other: &Self) -> bool {
        self.cadence == other.cadence
            && self.cooccurrence == other.cooccurrence
            && self.samples.len() == other.samples.len()
            && self.samples.iter().zip(&other.samples).all(|(a, b)| a.same_as(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsitySummary {
    pub nodes: usize,
    pub cadence: u64,
    pub samples: usize,
    pub slots: u64,
    pub set_entries: u64,
    pub sparsity: f64,
}

/// Paths written by [`export_trace`] for a given stem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceFiles {
    pub trace: PathBuf,
    pub cooccurrence: PathBuf,
    pub summary: PathBuf,
}

impl TraceFiles {
    pub fn new(dir: &Path, stem: &str) -> Self {
        TraceFiles {
            trace: dir.join(format!("{stem}_trace.csv")),
            cooccurrence: dir.join(format!("{stem}_cooccurrence.csv")),
            summary: dir.join(format!("{stem}_sparsity.json")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PairRow {
    u: usize,
    v: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DiagnosticsError + '_ {
    move |source| DiagnosticsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> DiagnosticsError + '_ {
    move |source| DiagnosticsError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `<stem>_trace.csv`, `<stem>_cooccurrence.csv` (set entries as
/// `u,v` node indices) and `<stem>_sparsity.json` into `dir`.
pub fn export_trace(trace: &DiagnosticsTrace, dir: &Path, stem: &str) -> Result<TraceFiles, DiagnosticsError> {
    let files = TraceFiles::new(dir, stem);

    let mut w = csv::Writer::from_path(&files.trace).map_err(csv_err(&files.trace))?;
    if trace.samples.is_empty() {
        w.write_record(["step", "max_district_size", "imb", "hpp", "j", "bal", "com"])
            .map_err(csv_err(&files.trace))?;
    }
    for s in &trace.samples {
        w.serialize(s).map_err(csv_err(&files.trace))?;
    }
    w.flush().map_err(io_err(&files.trace))?;

    let mut w = csv::Writer::from_path(&files.cooccurrence).map_err(csv_err(&files.cooccurrence))?;
    w.write_record(["u", "v"]).map_err(csv_err(&files.cooccurrence))?;
    for (u, v) in trace.cooccurrence.entries() {
        w.write_record([u.to_string(), v.to_string()])
            .map_err(csv_err(&files.cooccurrence))?;
    }
    w.flush().map_err(io_err(&files.cooccurrence))?;

    let file = File::create(&files.summary).map_err(io_err(&files.summary))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &trace.summary()).map_err(|source| DiagnosticsError::Json {
        path: files.summary.clone(),
        source,
    })?;
    Ok(files)
}

/// Reads back the files written by [`export_trace`].
pub fn import_trace(dir: &Path, stem: &str) -> Result<DiagnosticsTrace, DiagnosticsError> {
    let files = TraceFiles::new(dir, stem);
    let text = fs::read_to_string(&files.summary).map_err(io_err(&files.summary))?;
    let summary: SparsitySummary = serde_json::from_str(&text).map_err(|source| DiagnosticsError::Json {
        path: files.summary.clone(),
        source,
    })?;
    let mut trace = DiagnosticsTrace::new(summary.nodes, summary.cadence)?;

    let file = File::open(&files.trace).map_err(io_err(&files.trace))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    for row in r.deserialize() {
        trace.samples.push(row.map_err(csv_err(&files.trace))?);
    }

    let mut r = csv::Reader::from_path(&files.cooccurrence).map_err(csv_err(&files.cooccurrence))?;
    for row in r.deserialize() {
        let PairRow { u, v } = row.map_err(csv_err(&files.cooccurrence))?;
        if u >= v || v >= summary.nodes {
            return Err(DiagnosticsError::BadEntry { u, v, n: summary.nodes });
        }
        trace.cooccurrence.set(u, v);
    }
    Ok(trace)
}
