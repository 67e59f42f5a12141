//! Attributed graphs, the JSONL dataset format, a planted-motif synthetic
//! generator, dataset splits, and mini-batching.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Categorical vocabulary sizes for the two node and two edge attributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub node: [usize; 2],
    pub edge: [usize; 2],
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab {
            node: [8, 4],
            edge: [4, 3],
        }
    }
}

impl Vocab {
    /// Reserved edge code used for self-loops, one past each edge vocabulary.
    pub fn self_loop_code(&self) -> [usize; 2] {
        self.edge
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub attrs: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    pub node_attrs: Vec<[usize; 2]>,
    pub edges: Vec<Edge>,
    /// `None` marks a missing label.
    pub labels: Vec<Option<bool>>,
}

impl Graph {
    pub fn num_nodes(&self) -> usize {
        self.node_attrs.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.labels.len()
    }

    pub fn validate(&self, vocab: &Vocab) -> std::result::Result<(), String> {
        let n = self.num_nodes();
        for (i, a) in self.node_attrs.iter().enumerate() {
            for k in 0..2 {
                if a[k] >= vocab.node[k] {
                    return Err(format!(
                        "node {i} attribute {k} code {} outside vocabulary of {}",
                        a[k], vocab.node[k]
                    ));
                }
            }
        }
        for e in &self.edges {
            for end in [e.u, e.v] {
                if end >= n {
                    return Err(format!(
                        "edge ({}, {}) has dangling endpoint {end} (graph has {n} nodes)",
                        e.u, e.v
                    ));
                }
            }
            if e.u == e.v {
                return Err(format!("self-pair ({}, {}) stored on edge list", e.u, e.v));
            }
            for k in 0..2 {
                if e.attrs[k] >= vocab.edge[k] {
                    return Err(format!(
                        "edge ({}, {}) attribute {k} code {} outside vocabulary of {}",
                        e.u, e.v, e.attrs[k], vocab.edge[k]
                    ));
                }
            }
        }
        Ok(())
    }

    /// `|E| − N + components`.
    pub fn cyclomatic_number(&self) -> usize {
        let n = self.num_nodes();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut components = n;
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
            if a != b {
                parent[a] = b;
                components -= 1;
            }
        }
        self.edges.len() + components - n
    }

    pub fn adjacency(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.num_nodes()];
        for e in &self.edges {
            adj[e.u].insert(e.v);
            adj[e.v].insert(e.u);
        }
        adj
    }

    /// True when some triangle has all three nodes carrying `attr0 == code`.
    pub fn has_monochrome_triangle(&self, code: usize) -> bool {
        let adj = self.adjacency();
        let hit = |i: usize| self.node_attrs[i][0] == code;
        for a in 0..self.num_nodes() {
            if !hit(a) {
                continue;
            }
            for &b in adj[a].range(a + 1..) {
                if !hit(b) {
                    continue;
                }
                if adj[b].range(b + 1..).any(|&c| hit(c) && adj[a].contains(&c)) {
                    return true;
                }
            }
        }
        false
    }

    /// Copy of this graph with the edges at `hidden` positions removed.
    pub fn without_edges(&self, hidden: &BTreeSet<usize>) -> Graph {
        Graph {
            node_attrs: self.node_attrs.clone(),
            edges: self
                .edges
                .iter()
                .enumerate()
                .filter(|(i, _)| !hidden.contains(i))
                .map(|(_, e)| e.clone())
                .collect(),
            labels: self.labels.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub vocab: Vocab,
    pub graphs: Vec<Graph>,
}

#[derive(Serialize, Deserialize)]
struct GraphLine {
    nodes: Vec<[usize; 2]>,
    edges: Vec<[usize; 4]>,
    labels: Vec<i8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn num_tasks(&self) -> usize {
        self.graphs.first().map_or(0, Graph::num_tasks)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            vocab: self.vocab,
            graphs: indices.iter().map(|&i| self.graphs[i].clone()).collect(),
        }
    }

    pub fn parse_line(line: &str, line_no: usize, vocab: &Vocab) -> Result<Graph> {
        let raw: GraphLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let labels = raw
            .labels
            .iter()
            .map(|&l| match l {
                -1 => Ok(None),
                0 => Ok(Some(false)),
                1 => Ok(Some(true)),
                other => Err(Error::Parse {
                    line: line_no,
                    message: format!("label {other} is not one of -1, 0, 1"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        let graph = Graph {
            node_attrs: raw.nodes,
            edges: raw
                .edges
                .iter()
                .map(|e| Edge {
                    u: e[0],
                    v: e[1],
                    attrs: [e[2], e[3]],
                })
                .collect(),
            labels,
        };
        graph.validate(vocab).map_err(|message| Error::Parse {
            line: line_no,
            message,
        })?;
        Ok(graph)
    }

    pub fn load_jsonl(path: &Path, vocab: Vocab) -> Result<Dataset> {
        let reader = BufReader::new(File::open(path)?);
        let mut graphs = Vec::new();
        let mut tasks = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let g = Self::parse_line(&line, i + 1, &vocab)?;
            match tasks {
                None => tasks = Some(g.num_tasks()),
                Some(t) if t != g.num_tasks() => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("expected {t} labels, found {}", g.num_tasks()),
                    })
                }
                _ => {}
            }
            graphs.push(g);
        }
        Ok(Dataset { vocab, graphs })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for g in &self.graphs {
            let line = GraphLine {
                nodes: g.node_attrs.clone(),
                edges: g.edges.iter().map(|e| [e.u, e.v, e.attrs[0], e.attrs[1]]).collect(),
                labels: g
                    .labels
                    .iter()
                    .map(|l| match l {
                        None => -1,
                        Some(false) => 0,
                        Some(true) => 1,
                    })
                    .collect(),
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_jsonl().as_bytes())?;
        w.flush()?;
        Ok(())
    }
}

/// Arguments of the planted-triangle generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_graphs: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub edge_prob: f64,
    /// Edge probability for pairs sharing node attribute 0. `None` keeps
    /// every pair at `edge_prob` (plain Erdős–Rényi).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_prob_same: Option<f64>,
    pub vocab: Vocab,
    pub n_tasks: usize,
    /// Fraction of labels replaced by "missing".
    pub missing_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_graphs: 200,
            min_nodes: 8,
            max_nodes: 16,
            edge_prob: 0.3,
            edge_prob_same: None,
            vocab: Vocab::default(),
            n_tasks: 1,
            missing_rate: 0.1,
        }
    }
}

/// Erdős–Rényi graphs with uniform attributes. Task `t` is positive iff the
/// graph holds a triangle whose nodes all have `attr0 == t mod vocab.node[0]`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    if spec.min_nodes > spec.max_nodes {
        return Err(Error::Argument(format!(
            "empty node range [{}, {}]",
            spec.min_nodes, spec.max_nodes
        )));
    }
    if spec.min_nodes < 3 || spec.max_nodes > 64 {
        return Err(Error::Argument(format!(
            "node range [{}, {}] must lie within [3, 64]",
            spec.min_nodes, spec.max_nodes
        )));
    }
    if spec.n_tasks == 0 {
        return Err(Error::Argument("n_tasks must be at least 1".into()));
    }
    let probs = [spec.edge_prob, spec.missing_rate, spec.edge_prob_same.unwrap_or(0.0)];
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Argument("probabilities must lie in [0, 1]".into()));
    }
    let vocab = spec.vocab;
    if vocab.node.contains(&0) || vocab.edge.contains(&0) {
        return Err(Error::Argument("vocabulary sizes must be positive".into()));
    }
    let root = SeedStream::new(seed).split("synthetic");
    let mut graphs = Vec::with_capacity(spec.n_graphs);
    for gi in 0..spec.n_graphs {
        let mut rng = root.split_index("graph", gi as u64).rng();
        let n = rng.gen_range(spec.min_nodes..=spec.max_nodes);
        let node_attrs: Vec<[usize; 2]> = (0..n)
            .map(|_| [rng.gen_range(0..vocab.node[0]), rng.gen_range(0..vocab.node[1])])
            .collect();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = match spec.edge_prob_same {
                    Some(same) if node_attrs[u][0] == node_attrs[v][0] => same,
                    _ => spec.edge_prob,
                };
                if rng.gen::<f64>() < p {
                    edges.push(Edge {
                        u,
                        v,
                        attrs: [rng.gen_range(0..vocab.edge[0]), rng.gen_range(0..vocab.edge[1])],
                    });
                }
            }
        }
        let mut g = Graph {
            node_attrs,
            edges,
            labels: Vec::new(),
        };
        let mut mask_rng = root.split_index("missing", gi as u64).rng();
        g.labels = (0..spec.n_tasks)
            .map(|t| {
                let y = g.has_monochrome_triangle(t % vocab.node[0]);
                if mask_rng.gen::<f64>() < spec.missing_rate {
                    None
                } else {
                    Some(y)
                }
            })
            .collect();
        graphs.push(g);
    }
    Ok(Dataset { vocab, graphs })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    Random,
    StructureOrdered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    pub mode: SplitMode,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
            mode: SplitMode::StructureOrdered,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

/// Index form of a split, so callers can recover provenance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(dataset: &Dataset, spec: &SplitSpec, seed: u64) -> Result<SplitIndices> {
    if dataset.is_empty() {
        return Err(Error::Argument("cannot split an empty dataset".into()));
    }
    let fracs = [spec.train, spec.valid, spec.test];
    if fracs.iter().any(|f| *f < 0.0) || (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!(
            "split fractions {fracs:?} must be non-negative and sum to 1"
        )));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    match spec.mode {
        SplitMode::Random => {
            let mut rng = SeedStream::new(seed).split("split").rng();
            order.shuffle(&mut rng);
        }
        SplitMode::StructureOrdered => {
            let keys: Vec<usize> = dataset.graphs.iter().map(Graph::cyclomatic_number).collect();
            order.sort_by_key(|&i| (keys[i], i));
        }
    }
    let n_train = (spec.train * n as f64).round() as usize;
    let n_valid = ((spec.train + spec.valid) * n as f64).round() as usize - n_train;
    let n_test = n - n_train - n_valid;
    if n_train == 0 || n_valid == 0 || n_test == 0 {
        return Err(Error::Argument(format!(
            "split of {n} graphs leaves an empty part ({n_train}, {n_valid}, {n_test})"
        )));
    }
    Ok(SplitIndices {
        train: order[..n_train].to_vec(),
        valid: order[n_train..n_train + n_valid].to_vec(),
        test: order[n_train + n_valid..].to_vec(),
    })
}

pub fn split(dataset: &Dataset, spec: &SplitSpec, seed: u64) -> Result<Splits> {
    let idx = split_indices(dataset, spec, seed)?;
    Ok(Splits {
        train: dataset.subset(&idx.train),
        valid: dataset.subset(&idx.valid),
        test: dataset.subset(&idx.test),
    })
}

/// Several graphs packed into one disjoint union with directed edges.
///
/// Each stored undirected edge appears in both directions, followed by one
/// self-loop per node carrying the reserved edge code.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    pub num_graphs: usize,
    pub node_attrs: [Rc<[usize]>; 2],
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    pub edge_attrs: [Rc<[usize]>; 2],
    pub graph_id: Rc<[usize]>,
    pub node_offsets: Vec<usize>,
    pub num_tasks: usize,
    /// Row-major `num_graphs × num_tasks`, 0/1 (0 where masked).
    pub targets: Vec<f64>,
    pub mask: Vec<bool>,
}

impl GraphBatch {
    pub fn num_nodes(&self) -> usize {
        self.graph_id.len()
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    pub fn new(graphs: &[&Graph], vocab: &Vocab) -> Result<GraphBatch> {
        if graphs.is_empty() {
            return Err(Error::Argument("cannot batch zero graphs".into()));
        }
        let num_tasks = graphs[0].num_tasks();
        let loop_code = vocab.self_loop_code();
        let total_nodes: usize = graphs.iter().map(|g| g.num_nodes()).sum();
        let mut na = [Vec::with_capacity(total_nodes), Vec::with_capacity(total_nodes)];
        let (mut src, mut dst) = (Vec::new(), Vec::new());
        let mut ea = [Vec::new(), Vec::new()];
        let mut graph_id = Vec::with_capacity(total_nodes);
        let mut node_offsets = Vec::with_capacity(graphs.len() + 1);
        let mut targets = Vec::with_capacity(graphs.len() * num_tasks);
        let mut mask = Vec::with_capacity(graphs.len() * num_tasks);
        let mut offset = 0;
        for (gi, g) in graphs.iter().enumerate() {
            if g.num_tasks() != num_tasks {
                return Err(Error::Argument("graphs disagree on number of tasks".into()));
            }
            node_offsets.push(offset);
            for a in &g.node_attrs {
                na[0].push(a[0]);
                na[1].push(a[1]);
                graph_id.push(gi);
            }
            for e in &g.edges {
                for (s, t) in [(e.u, e.v), (e.v, e.u)] {
                    src.push(offset + s);
                    dst.push(offset + t);
                    ea[0].push(e.attrs[0]);
                    ea[1].push(e.attrs[1]);
                }
            }
            for i in 0..g.num_nodes() {
                src.push(offset + i);
                dst.push(offset + i);
                ea[0].push(loop_code[0]);
                ea[1].push(loop_code[1]);
            }
            for l in &g.labels {
                targets.push(if *l == Some(true) { 1.0 } else { 0.0 });
                mask.push(l.is_some());
            }
            offset += g.num_nodes();
        }
        node_offsets.push(offset);
        let [na0, na1] = na;
        let [ea0, ea1] = ea;
        Ok(GraphBatch {
            num_graphs: graphs.len(),
            node_attrs: [na0.into(), na1.into()],
            src: src.into(),
            dst: dst.into(),
            edge_attrs: [ea0.into(), ea1.into()],
            graph_id: graph_id.into(),
            node_offsets,
            num_tasks,
            targets,
            mask,
        })
    }

    pub fn from_dataset(dataset: &Dataset, indices: &[usize]) -> Result<GraphBatch> {
        let graphs: Vec<&Graph> = indices.iter().map(|&i| &dataset.graphs[i]).collect();
        GraphBatch::new(&graphs, &dataset.vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle(attr: usize) -> Graph {
        Graph {
            node_attrs: vec![[attr, 0]; 3],
            edges: vec![
                Edge { u: 0, v: 1, attrs: [0, 0] },
                Edge { u: 1, v: 2, attrs: [0, 0] },
                Edge { u: 0, v: 2, attrs: [0, 0] },
            ],
            labels: vec![None],
        }
    }

    fn path(n: usize) -> Graph {
        Graph {
            node_attrs: vec![[0, 0]; n],
            edges: (0..n - 1).map(|i| Edge { u: i, v: i + 1, attrs: [1, 1] }).collect(),
            labels: vec![Some(false)],
        }
    }

    #[test]
    fn minimal_line_parses() {
        let g = Dataset::parse_line(r#"{"nodes":[[0,0]],"edges":[],"labels":[1]}"#, 1, &Vocab::default())
            .unwrap();
        assert_eq!(g.num_nodes(), 1);
        assert_eq!(g.labels, vec![Some(true)]);
    }

    #[test]
    fn dangling_endpoint_names_line_and_endpoint() {
        let err = Dataset::parse_line(
            r#"{"nodes":[[0,0],[1,1]],"edges":[[0,5,0,0]],"labels":[0]}"#,
            7,
            &Vocab::default(),
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("line 7"), "{err}");
        assert!(err.contains("endpoint 5"), "{err}");
    }

    #[test]
    fn out_of_vocab_and_bad_json_fail() {
        let v = Vocab::default();
        assert!(Dataset::parse_line(r#"{"nodes":[[8,0]],"edges":[],"labels":[1]}"#, 1, &v).is_err());
        assert!(Dataset::parse_line(r#"{"nodes":[[0,0],[0,0]],"edges":[[0,1,4,0]],"labels":[1]}"#, 1, &v).is_err());
        assert!(Dataset::parse_line(r#"{"nodes":"#, 3, &v).is_err());
        assert!(Dataset::parse_line(r#"{"nodes":[[0,0]],"edges":[],"labels":[2]}"#, 1, &v).is_err());
    }

    #[test]
    fn planted_motif_labels() {
        assert!(triangle(0).has_monochrome_triangle(0));
        assert!(!triangle(1).has_monochrome_triangle(0));
        assert!(!path(5).has_monochrome_triangle(0));
    }

    #[test]
    fn empty_node_range_is_rejected() {
        let spec = SyntheticSpec { min_nodes: 9, max_nodes: 8, ..Default::default() };
        assert!(matches!(generate_synthetic(&spec, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn generator_is_bitwise_reproducible() {
        let spec = SyntheticSpec { n_graphs: 40, n_tasks: 3, ..Default::default() };
        let a = generate_synthetic(&spec, 11).unwrap().to_jsonl();
        let b = generate_synthetic(&spec, 11).unwrap().to_jsonl();
        assert_eq!(a, b);
        assert_ne!(a, generate_synthetic(&spec, 12).unwrap().to_jsonl());
    }

    #[test]
    fn labels_follow_structure() {
        let spec = SyntheticSpec { n_graphs: 60, n_tasks: 2, missing_rate: 0.0, ..Default::default() };
        let ds = generate_synthetic(&spec, 3).unwrap();
        for g in &ds.graphs {
            for t in 0..2 {
                assert_eq!(g.labels[t], Some(g.has_monochrome_triangle(t)));
            }
        }
    }

    #[test]
    fn missing_rate_is_roughly_ten_percent() {
        let spec = SyntheticSpec { n_graphs: 500, n_tasks: 4, ..Default::default() };
        let ds = generate_synthetic(&spec, 5).unwrap();
        let missing = ds.graphs.iter().flat_map(|g| &g.labels).filter(|l| l.is_none()).count();
        let frac = missing as f64 / 2000.0;
        assert!((0.07..0.13).contains(&frac), "{frac}");
    }

    #[test]
    fn split_sizes_and_partition() {
        let spec = SyntheticSpec { n_graphs: 10, ..Default::default() };
        let ds = generate_synthetic(&spec, 1).unwrap();
        for mode in [SplitMode::Random, SplitMode::StructureOrdered] {
            let s = split_indices(&ds, &SplitSpec { mode, ..Default::default() }, 4).unwrap();
            assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (8, 1, 1));
            let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
            all.sort();
            assert_eq!(all, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn structure_ordered_split_separates_cyclomatic_numbers() {
        let spec = SyntheticSpec { n_graphs: 100, ..Default::default() };
        let ds = generate_synthetic(&spec, 2).unwrap();
        let s = split(&ds, &SplitSpec::default(), 0).unwrap();
        let max_train = s.train.graphs.iter().map(Graph::cyclomatic_number).max().unwrap();
        let min_test = s.test.graphs.iter().map(Graph::cyclomatic_number).min().unwrap();
        assert!(max_train <= min_test);
    }

    #[test]
    fn tiny_split_fails() {
        let ds = Dataset { vocab: Vocab::default(), graphs: vec![path(3); 3] };
        assert!(split(&ds, &SplitSpec::default(), 0).is_err());
        let empty = Dataset { vocab: Vocab::default(), graphs: vec![] };
        assert!(split(&empty, &SplitSpec::default(), 0).is_err());
    }

    #[test]
    fn cyclomatic_number_of_small_graphs() {
        assert_eq!(triangle(0).cyclomatic_number(), 1);
        assert_eq!(path(4).cyclomatic_number(), 0);
    }

    #[test]
    fn batch_concatenates_with_offsets() {
        let a = path(2);
        let b = path(3);
        let batch = GraphBatch::new(&[&a, &b], &Vocab::default()).unwrap();
        assert_eq!(batch.num_nodes(), 5);
        assert_eq!(&*batch.graph_id, &[0, 0, 1, 1, 1]);
        assert_eq!(batch.node_offsets, vec![0, 2, 5]);
        assert_eq!(batch.num_edges(), 2 * (1 + 2) + 5);
        // self-loops carry the reserved code
        let last = batch.num_edges() - 1;
        assert_eq!(batch.src[last], batch.dst[last]);
        assert_eq!(batch.edge_attrs[0][last], 4);
        assert_eq!(batch.edge_attrs[1][last], 3);
        assert!(GraphBatch::new(&[], &Vocab::default()).is_err());
    }

    #[test]
    fn single_graph_batch_is_its_own_encoding() {
        let g = triangle(2);
        let batch = GraphBatch::new(&[&g], &Vocab::default()).unwrap();
        assert_eq!(batch.num_graphs, 1);
        assert_eq!(&*batch.src, &[0, 1, 1, 2, 0, 2, 0, 1, 2]);
        assert_eq!(&*batch.dst, &[1, 0, 2, 1, 2, 0, 0, 1, 2]);
        assert_eq!(batch.mask, vec![false]);
    }
}
