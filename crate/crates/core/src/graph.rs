//! Weighted finite graphs with the degree measure.
//!
//! A [`WeightedGraph`] is immutable once built. Its measure is always
//! `mu(x) = sum_{y ~ x} w_xy`, so the Laplacian defined on it is the
//! random-walk (normalized) Laplacian. Vertex labels are opaque strings and
//! the canonical vertex order is the order in which they were supplied.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::ops::{Deref, DerefMut};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Errors raised while building or reading a graph.
#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("graph has no vertices")]
    Empty,
    #[error("duplicate vertex label '{0}'")]
    DuplicateVertex(String),
    #[error("edge references unknown vertex '{0}'")]
    UnknownVertex(String),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(String, String),
    #[error("edge ({a}, {b}) has nonpositive or non-finite weight {weight}")]
    NonPositiveWeight { a: String, b: String, weight: f64 },
    #[error("self-loop at vertex '{0}'")]
    SelfLoop(String),
    #[error("vertex '{0}' is isolated (zero measure)")]
    IsolatedVertex(String),
    #[error("graph is disconnected: '{reachable_from}' cannot reach '{unreachable}'")]
    Disconnected {
        reachable_from: String,
        unreachable: String,
    },
    #[error("malformed graph description: {0}")]
    Parse(String),
    #[error("unsupported graph file extension for '{0}' (expected .json, .txt or .edges)")]
    UnsupportedFormat(String),
    #[error("vertex function has {got} values but the graph has {expected} vertices")]
    FunctionLength { expected: usize, got: usize },
    #[error("vertex function value at '{0}' is not finite")]
    NonFiniteValue(String),
    #[error("vertex function is missing a value for '{0}'")]
    MissingValue(String),
    #[error("interior vertex set is empty")]
    EmptyInterior,
    #[error("io error on '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// On-disk JSON form: `{"vertices": ["a","b"], "edges": [["a","b",1.0]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub vertices: Vec<String>,
    pub edges: Vec<(String, String, f64)>,
}

#[derive(Debug, Clone)]
pub struct WeightedGraph {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    // (u, v, w) in input order, u != v
    edges: Vec<(usize, usize, f64)>,
    // neighbors in edge-insertion order
    adjacency: Vec<Vec<(usize, f64)>>,
    measure: Vec<f64>,
}

impl WeightedGraph {
    /// Builds and validates a graph from labels and a weighted edge list.
    pub fn new<S: AsRef<str>>(vertices: &[S], edges: &[(S, S, f64)]) -> Result<Self, GraphError> {
        if vertices.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut labels = Vec::with_capacity(vertices.len());
        let mut index = HashMap::with_capacity(vertices.len());
        for v in vertices {
            let v = v.as_ref().to_string();
            if index.insert(v.clone(), labels.len()).is_some() {
                return Err(GraphError::DuplicateVertex(v));
            }
            labels.push(v);
        }

        let n = labels.len();
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut seen = HashMap::with_capacity(edges.len());
        let mut edge_list = Vec::with_capacity(edges.len());
        for (a, b, w) in edges {
            let (a, b, w) = (a.as_ref(), b.as_ref(), *w);
            let ia = *index
                .get(a)
                .ok_or_else(|| GraphError::UnknownVertex(a.to_string()))?;
            let ib = *index
                .get(b)
                .ok_or_else(|| GraphError::UnknownVertex(b.to_string()))?;
            if ia == ib {
                return Err(GraphError::SelfLoop(a.to_string()));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(GraphError::NonPositiveWeight {
                    a: a.to_string(),
                    b: b.to_string(),
                    weight: w,
                });
            }
            let key = (ia.min(ib), ia.max(ib));
            if seen.insert(key, ()).is_some() {
                return Err(GraphError::DuplicateEdge(a.to_string(), b.to_string()));
            }
            adjacency[ia].push((ib, w));
            adjacency[ib].push((ia, w));
            edge_list.push((ia, ib, w));
        }

        let measure: Vec<f64> = adjacency
            .iter()
            .map(|nbrs| nbrs.iter().map(|&(_, w)| w).sum())
            .collect();
        if let Some(x) = adjacency.iter().position(|nbrs| nbrs.is_empty()) {
            return Err(GraphError::IsolatedVertex(labels[x].clone()));
        }

        // BFS from the first vertex
        let mut visited = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(x) = queue.pop_front() {
            for &(y, _) in &adjacency[x] {
                if !visited[y] {
                    visited[y] = true;
                    queue.push_back(y);
                }
            }
        }
        if let Some(x) = visited.iter().position(|v| !v) {
            return Err(GraphError::Disconnected {
                reachable_from: labels[0].clone(),
                unreachable: labels[x].clone(),
            });
        }

        Ok(Self {
            labels,
            index,
            edges: edge_list,
            adjacency,
            measure,
        })
    }

    pub fn from_graph_file(file: &GraphFile) -> Result<Self, GraphError> {
        Self::new(&file.vertices, &file.edges)
    }

    pub fn from_json_str(s: &str) -> Result<Self, GraphError> {
        let file: GraphFile =
            serde_json::from_str(s).map_err(|e| GraphError::Parse(e.to_string()))?;
        Self::from_graph_file(&file)
    }

    /// Parses a plain edge list: one `x y w` triple per line. Vertices are
    /// inferred in order of first appearance. Blank lines and lines starting
    /// with `#` are skipped.
    pub fn from_edge_list_str(s: &str) -> Result<Self, GraphError> {
        let mut vertices: Vec<String> = Vec::new();
        let mut known: HashMap<String, ()> = HashMap::new();
        let mut edges = Vec::new();
        for (lineno, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(GraphError::Parse(format!(
                    "line {}: expected 'x y w', got '{line}'",
                    lineno + 1
                )));
            }
            let w: f64 = fields[2].parse().map_err(|_| {
                GraphError::Parse(format!(
                    "line {}: weight '{}' is not a number",
                    lineno + 1,
                    fields[2]
                ))
            })?;
            for v in &fields[..2] {
                if known.insert(v.to_string(), ()).is_none() {
                    vertices.push(v.to_string());
                }
            }
            edges.push((fields[0].to_string(), fields[1].to_string(), w));
        }
        Self::new(&vertices, &edges)
    }

    /// Loads a graph from disk; `.json` selects the JSON format, `.txt` or
    /// `.edges` the plain edge list.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            Some("txt") | Some("edges") => Self::from_edge_list_str(&text),
            _ => Err(GraphError::UnsupportedFormat(path.display().to_string())),
        }
    }

    pub fn to_graph_file(&self) -> GraphFile {
        GraphFile {
            vertices: self.labels.clone(),
            edges: self
                .edges
                .iter()
                .map(|&(a, b, w)| (self.labels[a].clone(), self.labels[b].clone(), w))
                .collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_graph_file()).expect("graph file serializes")
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, x: usize) -> &str {
        &self.labels[x]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Edges as `(x, y, w)` in input order.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    #[inline]
    pub fn neighbors(&self, x: usize) -> &[(usize, f64)] {
        &self.adjacency[x]
    }

    /// Vertex measure `mu(x) = sum_{y~x} w_xy`.
    #[inline]
    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    #[inline]
    pub fn mu(&self, x: usize) -> f64 {
        self.measure[x]
    }

    pub fn min_measure(&self) -> f64 {
        self.measure.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `d = max_x max_{y~x} mu(x) / w_xy`.
    pub fn sup_degree_ratio(&self) -> f64 {
        (0..self.len())
            .flat_map(|x| self.adjacency[x].iter().map(move |&(_, w)| (x, w)))
            .map(|(x, w)| self.measure[x] / w)
            .fold(0.0, f64::max)
    }

    /// `|V| = sum_x mu(x)`.
    pub fn total_volume(&self) -> f64 {
        self.measure.iter().sum()
    }

    /// Breadth-first distances from `x`, `usize::MAX` for unreachable.
    pub fn distances_from(&self, x: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        dist[x] = 0;
        let mut queue = VecDeque::from([x]);
        while let Some(y) = queue.pop_front() {
            for &(z, _) in &self.adjacency[y] {
                if dist[z] == usize::MAX {
                    dist[z] = dist[y] + 1;
                    queue.push_back(z);
                }
            }
        }
        dist
    }

    /// Vertices within graph distance `radius` of `x`, in canonical order.
    pub fn ball(&self, x: usize, radius: usize) -> Vec<usize> {
        self.distances_from(x)
            .into_iter()
            .enumerate()
            .filter(|&(_, d)| d <= radius)
            .map(|(y, _)| y)
            .collect()
    }

    /// Returns a copy with vertices relabeled and reordered by `perm`, where
    /// new vertex `i` is old vertex `perm[i]`. Edge weights are kept.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let vertices: Vec<String> = perm.iter().map(|&i| self.labels[i].clone()).collect();
        let edges: Vec<(String, String, f64)> = self
            .edges
            .iter()
            .map(|&(a, b, w)| (self.labels[a].clone(), self.labels[b].clone(), w))
            .collect();
        Self::new(&vertices, &edges)
    }
}

impl fmt::Display for WeightedGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "WeightedGraph({} vertices, {} edges)",
            self.len(),
            self.edges.len()
        )
    }
}

/// A real value per vertex, in the graph's canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexFunction(Vec<f64>);

impl VertexFunction {
    pub fn new(g: &WeightedGraph, values: Vec<f64>) -> Result<Self, GraphError> {
        if values.len() != g.len() {
            return Err(GraphError::FunctionLength {
                expected: g.len(),
                got: values.len(),
            });
        }
        if let Some(x) = values.iter().position(|v| !v.is_finite()) {
            return Err(GraphError::NonFiniteValue(g.label(x).to_string()));
        }
        Ok(Self(values))
    }

    /// Wraps values without validation. Used for operator outputs whose
    /// length is fixed by construction.
    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(g: &WeightedGraph) -> Self {
        Self(vec![0.0; g.len()])
    }

    pub fn constant(g: &WeightedGraph, c: f64) -> Self {
        Self(vec![c; g.len()])
    }

    /// Parses a JSON object mapping every vertex label to a value.
    pub fn from_json_str(g: &WeightedGraph, s: &str) -> Result<Self, GraphError> {
        let map: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(s).map_err(|e| GraphError::Parse(e.to_string()))?;
        let mut values = vec![f64::NAN; g.len()];
        for (label, value) in &map {
            let x = g
                .index_of(label)
                .ok_or_else(|| GraphError::UnknownVertex(label.clone()))?;
            values[x] = value
                .as_f64()
                .ok_or_else(|| GraphError::Parse(format!("value for '{label}' is not a number")))?;
        }
        if let Some(x) = (0..g.len()).find(|&x| !map.contains_key(g.label(x))) {
            return Err(GraphError::MissingValue(g.label(x).to_string()));
        }
        Self::new(g, values)
    }

    pub fn load(g: &WeightedGraph, path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(g, &text)
    }

    /// Label-keyed JSON object in canonical vertex order.
    pub fn to_labeled(&self, g: &WeightedGraph) -> serde_json::Map<String, serde_json::Value> {
        g.labels()
            .iter()
            .zip(&self.0)
            .map(|(l, &v)| (l.clone(), serde_json::Value::from(v)))
            .collect()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for VertexFunction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for VertexFunction {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<VertexFunction> for Vec<f64> {
    fn from(v: VertexFunction) -> Self {
        v.0
    }
}

/// Interior vertex set for zero-boundary problems. Functions in this setting
/// vanish outside `interior`; `boundary` lists the vertices adjacent to the
/// interior but not in it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VertexSubsetProblem {
    interior: Vec<usize>,
    boundary: Vec<usize>,
    #[serde(skip)]
    mask: Vec<bool>,
}

impl VertexSubsetProblem {
    pub fn new(g: &WeightedGraph, interior: &[usize]) -> Result<Self, GraphError> {
        if interior.is_empty() {
            return Err(GraphError::EmptyInterior);
        }
        let mut mask = vec![false; g.len()];
        for &x in interior {
            if x >= g.len() {
                return Err(GraphError::UnknownVertex(format!("#{x}")));
            }
            mask[x] = true;
        }
        let interior: Vec<usize> = (0..g.len()).filter(|&x| mask[x]).collect();
        let boundary: Vec<usize> = (0..g.len())
            .filter(|&y| !mask[y] && g.neighbors(y).iter().any(|&(x, _)| mask[x]))
            .collect();
        Ok(Self {
            interior,
            boundary,
            mask,
        })
    }

    pub fn from_labels<S: AsRef<str>>(g: &WeightedGraph, labels: &[S]) -> Result<Self, GraphError> {
        let idx = labels
            .iter()
            .map(|l| {
                g.index_of(l.as_ref())
                    .ok_or_else(|| GraphError::UnknownVertex(l.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(g, &idx)
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    #[inline]
    pub fn contains(&self, x: usize) -> bool {
        self.mask[x]
    }

    pub fn covers_all(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k2(w: f64) -> WeightedGraph {
        WeightedGraph::new(&["a", "b"], &[("a", "b", w)]).unwrap()
    }

    fn triangle() -> WeightedGraph {
        WeightedGraph::new(
            &["a", "b", "c"],
            &[("a", "b", 1.0), ("b", "c", 1.0), ("c", "a", 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn measure_is_weight_sum() {
        assert_eq!(k2(1.0).measure(), &[1.0, 1.0]);
        assert_eq!(triangle().measure(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn degree_ratio_and_volume() {
        assert_eq!(k2(1.0).sup_degree_ratio(), 1.0);
        assert_eq!(triangle().sup_degree_ratio(), 2.0);
        assert_eq!(k2(0.5).sup_degree_ratio(), 1.0);
        assert_eq!(k2(1.0).total_volume(), 2.0);
        assert_eq!(triangle().total_volume(), 6.0);
        assert_eq!(k2(3.0).total_volume(), 6.0);
    }

    #[test]
    fn rejects_invalid_inputs() {
        let err = WeightedGraph::new(&["a", "b", "c", "d"], &[("a", "b", 1.0), ("c", "d", 1.0)])
            .unwrap_err();
        assert!(matches!(err, GraphError::Disconnected { .. }), "{err}");

        let err = WeightedGraph::new(&["a", "b"], &[("a", "b", 1.0), ("b", "a", 2.0)]).unwrap_err();
        assert!(matches!(err, GraphError::DuplicateEdge(..)));

        let err = WeightedGraph::new(&["a", "b"], &[("a", "b", 0.0)]).unwrap_err();
        assert!(matches!(err, GraphError::NonPositiveWeight { .. }));

        let err = WeightedGraph::new(&["a", "b"], &[("a", "b", f64::NAN)]).unwrap_err();
        assert!(matches!(err, GraphError::NonPositiveWeight { .. }));

        let err = WeightedGraph::new(&["a", "b"], &[("a", "a", 1.0), ("a", "b", 1.0)]).unwrap_err();
        assert!(matches!(err, GraphError::SelfLoop(ref v) if v == "a"));

        let err = WeightedGraph::new(&["a", "b", "c"], &[("a", "b", 1.0)]).unwrap_err();
        assert!(matches!(err, GraphError::IsolatedVertex(ref v) if v == "c"));

        let err = WeightedGraph::new(&["a", "a"], &[("a", "a", 1.0)]).unwrap_err();
        assert!(matches!(err, GraphError::DuplicateVertex(_)));

        let err = WeightedGraph::new(&["a", "b"], &[("a", "z", 1.0)]).unwrap_err();
        assert!(matches!(err, GraphError::UnknownVertex(ref v) if v == "z"));
    }

    #[test]
    fn json_and_edge_list_agree() {
        let json = r#"{"vertices": ["a","b","c"], "edges": [["a","b",1.0],["b","c",2.5]]}"#;
        let g1 = WeightedGraph::from_json_str(json).unwrap();
        let g2 = WeightedGraph::from_edge_list_str("# path\na b 1.0\n\nb c 2.5\n").unwrap();
        assert_eq!(g1.labels(), g2.labels());
        assert_eq!(g1.measure(), g2.measure());
        assert_eq!(g1.measure(), &[1.0, 3.5, 2.5]);
    }

    #[test]
    fn edge_list_reports_bad_lines() {
        let err = WeightedGraph::from_edge_list_str("a b\n").unwrap_err();
        assert!(matches!(err, GraphError::Parse(_)));
        let err = WeightedGraph::from_edge_list_str("a b x\n").unwrap_err();
        assert!(matches!(err, GraphError::Parse(_)));
    }

    #[test]
    fn vertex_function_json() {
        let g = triangle();
        let f = VertexFunction::from_json_str(&g, r#"{"c": 3, "a": 1.5, "b": -2}"#).unwrap();
        assert_eq!(&*f, &[1.5, -2.0, 3.0]);
        let err = VertexFunction::from_json_str(&g, r#"{"a": 1}"#).unwrap_err();
        assert!(matches!(err, GraphError::MissingValue(ref v) if v == "b"));
        let err = VertexFunction::new(&g, vec![1.0, 2.0]).unwrap_err();
        assert!(matches!(
            err,
            GraphError::FunctionLength {
                expected: 3,
                got: 2
            }
        ));
    }

    #[test]
    fn subset_boundary() {
        let g = WeightedGraph::new(
            &["a", "b", "c", "d"],
            &[("a", "b", 1.0), ("b", "c", 1.0), ("c", "d", 1.0)],
        )
        .unwrap();
        let p = VertexSubsetProblem::from_labels(&g, &["b"]).unwrap();
        assert_eq!(p.interior(), &[1]);
        assert_eq!(p.boundary(), &[0, 2]);
        assert!(matches!(
            VertexSubsetProblem::new(&g, &[]),
            Err(GraphError::EmptyInterior)
        ));
        assert_eq!(g.ball(0, 2), vec![0, 1, 2]);
    }
}
