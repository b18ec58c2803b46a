use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrKind {
    /// real-valued node attribute vectors
    Attributed,
    /// one-hot encoded integer node labels
    Labeled,
    /// no node information (attr_dim 0 until padded)
    Plain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification { num_classes: usize },
    Regression,
}

impl Task {
    pub fn is_classification(self) -> bool {
        matches!(self, Task::Classification { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Class(usize),
    Value(f64),
}

impl Target {
    pub fn class(self) -> Option<usize> {
        match self {
            Target::Class(c) => Some(c),
            Target::Value(_) => None,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Target::Class(c) => c as f64,
            Target::Value(v) => v,
        }
    }
}

/// Undirected simple graph with node attributes and a graph-level target.
///
/// Edges are stored once as `(i, j)` with `i < j`, sorted and deduplicated.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    attrs: Tensor<f64>,
    target: Target,
}

impl Graph {
    /// Normalises `edges` to sorted unordered pairs. Self-loops are dropped;
    /// endpoints outside `0..n` are an error.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        attrs: Tensor<f64>,
        target: Target,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Dataset("graph must have at least one node".into()));
        }
        if attrs.rows() != n {
            return Err(Error::Dataset(format!(
                "attribute matrix has {} rows for {n} nodes",
                attrs.rows()
            )));
        }
        let mut norm = Vec::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Dataset(format!(
                    "edge ({i}, {j}) outside node range 0..{n}"
                )));
            }
            if i != j {
                norm.push((i.min(j), i.max(j)));
            }
        }
        norm.sort_unstable();
        norm.dedup();
        Ok(Graph {
            n,
            edges: norm,
            attrs,
            target,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn attrs(&self) -> &Tensor<f64> {
        &self.attrs
    }

    pub fn attr_dim(&self) -> usize {
        self.attrs.cols()
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn with_edges(&self, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Graph::new(self.n, edges, self.attrs.clone(), self.target)
    }

    pub fn with_attrs(&self, attrs: Tensor<f64>) -> Result<Self> {
        Graph::new(self.n, self.edges.iter().copied(), attrs, self.target)
    }

    /// Relabels node `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::InvalidArgument("permutation length".into()));
        }
        let d = self.attr_dim();
        let mut attrs = Tensor::zeros(self.n, d);
        for v in 0..self.n {
            for c in 0..d {
                attrs.set(perm[v], c, self.attrs.get(v, c));
            }
        }
        let edges = self.edges.iter().map(|&(i, j)| (perm[i], perm[j]));
        Graph::new(self.n, edges, attrs, self.target)
    }

    /// Dense 0/1 adjacency without self-loops.
    pub fn adjacency(&self) -> Tensor<f64> {
        let mut a = Tensor::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
        a
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub attr_kind: AttrKind,
    pub attr_dim: usize,
    pub task: Task,
}

impl GraphDataset {
    /// Checks the dataset-level invariants: shared attribute width and class
    /// ids within range.
    pub fn validate(&self) -> Result<()> {
        if self.graphs.is_empty() {
            return Err(Error::Dataset(format!("{}: no graphs", self.name)));
        }
        for (gi, g) in self.graphs.iter().enumerate() {
            if g.attr_dim() != self.attr_dim {
                return Err(Error::Dataset(format!(
                    "{}: graph {gi} has attr_dim {}, dataset has {}",
                    self.name,
                    g.attr_dim(),
                    self.attr_dim
                )));
            }
            match (self.task, g.target()) {
                (Task::Classification { num_classes }, Target::Class(c)) if c < num_classes => {}
                (Task::Regression, Target::Value(_)) => {}
                (task, t) => {
                    return Err(Error::Dataset(format!(
                        "{}: graph {gi} target {t:?} does not fit task {task:?}",
                        self.name
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn total_nodes(&self) -> usize {
        self.graphs.iter().map(Graph::num_nodes).sum()
    }

    pub fn mean_nodes(&self) -> f64 {
        self.total_nodes() as f64 / self.len().max(1) as f64
    }

    pub fn mean_edges(&self) -> f64 {
        self.graphs.iter().map(Graph::num_edges).sum::<usize>() as f64 / self.len().max(1) as f64
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self.task {
            Task::Classification { num_classes } => Some(num_classes),
            Task::Regression => None,
        }
    }

    pub fn subset(&self, ids: &[usize]) -> GraphDataset {
        GraphDataset {
            name: self.name.clone(),
            graphs: ids.iter().map(|&i| self.graphs[i].clone()).collect(),
            attr_kind: self.attr_kind,
            attr_dim: self.attr_dim,
            task: self.task,
        }
    }

    pub(crate) fn with_graphs(&self, graphs: Vec<Graph>) -> GraphDataset {
        GraphDataset {
            name: self.name.clone(),
            graphs,
            attr_kind: self.attr_kind,
            attr_dim: self.attr_dim,
            task: self.task,
        }
    }
}
