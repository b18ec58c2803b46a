use std::ops::Range;

use super::graph::{Graph, Target};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Block-diagonal union of several graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub total_nodes: usize,
    pub attrs: Tensor<f64>,
    /// global node ids, `i < j`
    pub edges: Vec<(usize, usize)>,
    /// node -> slot
    pub membership: Vec<usize>,
    pub slots: Vec<Range<usize>>,
    pub targets: Vec<Target>,
}

pub fn batch_graphs<G: AsRef<Graph>>(graphs: &[G]) -> Result<Batch> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot batch an empty graph list".into()))?;
    let d = first.as_ref().attr_dim();
    let mut attrs = Vec::new();
    let mut edges = Vec::new();
    let mut membership = Vec::new();
    let mut slots = Vec::with_capacity(graphs.len());
    let mut targets = Vec::with_capacity(graphs.len());
    let mut offset = 0;
    for (s, g) in graphs.iter().enumerate() {
        let g = g.as_ref();
        if g.attr_dim() != d {
            return Err(Error::InvalidArgument(format!(
                "graph {s} has attr_dim {}, batch has {d}",
                g.attr_dim()
            )));
        }
        attrs.extend_from_slice(g.attrs().data());
        edges.extend(g.edges().iter().map(|&(i, j)| (i + offset, j + offset)));
        membership.extend(std::iter::repeat_n(s, g.num_nodes()));
        slots.push(offset..offset + g.num_nodes());
        targets.push(g.target());
        offset += g.num_nodes();
    }
    Ok(Batch {
        total_nodes: offset,
        attrs: Tensor::from_vec(offset, d, attrs)?,
        edges,
        membership,
        slots,
        targets,
    })
}

impl AsRef<Graph> for Graph {
    fn as_ref(&self) -> &Graph {
        self
    }
}

impl Batch {
    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn attr_dim(&self) -> usize {
        self.attrs.cols()
    }

    /// Attribute rows of one slot.
    pub fn slot_attrs(&self, slot: usize) -> Tensor<f64> {
        let r = &self.slots[slot];
        let d = self.attrs.cols();
        Tensor::from_vec(r.len(), d, self.attrs.data()[r.start * d..r.end * d].to_vec())
            .expect("slot range within batch")
    }

    /// Edges of one slot in slot-local ids.
    pub fn slot_edges(&self, slot: usize) -> Vec<(usize, usize)> {
        let r = &self.slots[slot];
        self.edges
            .iter()
            .filter(|(i, _)| r.contains(i))
            .map(|&(i, j)| (i - r.start, j - r.start))
            .collect()
    }
}
