//! Dataset transforms. Each returns a new dataset; node counts and targets
//! are never changed. One seeded `ChaCha8Rng` drives each call, consumed
//! graph by graph in dataset order.

use rand::seq::index;

use super::graph::{AttrKind, GraphDataset};
use crate::error::{Error, Result};
use crate::ratio::floor_count;
use crate::rng;
use crate::tensor::Tensor;

/// Gives every node of a plain dataset the all-one attribute vector of length `dim`.
pub fn pad_plain_attributes(ds: &GraphDataset, dim: usize) -> Result<GraphDataset> {
    if ds.attr_kind != AttrKind::Plain {
        return Err(Error::InvalidArgument(format!(
            "{}: padding applies to plain datasets, this one is {:?}",
            ds.name, ds.attr_kind
        )));
    }
    if dim < 1 {
        return Err(Error::InvalidArgument("pad dimension must be >= 1".into()));
    }
    let graphs = ds
        .graphs
        .iter()
        .map(|g| g.with_attrs(Tensor::ones(g.num_nodes(), dim)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = ds.with_graphs(graphs);
    out.attr_dim = dim;
    Ok(out)
}

/// Zeroes the attribute rows of `floor(ratio * total_nodes)` nodes drawn
/// uniformly across the whole dataset.
pub fn make_incomplete(ds: &GraphDataset, ratio: f64, seed: u64) -> Result<GraphDataset> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!(
            "incomplete ratio {ratio} outside [0, 1]"
        )));
    }
    if ds.attr_kind == AttrKind::Plain {
        return Err(Error::InvalidArgument(format!(
            "{}: incompleteness needs attributed or labeled nodes",
            ds.name
        )));
    }
    let total = ds.total_nodes();
    let k = floor_count(ratio, total);
    let mut rng = rng::rng(seed);
    let mut removed = vec![false; total];
    for i in index::sample(&mut rng, total, k) {
        removed[i] = true;
    }

    let mut offset = 0;
    let graphs = ds
        .graphs
        .iter()
        .map(|g| {
            let mut attrs = g.attrs().clone();
            let d = attrs.cols();
            for v in 0..g.num_nodes() {
                if removed[offset + v] {
                    attrs.data_mut()[v * d..(v + 1) * d].fill(0.0);
                }
            }
            offset += g.num_nodes();
            g.with_attrs(attrs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ds.with_graphs(graphs))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbMode {
    /// remove `floor(ratio * |E|)` edges
    Drop,
    /// start edgeless and insert `floor(ratio * |E|)` random pairs
    AddFromEmpty,
}

pub fn perturb_edges(ds: &GraphDataset, mode: PerturbMode, ratio: f64, seed: u64) -> Result<GraphDataset> {
    if !(ratio >= 0.0) || (mode == PerturbMode::Drop && ratio > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "edge perturbation ratio {ratio} invalid for {mode:?}"
        )));
    }
    let mut rng = rng::rng(seed);
    let graphs = ds
        .graphs
        .iter()
        .map(|g| {
            let e = g.num_edges();
            match mode {
                PerturbMode::Drop => {
                    let k = floor_count(ratio, e);
                    let mut drop = vec![false; e];
                    for i in index::sample(&mut rng, e, k) {
                        drop[i] = true;
                    }
                    let kept = g
                        .edges()
                        .iter()
                        .zip(drop)
                        .filter(|(_, d)| !d)
                        .map(|(&p, _)| p);
                    g.with_edges(kept)
                }
                PerturbMode::AddFromEmpty => {
                    let n = g.num_nodes();
                    let pairs = n * (n - 1) / 2;
                    let k = floor_count(ratio, e).min(pairs);
                    let added: Vec<_> = index::sample(&mut rng, pairs, k)
                        .into_iter()
                        .map(|p| unrank_pair(p, n))
                        .collect();
                    g.with_edges(added)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ds.with_graphs(graphs))
}

/// Inverse of the lexicographic ranking of pairs `(i, j)`, `i < j < n`.
fn unrank_pair(mut p: usize, n: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - 1 - i;
        if p < row {
            return (i, i + 1 + p);
        }
        p -= row;
    }
    unreachable!("pair rank out of range")
}
