//! Small generated datasets for smoke runs and for the regression surrogate
//! when ZINC files are not at hand.

use rand::Rng;

use super::graph::{AttrKind, Graph, GraphDataset, Target, Task};
use crate::error::Result;
use crate::rng;
use crate::tensor::Tensor;

const ATOM_TYPES: usize = 4;

/// Random molecule-like graph: a random spanning tree plus a few ring-closing
/// edges, with one of four one-hot node types.
fn molecule<R: Rng>(rng: &mut R, n: usize, extra: usize) -> (Vec<(usize, usize)>, Vec<usize>) {
    let mut edges = Vec::with_capacity(n - 1 + extra);
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v));
    }
    for _ in 0..extra {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i != j {
            edges.push((i, j));
        }
    }
    let types = (0..n).map(|_| rng.gen_range(0..ATOM_TYPES)).collect();
    (edges, types)
}

fn one_hot(types: &[usize]) -> Tensor<f64> {
    let mut t = Tensor::zeros(types.len(), ATOM_TYPES);
    for (v, &k) in types.iter().enumerate() {
        t.set(v, k, 1.0);
    }
    t
}

/// Regression surrogate whose target depends on both structure and labels:
/// `y = mean degree / 2 + share of type-0 nodes + 0.25 * independent cycles`.
pub fn regression(num_graphs: usize, seed: u64) -> Result<GraphDataset> {
    let mut rng = rng::derived_rng(seed, &[rng::TAG_SYNTH, 1]);
    let mut graphs = Vec::with_capacity(num_graphs);
    for _ in 0..num_graphs {
        let n = rng.gen_range(6..=20);
        let extra = rng.gen_range(0..=4);
        let (edges, types) = molecule(&mut rng, n, extra);
        let attrs = one_hot(&types);
        let mut g = Graph::new(n, edges, attrs, Target::Value(0.0))?;
        let mean_degree = 2.0 * g.num_edges() as f64 / n as f64;
        let type0 = types.iter().filter(|&&t| t == 0).count() as f64 / n as f64;
        let cycles = (g.num_edges() + 1 - n) as f64;
        let y = mean_degree / 2.0 + type0 + 0.25 * cycles;
        g = Graph::new(n, g.edges().iter().copied(), g.attrs().clone(), Target::Value(y))?;
        graphs.push(g);
    }
    Ok(GraphDataset {
        name: "SYNTH-REG".into(),
        graphs,
        attr_kind: AttrKind::Labeled,
        attr_dim: ATOM_TYPES,
        task: Task::Regression,
    })
}

/// Two-class labeled dataset: class 1 graphs carry a dense clique-like core
/// and are enriched in type-0 nodes; class 0 graphs are sparse trees.
pub fn classification(num_graphs: usize, seed: u64) -> Result<GraphDataset> {
    let mut rng = rng::derived_rng(seed, &[rng::TAG_SYNTH, 2]);
    let mut graphs = Vec::with_capacity(num_graphs);
    for i in 0..num_graphs {
        let class = i % 2;
        let n = rng.gen_range(5..=12);
        let (mut edges, mut types) = molecule(&mut rng, n, 0);
        if class == 1 {
            let core = 4.min(n);
            for a in 0..core {
                for b in a + 1..core {
                    edges.push((a, b));
                }
            }
            for t in types.iter_mut().take(core) {
                *t = 0;
            }
        }
        graphs.push(Graph::new(n, edges, one_hot(&types), Target::Class(class))?);
    }
    Ok(GraphDataset {
        name: "SYNTH-CLS".into(),
        graphs,
        attr_kind: AttrKind::Labeled,
        attr_dim: ATOM_TYPES,
        task: Task::Classification { num_classes: 2 },
    })
}
