//! Graph datasets: types, TU-format I/O, transforms, folds and batching.

mod batch;
mod graph;
mod split;
pub mod synthetic;
mod transform;
mod tu;

pub use batch::{batch_graphs, Batch};
pub use graph::{AttrKind, Graph, GraphDataset, Target, Task};
pub use split::{holdout_split, stratified_kfold, FoldSplit};
pub use transform::{make_incomplete, pad_plain_attributes, perturb_edges, PerturbMode};
pub use tu::{parse_tu_dataset, parse_tu_dataset_with, write_tu_dataset, TaskHint};
