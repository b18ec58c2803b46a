//! TU benchmark layout: `{name}_A.txt`, `{name}_graph_indicator.txt`,
//! `{name}_graph_labels.txt` (or `{name}_graph_attributes.txt` for regression
//! targets) and the optional `{name}_node_labels.txt` /
//! `{name}_node_attributes.txt`. All ids in the files are 1-based.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::graph::{AttrKind, Graph, GraphDataset, Target, Task};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which graph-level target file to read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TaskHint {
    /// `graph_labels` if present, else `graph_attributes` as regression targets.
    #[default]
    Auto,
    Classification,
    Regression,
}

struct Lines {
    file: String,
    lines: Vec<(usize, String)>,
}

impl Lines {
    fn read(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path)?;
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim().to_string()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Ok(Lines {
            file: path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
            lines,
        })
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            file: self.file.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn ints(&self) -> Result<Vec<i64>> {
        self.lines
            .iter()
            .map(|(ln, l)| {
                l.parse::<i64>()
                    .map_err(|e| self.err(*ln, format!("expected integer, got {l:?}: {e}")))
            })
            .collect()
    }

    fn reals(&self) -> Result<Vec<f64>> {
        self.lines
            .iter()
            .map(|(ln, l)| {
                let first = fields(l).next().unwrap_or("");
                first
                    .parse::<f64>()
                    .map_err(|e| self.err(*ln, format!("expected real, got {l:?}: {e}")))
            })
            .collect()
    }
}

fn fields(text: &str) -> impl Iterator<Item = &str> {
    text.split(',').map(str::trim)
}

fn file(root: &Path, name: &str, suffix: &str) -> PathBuf {
    root.join(format!("{name}_{suffix}.txt"))
}

pub fn parse_tu_dataset(root: impl AsRef<Path>, name: &str) -> Result<GraphDataset> {
    parse_tu_dataset_with(root, name, TaskHint::Auto)
}

pub fn parse_tu_dataset_with(
    root: impl AsRef<Path>,
    name: &str,
    hint: TaskHint,
) -> Result<GraphDataset> {
    let root = root.as_ref();
    let indicator = Lines::read(&file(root, name, "graph_indicator"))?.ints()?;
    let adjacency = Lines::read(&file(root, name, "A"))?;

    let labels_path = file(root, name, "graph_labels");
    let gattr_path = file(root, name, "graph_attributes");
    let regression = match hint {
        TaskHint::Classification => false,
        TaskHint::Regression => true,
        TaskHint::Auto => !labels_path.is_file() && gattr_path.is_file(),
    };

    // per-node graph slot and local index
    let num_graphs = indicator.iter().copied().max().unwrap_or(0);
    if indicator.iter().any(|&g| g < 1) {
        return Err(Error::Dataset(format!(
            "{name}: graph indicator ids must be >= 1"
        )));
    }
    let num_graphs = num_graphs as usize;
    let mut sizes = vec![0usize; num_graphs];
    let mut local = Vec::with_capacity(indicator.len());
    for &g in &indicator {
        let g = g as usize - 1;
        local.push(sizes[g]);
        sizes[g] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Dataset(format!("{name}: graph {} has no nodes", empty + 1)));
    }

    let targets: Vec<Target> = if regression {
        let vals = Lines::read(&gattr_path)?.reals()?;
        check_count(name, "graph targets", vals.len(), num_graphs)?;
        vals.into_iter().map(Target::Value).collect()
    } else {
        let raw = Lines::read(&labels_path)?.ints()?;
        check_count(name, "graph labels", raw.len(), num_graphs)?;
        let alphabet: Vec<i64> = raw.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        raw.iter()
            .map(|l| Target::Class(alphabet.binary_search(l).expect("label in alphabet")))
            .collect()
    };
    let task = if regression {
        Task::Regression
    } else {
        let num_classes = targets.iter().filter_map(|t| t.class()).max().map_or(0, |m| m + 1);
        Task::Classification { num_classes }
    };

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    for (ln, l) in &adjacency.lines {
        let mut it = fields(l);
        let mut next = || -> Result<usize> {
            let f = it.next().ok_or_else(|| adjacency.err(*ln, "expected \"i, j\""))?;
            let v: usize = f
                .parse()
                .map_err(|e| adjacency.err(*ln, format!("bad node id {f:?}: {e}")))?;
            if v == 0 || v > indicator.len() {
                return Err(adjacency.err(
                    *ln,
                    format!("node {v} outside 1..={}", indicator.len()),
                ));
            }
            Ok(v - 1)
        };
        let (u, v) = (next()?, next()?);
        let (gu, gv) = (indicator[u], indicator[v]);
        if gu != gv {
            return Err(adjacency.err(
                *ln,
                format!(
                    "edge ({}, {}) joins graph {gu} and graph {gv}",
                    u + 1,
                    v + 1
                ),
            ));
        }
        edges[gu as usize - 1].push((local[u], local[v]));
    }

    let attr_path = file(root, name, "node_attributes");
    let nlabel_path = file(root, name, "node_labels");
    let (attr_kind, attr_dim, node_rows): (AttrKind, usize, Vec<Vec<f64>>) = if attr_path.is_file() {
        let lines = Lines::read(&attr_path)?;
        check_count(name, "node attribute rows", lines.lines.len(), indicator.len())?;
        let mut rows = Vec::with_capacity(lines.lines.len());
        let mut dim = None;
        for (ln, l) in &lines.lines {
            let row = fields(l)
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| lines.err(*ln, format!("bad attribute {f:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(lines.err(*ln, format!("ragged row: {} values, expected {d}", row.len())))
                }
                _ => {}
            }
            rows.push(row);
        }
        (AttrKind::Attributed, dim.unwrap_or(0), rows)
    } else if nlabel_path.is_file() {
        let labels = Lines::read(&nlabel_path)?.ints()?;
        check_count(name, "node labels", labels.len(), indicator.len())?;
        let alphabet: Vec<i64> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let rows = labels
            .iter()
            .map(|l| {
                let mut r = vec![0.0; alphabet.len()];
                r[alphabet.binary_search(l).expect("label in alphabet")] = 1.0;
                r
            })
            .collect();
        (AttrKind::Labeled, alphabet.len(), rows)
    } else {
        (AttrKind::Plain, 0, vec![Vec::new(); indicator.len()])
    };

    let mut per_graph: Vec<Vec<f64>> = sizes.iter().map(|&s| Vec::with_capacity(s * attr_dim)).collect();
    for (node, row) in node_rows.into_iter().enumerate() {
        per_graph[indicator[node] as usize - 1].extend(row);
    }

    let graphs = per_graph
        .into_iter()
        .zip(edges)
        .zip(targets)
        .enumerate()
        .map(|(gi, ((attrs, e), t))| {
            let attrs = Tensor::from_vec(sizes[gi], attr_dim, attrs)?;
            Graph::new(sizes[gi], e, attrs, t)
        })
        .collect::<Result<Vec<_>>>()?;

    let ds = GraphDataset {
        name: name.to_string(),
        graphs,
        attr_kind,
        attr_dim,
        task,
    };
    ds.validate()?;
    Ok(ds)
}

fn check_count(name: &str, what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Dataset(format!(
            "{name}: {got} {what}, expected {want}"
        )));
    }
    Ok(())
}

/// Writes `ds` in TU layout under `root`.
///
/// Labeled datasets whose rows are all one-hot are written back as node
/// labels (the column index), anything else with attributes as node
/// attributes. Class ids are written as-is, so re-parsing reproduces them.
pub fn write_tu_dataset(ds: &GraphDataset, root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    fs::create_dir_all(root)?;
    let name = &ds.name;

    let mut a = String::new();
    let mut ind = String::new();
    let mut glab = String::new();
    let mut nattr = String::new();
    let mut nlab = String::new();

    let one_hot = ds.attr_kind == AttrKind::Labeled
        && ds.graphs.iter().all(|g| {
            (0..g.num_nodes()).all(|v| {
                let r = g.attrs().row(v);
                r.iter().filter(|&&x| x == 1.0).count() == 1 && r.iter().all(|&x| x == 0.0 || x == 1.0)
            })
        });

    let mut offset = 0usize;
    for (gi, g) in ds.graphs.iter().enumerate() {
        for &(i, j) in g.edges() {
            let _ = writeln!(a, "{}, {}", offset + i + 1, offset + j + 1);
            let _ = writeln!(a, "{}, {}", offset + j + 1, offset + i + 1);
        }
        for v in 0..g.num_nodes() {
            let _ = writeln!(ind, "{}", gi + 1);
            let row = g.attrs().row(v);
            if one_hot {
                let idx = row.iter().position(|&x| x == 1.0).expect("one-hot row");
                let _ = writeln!(nlab, "{idx}");
            } else if ds.attr_dim > 0 {
                let fields: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
                let _ = writeln!(nattr, "{}", fields.join(", "));
            }
        }
        match g.target() {
            Target::Class(c) => {
                let _ = writeln!(glab, "{c}");
            }
            Target::Value(v) => {
                let _ = writeln!(glab, "{v:?}");
            }
        }
        offset += g.num_nodes();
    }

    fs::write(file(root, name, "A"), a)?;
    fs::write(file(root, name, "graph_indicator"), ind)?;
    let target_file = if ds.task.is_classification() {
        "graph_labels"
    } else {
        "graph_attributes"
    };
    fs::write(file(root, name, target_file), glab)?;
    if one_hot {
        fs::write(file(root, name, "node_labels"), nlab)?;
    } else if ds.attr_dim > 0 {
        fs::write(file(root, name, "node_attributes"), nattr)?;
    }
    Ok(())
}
