//! Acceptance checks, one test per criterion. Each prints a single
//! `[criterion N] PASS|FAIL|NOT RUN ...` line; run with `--nocapture` to see
//! them.
//!
//! Criteria 4 and 5 need the PROTEINS and IMDB-BINARY TU files and are
//! ignored by default. Run them with `--ignored` and `COPOOL_DATA_ROOT`
//! pointing at the directory holding the files; set `COPOOL_FULL_GRID=1` to
//! use the full grid instead of the reduced one.

use std::collections::BTreeSet;
use std::path::PathBuf;

use copool::copool::{
    copool_forward, gpr_propagate, select_top_nodes, top_gamma_survivors, CoPoolConfig, CoPoolParams, PoolMode,
};
use copool::data::{batch_graphs, synthetic, Graph, GraphDataset, PerturbMode, Target, Task};
use copool::gradcheck::grad_check;
use copool::harness::{
    grid_search_cv, incomplete_ratios, load_dataset, perturbation_ratios, regression_spec, run_incomplete,
    run_perturbation, run_regression, CvSettings, Grid, TrainSpec,
};
use copool::layers::Adjacency;
use copool::model::{forward, loss, ModelConfig, ModelParams};
use copool::rng::{self, Rng as ChaRng};
use copool::tape::{Tape, Var};
use copool::tensor::Tensor;
use rand::Rng;

type T64 = Tensor<f64>;

fn report(id: u32, ok: bool, what: &str, detail: &str) {
    let status = if ok { "PASS" } else { "FAIL" };
    println!("[criterion {id}] {status}: {what} ({detail})");
}

fn random_tensor<R: Rng>(r: &mut R, rows: usize, cols: usize) -> T64 {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Entries in [-1, 1] with magnitude at least 0.05, away from relu/abs kinks.
fn off_kink<R: Rng>(r: &mut R, rows: usize, cols: usize) -> T64 {
    random_tensor(r, rows, cols).map(|v| if v.abs() < 0.05 { v.signum() * 0.05 + v } else { v })
}

fn random_edges<R: Rng>(r: &mut R, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut e = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.gen_bool(p) {
                e.push((i, j));
            }
        }
    }
    e
}

// ---------------------------------------------------------------- criterion 1

type Builder = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> copool::Result<Var>>;

/// Weighted sum `sum(out * w)` so every output entry contributes differently.
fn weigh(tape: &mut Tape<f64>, out: Var, seed: u64) -> copool::Result<Var> {
    let (r, c) = tape.shape(out);
    let w = random_tensor(&mut rng::rng(seed), r, c);
    let w = tape.constant(w);
    let m = tape.mul(out, w)?;
    Ok(tape.sum(m))
}

fn op_cases(r: &mut ChaRng) -> Vec<(&'static str, Builder, Vec<T64>)> {
    let n = r.gen_range(2..=8);
    let m = r.gen_range(1..=8);
    let k = r.gen_range(1..=8);
    let a = random_tensor(r, n, m);
    let b = random_tensor(r, m, k);
    let c = random_tensor(r, n, m);
    let s = random_tensor(r, 1, 1);
    let idx: Vec<usize> = (0..r.gen_range(1..=8)).map(|_| r.gen_range(0..n)).collect();
    let mask = Tensor::from_vec(n, m, (0..n * m).map(|_| if r.gen_bool(0.5) { 2.0 } else { 0.0 }).collect()).unwrap();
    let targets: Vec<usize> = (0..n).map(|_| r.gen_range(0..m)).collect();
    let positive = random_tensor(r, n, n).map(|v| v.abs() + 0.1);
    let mut spread = random_tensor(r, n, m);
    for (i, v) in spread.data_mut().iter_mut().enumerate() {
        *v += i as f64 * 0.01;
    }
    let seed = r.gen::<u64>();
    let idx2 = idx.clone();
    let c2 = c.clone();
    vec![
        ("matmul", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.matmul(v[0], v[1])?;
            weigh(t, o, seed)
        }) as Builder, vec![a.clone(), b.clone()]),
        ("add", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.add(v[0], v[1])?;
            weigh(t, o, seed)
        }), vec![a.clone(), c.clone()]),
        ("sub", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.sub(v[0], v[1])?;
            weigh(t, o, seed)
        }), vec![a.clone(), c.clone()]),
        ("scale", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.scale(v[0], -1.7);
            weigh(t, o, seed)
        }), vec![a.clone()]),
        ("scale_by", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.scale_by(v[0], v[1])?;
            weigh(t, o, seed)
        }), vec![a.clone(), s]),
        ("mul", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.mul(v[0], v[1])?;
            weigh(t, o, seed)
        }), vec![a.clone(), c.clone()]),
        ("transpose", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.transpose(v[0]);
            weigh(t, o, seed)
        }), vec![a.clone()]),
        ("concat_cols", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.concat_cols(&[v[0], v[1]])?;
            weigh(t, o, seed)
        }), vec![a.clone(), c.clone()]),
        ("concat_rows", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.concat_rows(&[v[0], v[1]])?;
            weigh(t, o, seed)
        }), vec![a.clone(), c2]),
        ("select_rows", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.select_rows(v[0], &idx2)?;
            weigh(t, o, seed)
        }), vec![a.clone()]),
        ("sigmoid", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.sigmoid(v[0]);
            weigh(t, o, seed)
        }), vec![a.clone()]),
        ("relu", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.relu(v[0]);
            weigh(t, o, seed)
        }), vec![off_kink(r, n, m)]),
        ("row_sum", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.row_sum(v[0]);
            weigh(t, o, seed)
        }), vec![a.clone()]),
        ("col_sum", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.col_sum(v[0]);
            weigh(t, o, seed)
        }), vec![a.clone()]),
        ("sum", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.mul(v[0], v[0])?;
            Ok(t.sum(o))
        }), vec![a.clone()]),
        ("mean_rows", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.mean_rows(v[0])?;
            weigh(t, o, seed)
        }), vec![a.clone()]),
        ("max_rows", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.max_rows(v[0])?;
            weigh(t, o, seed)
        }), vec![spread]),
        ("dropout_mask", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.apply_mask(v[0], mask.clone())?;
            weigh(t, o, seed)
        }), vec![a.clone()]),
        ("log_softmax", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.log_softmax(v[0]);
            weigh(t, o, seed)
        }), vec![a.clone()]),
        ("nll", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.log_softmax(v[0]);
            t.nll(o, &targets)
        }), vec![a.clone()]),
        ("l1", Box::new(move |t: &mut Tape<f64>, v: &[Var]| t.l1(v[0], v[1])), {
            let diff = off_kink(r, n, m);
            vec![c.add(&diff).unwrap(), c.clone()]
        }),
        ("sym_norm", Box::new(move |t: &mut Tape<f64>, v: &[Var]| {
            let o = t.sym_norm(v[0])?;
            weigh(t, o, seed)
        }), vec![positive]),
    ]
}

fn tiny_classifier() -> ModelConfig {
    ModelConfig {
        hidden: 4,
        dropout: 0.0,
        pool: CoPoolConfig::default(),
        task: Task::Classification { num_classes: 2 },
        attr_dim: 3,
    }
}

#[test]
fn criterion_1_gradient_correctness() {
    let mut worst_op = (0.0f64, "");
    let mut r = rng::rng(1);
    for _ in 0..10 {
        for (name, build, leaves) in op_cases(&mut r) {
            let err = grad_check(build, &leaves, 1e-4).unwrap();
            if err > worst_op.0 {
                worst_op = (err, name);
            }
        }
    }

    let cfg = tiny_classifier();
    let mut worst_model = 0.0f64;
    let mut checked = 0;
    let mut seed = 0;
    while checked < 10 {
        seed += 1;
        let mut r = rng::rng(1000 + seed);
        let params = ModelParams::<T64>::new(&cfg, &mut r).unwrap();
        let n = r.gen_range(2..=6);
        let g = Graph::new(n, random_edges(&mut r, n, 0.5), random_tensor(&mut r, n, 3), Target::Class(r.gen_range(0..2))).unwrap();
        let batch = batch_graphs(&[g]).unwrap();
        let mut tape = Tape::new();
        let p = params.constants(&mut tape);
        let (_, trace) = forward::<f64, ChaRng>(&mut tape, &p, &cfg, &batch, None).unwrap();
        // re-sample points where a ranking could flip inside the probe step
        if trace.margin < 1e-3 {
            continue;
        }
        let leaves: Vec<T64> = params.tensors().into_iter().cloned().collect();
        let skeleton = params.clone();
        let build = |tape: &mut Tape<f64>, v: &[Var]| {
            let mut it = v.iter();
            let p = skeleton.map(|_| *it.next().unwrap());
            let (out, _) = forward::<f64, ChaRng>(tape, &p, &cfg, &batch, None)?;
            loss(tape, out, &batch.targets, cfg.task)
        };
        worst_model = worst_model.max(grad_check(build, &leaves, 1e-4).unwrap());
        checked += 1;
    }
    let ok = worst_op.0 < 1e-4 && worst_model < 1e-4;
    report(
        1,
        ok,
        "grad_check < 1e-4 for every op and the end-to-end classifier",
        &format!(
            "worst op {} = {:.2e}, worst end-to-end = {:.2e} over {checked} graphs",
            worst_op.1, worst_op.0, worst_model
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- criterion 2

/// Survivors by pairwise rank counting: an edge survives when fewer than
/// `keep` edges beat it (higher weight, or equal weight and smaller pair).
fn survivors_oracle(w: &T64, edges: &[(usize, usize)], gamma: f64) -> Vec<(usize, usize)> {
    let keep = ((gamma * edges.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut out: Vec<(usize, usize)> = edges
        .iter()
        .copied()
        .filter(|&e| {
            let beaten_by = edges
                .iter()
                .filter(|&&f| w.get(f.0, f.1) > w.get(e.0, e.1) || (w.get(f.0, f.1) == w.get(e.0, e.1) && f < e))
                .count();
            beaten_by < keep
        })
        .collect();
    out.sort_unstable();
    out
}

fn top_nodes_oracle(s: &[f64], eps: f64) -> Vec<usize> {
    let n = s.len();
    let k = ((n as f64 * eps) - 1e-9).ceil().max(1.0) as usize;
    let rank = |i: usize| (0..n).filter(|&j| s[j] > s[i] || (s[j] == s[i] && j < i)).count();
    let mut by_rank = vec![usize::MAX; n];
    for i in 0..n {
        by_rank[rank(i)] = i;
    }
    by_rank.truncate(k);
    by_rank
}

fn dense_prop(n: usize, edges: &[(usize, usize)]) -> T64 {
    let mut a = Tensor::eye(n);
    for &(i, j) in edges {
        a.set(i, j, 1.0);
        a.set(j, i, 1.0);
    }
    let d: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum::<f64>()).collect();
    let mut out = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, a.get(i, j) / (d[i] * d[j]).sqrt());
        }
    }
    out
}

#[test]
fn criterion_2_oracle_equivalence() {
    let mut r = rng::rng(2);
    let (mut cut_ok, mut top_ok, mut gpr_err) = (0, 0, 0.0f64);
    for _ in 0..200 {
        let n = r.gen_range(1..=8);
        let edges = random_edges(&mut r, n, 0.5);
        // quantised weights force ties
        let mut w = Tensor::eye(n);
        for &(i, j) in &edges {
            let v = f64::from(r.gen_range(0..4u8)) / 4.0;
            w.set(i, j, v);
            w.set(j, i, v);
        }
        let gamma = f64::from(r.gen_range(1..=10u8)) / 10.0;
        if top_gamma_survivors(&w, gamma, &edges) == survivors_oracle(&w, &edges, gamma) {
            cut_ok += 1;
        }

        let s: Vec<f64> = (0..n).map(|_| f64::from(r.gen_range(0..5u8)) * 0.25).collect();
        let eps = f64::from(r.gen_range(1..=20u8)) / 20.0;
        if select_top_nodes(&s, eps) == top_nodes_oracle(&s, eps) {
            top_ok += 1;
        }

        let steps = r.gen_range(0..=3);
        let h = random_tensor(&mut r, n, 3);
        let beta = random_tensor(&mut r, steps + 1, 1);
        let mut tape = Tape::new();
        let hv = tape.constant(h.clone());
        let bv = tape.constant(beta.clone());
        let prop = Adjacency::binary(n, edges.clone()).propagation(&mut tape).unwrap();
        let o = gpr_propagate(&mut tape, hv, prop, bv).unwrap();
        // power series with explicit matrix powers
        let s_mat = dense_prop(n, &edges);
        let mut power = Tensor::eye(n);
        let mut want = Tensor::zeros(n, 3);
        for t in 0..=steps {
            if t > 0 {
                power = power.matmul(&s_mat).unwrap();
            }
            want = want.add(&power.matmul(&h).unwrap().scale(beta.get(t, 0))).unwrap();
        }
        gpr_err = gpr_err.max(tape.value(o).max_abs_diff(&want).unwrap());
    }
    let ok = cut_ok == 200 && top_ok == 200 && gpr_err <= 1e-12;
    report(
        2,
        ok,
        "top-gamma cut, top-K selection and propagation match their oracles on 200 graphs",
        &format!("cut {cut_ok}/200, top-K {top_ok}/200, propagation max error {gpr_err:.1e}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- criterion 3

struct Instance {
    h: T64,
    edges: Vec<(usize, usize)>,
    params: CoPoolParams<T64>,
}

fn instance(r: &mut ChaRng, cfg: &CoPoolConfig) -> Instance {
    let n = r.gen_range(2..=8);
    let f = 3;
    Instance {
        h: random_tensor(r, n, f),
        edges: random_edges(r, n, 0.5),
        params: {
            let mut p = CoPoolParams::new(f, f, f, cfg, r);
            p.a = p.a.scale(4.0);
            p
        },
    }
}

struct Run {
    z: T64,
    p_cut: T64,
    indices: Vec<usize>,
    retained: Vec<(usize, usize)>,
    margin: f64,
}

fn run_pool(inst: &Instance, cfg: &CoPoolConfig) -> Run {
    let mut tape = Tape::new();
    let h = tape.constant(inst.h.clone());
    let p = inst.params.map(|t| tape.constant(t.clone()));
    let adj = Adjacency::binary(inst.h.rows(), inst.edges.clone());
    let out = copool_forward(&mut tape, h, &adj, &p, cfg).unwrap();
    Run {
        z: tape.value(out.z).clone(),
        p_cut: tape.value(out.p_cut).clone(),
        indices: out.indices,
        retained: out.retained,
        margin: out.margin,
    }
}

#[test]
fn criterion_3_structural_invariants() {
    let mut r = rng::rng(3);
    let (mut sym, mut count, mut nested, mut perm) = (0, 0, 0, 0);

    for _ in 0..100 {
        let cfg = CoPoolConfig {
            gamma: f64::from(r.gen_range(1..=10u8)) / 10.0,
            ..CoPoolConfig::default()
        };
        let inst = instance(&mut r, &cfg);
        let run = run_pool(&inst, &cfg);
        if run.p_cut.is_symmetric() {
            sym += 1;
        }
        let n = inst.h.rows();
        let off_diag = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| run.p_cut.get(i, j) != 0.0).count();
        let e = inst.edges.len();
        let expected = (((cfg.gamma * e as f64) - 1e-9).ceil() as usize).min(e);
        if off_diag == expected {
            count += 1;
        }
    }

    for _ in 0..100 {
        let base_cfg = CoPoolConfig::default();
        let inst = instance(&mut r, &base_cfg);
        let sets: Vec<BTreeSet<(usize, usize)>> = (1..=10)
            .map(|g| {
                let cfg = CoPoolConfig {
                    gamma: f64::from(g) / 10.0,
                    ..base_cfg
                };
                run_pool(&inst, &cfg).retained.into_iter().collect()
            })
            .collect();
        if sets.windows(2).all(|w| w[0].is_subset(&w[1])) {
            nested += 1;
        }
    }

    let mut tried = 0;
    while perm < 100 && tried < 1000 {
        tried += 1;
        let cfg = CoPoolConfig {
            gamma: 0.7,
            ..CoPoolConfig::default()
        };
        let inst = instance(&mut r, &cfg);
        let base = run_pool(&inst, &cfg);
        if base.margin < 1e-9 {
            continue;
        }
        let n = inst.h.rows();
        let mut pi: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(pi.as_mut_slice(), &mut r);
        let mut h = Tensor::zeros(n, inst.h.cols());
        for v in 0..n {
            for c in 0..inst.h.cols() {
                h.set(pi[v], c, inst.h.get(v, c));
            }
        }
        let edges: Vec<(usize, usize)> = inst
            .edges
            .iter()
            .map(|&(i, j)| (pi[i].min(pi[j]), pi[i].max(pi[j])))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let permuted = run_pool(
            &Instance {
                h,
                edges,
                params: inst.params.clone(),
            },
            &cfg,
        );
        let images: Vec<usize> = base.indices.iter().map(|&v| pi[v]).collect();
        if images == permuted.indices && permuted.z.max_abs_diff(&base.z).unwrap() < 1e-12 {
            perm += 1;
        }
    }

    let ok = sym == 100 && count == 100 && nested == 100 && perm == 100;
    report(
        3,
        ok,
        "symmetry, edge count, monotone containment and permutation consistency on 100 instances each",
        &format!("symmetric {sym}/100, edge count {count}/100, nested {nested}/100, permutation {perm}/100"),
    );
    assert!(ok);
}

// ----------------------------------------------------------- criteria 4 and 5

fn data_root() -> Option<PathBuf> {
    std::env::var_os("COPOOL_DATA_ROOT").map(PathBuf::from)
}

fn cv_on(name: &str, root: &std::path::Path, mode: PoolMode) -> copool::Result<(f64, f64, bool)> {
    let ds = load_dataset(name, Some(root), 1)?;
    let full = std::env::var("COPOOL_FULL_GRID").map(|v| v == "1").unwrap_or(false);
    let grid = if full { Grid::full() } else { Grid::fast() };
    let base = TrainSpec {
        mode,
        ..TrainSpec::default()
    };
    let jobs = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let rep = grid_search_cv(&ds, &grid, &base, 10, 0, jobs)?;
    Ok((rep.mean, rep.std, full))
}

#[test]
#[ignore = "needs the PROTEINS and IMDB-BINARY TU files under COPOOL_DATA_ROOT"]
fn criterion_4_classification_reproduction() {
    let Some(root) = data_root() else {
        println!("[criterion 4] NOT RUN: PROTEINS / IMDB-BINARY files unavailable (set COPOOL_DATA_ROOT)");
        return;
    };
    let (pm, ps, full) = cv_on("PROTEINS", &root, PoolMode::Full).unwrap();
    let (im, is, _) = cv_on("IMDB-BINARY", &root, PoolMode::Full).unwrap();
    let (pt, it) = if full { (0.70, 0.65) } else { (0.68, 0.63) };
    let ok = pm >= pt && im >= it;
    report(
        4,
        ok,
        &format!("10-fold CV accuracy, {} grid", if full { "full" } else { "reduced" }),
        &format!("PROTEINS {pm:.4} +- {ps:.4} (bar {pt}), IMDB-BINARY {im:.4} +- {is:.4} (bar {it})"),
    );
    assert!(ok);
}

#[test]
#[ignore = "needs the IMDB-BINARY TU files under COPOOL_DATA_ROOT"]
fn criterion_5_ablation_ordering() {
    let Some(root) = data_root() else {
        println!("[criterion 5] NOT RUN: IMDB-BINARY files unavailable (set COPOOL_DATA_ROOT)");
        return;
    };
    let (full, _, _) = cv_on("IMDB-BINARY", &root, PoolMode::Full).unwrap();
    let (no_gpr, _, _) = cv_on("IMDB-BINARY", &root, PoolMode::NoGpr).unwrap();
    let ok = full >= no_gpr - 0.01;
    report(
        5,
        ok,
        "full pooling >= no-propagation ablation - 1 point on IMDB-BINARY",
        &format!("full {full:.4}, no-gpr {no_gpr:.4}"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_robustness_pipeline() {
    let ds = synthetic::classification(60, 6).unwrap();
    let base = TrainSpec {
        hidden: 16,
        max_epochs: 20,
        patience: 10,
        lr: 0.005,
        ..TrainSpec::default()
    };
    let settings = CvSettings {
        grid: Grid::single(&base),
        base,
        k: 10,
        seed: 6,
        jobs: 1,
    };
    let drop = run_perturbation(&ds, PerturbMode::Drop, &perturbation_ratios(), &settings).unwrap();
    let edgeless = drop.runs.last().unwrap();
    let all_finite = |runs: &[copool::harness::CVReport]| {
        runs.iter().all(|r| {
            r.mean.is_finite()
                && r.folds.iter().all(|f| {
                    f.test_metric.is_finite()
                        && f.history
                            .iter()
                            .all(|h| h.train_loss.is_finite() && h.val_loss.is_finite() && h.val_metric.is_finite())
                })
        })
    };
    let drop_ok = drop.rows.len() == 6 && all_finite(&drop.runs);
    let inc = run_incomplete(&ds, &incomplete_ratios(), &settings).unwrap();
    let inc_ok = inc.rows.len() == 6 && all_finite(&inc.runs);
    let ok = drop_ok && inc_ok;
    report(
        6,
        ok,
        "perturbation down to edgeless graphs and incompleteness up to 50% run with finite metrics",
        &format!(
            "drop-1.0 accuracy {:.4}, incomplete-0.5 accuracy {:.4}",
            edgeless.mean,
            inc.rows.last().unwrap().mean
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_regression_beats_mean_predictor() {
    let ds: GraphDataset = synthetic::regression(1000, 0).unwrap();
    let spec = regression_spec(&TrainSpec::default());
    let rep = run_regression(&ds, &spec, 4, 7, 1).unwrap();
    let gain = 1.0 - rep.mean_mae / rep.mean_baseline_mae;
    let ok = gain >= 0.20;
    report(
        7,
        ok,
        "regression MAE at least 20% below the mean predictor, 4 seeds, 1000 synthetic graphs",
        &format!(
            "model {:.4} +- {:.4}, mean predictor {:.4}, relative gain {:.1}%, {:.0} s",
            rep.mean_mae,
            rep.std_mae,
            rep.mean_baseline_mae,
            100.0 * gain,
            rep.wall_clock_secs
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- criterion 8

fn run_cli(args: &[&str], out: &std::path::Path) -> i32 {
    let mut argv = vec!["copool"];
    argv.extend_from_slice(args);
    let out = out.to_str().unwrap();
    argv.extend_from_slice(&["--out", out]);
    copool::cli::run(argv)
}

fn csv_files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![("table.csv".to_string(), std::fs::read(dir.join("table.csv")).unwrap())];
    let mut hist: Vec<_> = std::fs::read_dir(dir.join("history")).unwrap().map(|e| e.unwrap().path()).collect();
    hist.sort();
    for p in hist {
        out.push((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()));
    }
    out
}

#[test]
fn criterion_8_determinism() {
    let common = [
        "--seed", "8", "--hidden", "8", "--max-epochs", "3", "--lr", "0.01", "--weight-decay", "0.0001",
        "--epsilon", "0.5", "--dropout", "0.5", "--folds", "3",
    ];
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("train", vec!["--dataset", "SYNTH-CLS:30"]),
        ("cv", vec!["--dataset", "SYNTH-CLS:30"]),
        ("perturb", vec!["--dataset", "SYNTH-CLS:30", "--ratios", "0,0.5,1"]),
        ("perturb", vec!["--dataset", "SYNTH-CLS:30", "--mode", "add-from-empty", "--ratios", "0,1"]),
        ("incomplete", vec!["--dataset", "SYNTH-CLS:30", "--ratios", "0,0.5"]),
        ("gamma-sweep", vec!["--dataset", "SYNTH-CLS:30", "--ratios", "0.5,1"]),
        ("regress", vec!["--dataset", "SYNTH-REG:30", "--runs", "2", "--jobs", "2"]),
    ];
    let tmp = tempfile::tempdir().unwrap();
    let mut identical = 0;
    let mut failures = Vec::new();
    for (i, (cmd, extra)) in commands.iter().enumerate() {
        let mut args = vec![*cmd];
        args.extend_from_slice(extra);
        args.extend_from_slice(&common);
        let a = tmp.path().join(format!("{i}a"));
        let b = tmp.path().join(format!("{i}b"));
        let codes = (run_cli(&args, &a), run_cli(&args, &b));
        if codes == (0, 0) && csv_files(&a) == csv_files(&b) {
            identical += 1;
        } else {
            failures.push(format!("{cmd} (exit {codes:?})"));
        }
    }
    let ok = failures.is_empty();
    report(
        8,
        ok,
        "re-running each subcommand with the same seed gives byte-identical CSVs",
        &format!("{identical}/{} runs identical{}", commands.len(), if ok { String::new() } else { format!("; differing: {}", failures.join(", ")) }),
    );
    assert!(ok);
}
