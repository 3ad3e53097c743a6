//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Set `HMGRL_D1_DIR` to a directory holding the real `drugs.tsv`
//! and `ddis.tsv` to include the extended full-data run.

use std::path::Path;
use std::time::{Duration, Instant};

use hmgrl::eval::{compute_metrics, make_splits, RankAveraging, Task};
use hmgrl::graphcore::{DdiRecord, DdiSet};
use hmgrl::mvdsc::{build_dsc_adjacency, loss_graph_cut, loss_orthogonality};
use hmgrl::numkit::{Tape, Tensor};
use hmgrl_cli::config::{Overrides, RunConfig};
use hmgrl_cli::{gradcheck, run, synth};
use hmgrl_oracle::{
    all_partitions, metric_oracle, ncut_objective, ncut_trace_form, spectral_cluster_oracle,
    FdConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn nested(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn gc(a: &Tensor, f: &Tensor) -> f64 {
    let tape = Tape::new();
    let l = loss_graph_cut(
        &tape,
        &[tape.constant(f.clone())],
        &[tape.constant(a.clone())],
    )
    .expect("shapes agree");
    tape.scalar(l.value)
}

fn or(f: &Tensor) -> f64 {
    let tape = Tape::new();
    let l = loss_orthogonality(&tape, &[tape.constant(f.clone())]).expect("one head");
    tape.scalar(l.value)
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn gradient_integrity() -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let cfg = FdConfig::default();
    let rows = gradcheck::run_micro(&cfg, 0)?;
    let elapsed = start.elapsed();
    let worst = rows
        .iter()
        .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
        .expect("model has parameters");
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name.as_str())
        .collect();
    let coords: usize = rows.iter().map(|r| r.checked).sum();
    Ok(outcome(
        failed.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "{} parameters, {coords} coordinates, worst rel err {:.2e} at abs err {:.2e} ({}), tol {:.0e} abs floor {:.0e}, failed {failed:?}, {:.1}s (limit 60s)",
            rows.len(),
            worst.max_rel_err,
            worst.max_abs_err,
            worst.name,
            cfg.rel_tol,
            cfg.abs_tol,
            secs(elapsed)
        ),
    ))
}

/// Random nonnegative symmetric weights with every node connected.
fn random_graph(k: usize, r: &mut ChaCha8Rng, sparsity: f64) -> Tensor {
    loop {
        let mut w = Tensor::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                if !r.random_bool(sparsity) {
                    let v = r.random_range(0.05..1.0);
                    w.set(i, j, v);
                    w.set(j, i, v);
                }
            }
        }
        if w.row_sums().iter().all(|&s| s > 0.0) {
            return w;
        }
    }
}

/// `D^{-1/2} W D^{-1/2}`; its spectrum lies in `[−1, 1]`.
fn sym_normalized(w: &Tensor) -> Tensor {
    let d: Vec<f64> = w.row_sums().iter().map(|s| 1.0 / s.sqrt()).collect();
    let mut e = w.clone();
    for i in 0..w.rows() {
        for j in 0..w.cols() {
            e.set(i, j, w.get(i, j) * d[i] * d[j]);
        }
    }
    e
}

/// Convex mixture of symmetrized permutations.
fn doubly_stochastic(k: usize, r: &mut ChaCha8Rng) -> Tensor {
    let terms = r.random_range(1..5);
    let weights: Vec<f64> = (0..terms).map(|_| r.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut a = Tensor::zeros(k, k);
    for w in weights {
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(r);
        for (i, &j) in perm.iter().enumerate() {
            let x = w / total / 2.0;
            a.set(i, j, a.get(i, j) + x);
            a.set(j, i, a.get(j, i) + x);
        }
    }
    a
}

fn loss_bounds() -> anyhow::Result<(Outcome, String)> {
    let mut r = rng(2);
    let (mut lo, mut hi, mut or_min) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    let mut instances = 0;
    while instances < 400 {
        let k = r.random_range(2..12);
        let c = r.random_range(1..5);
        let a = if instances % 2 == 0 {
            sym_normalized(&random_graph(k, &mut r, 0.3))
        } else {
            doubly_stochastic(k, &mut r)
        };
        let f = Tensor::uniform(k, c, 1.0, &mut r).map(|x| x.max(0.0));
        if f.data().iter().all(|&x| x == 0.0) {
            continue;
        }
        let v = gc(&a, &f);
        lo = lo.min(v);
        hi = hi.max(v);
        or_min = or_min.min(or(&f));
        instances += 1;
    }
    let in_range = lo >= -1.0 - 1e-9 && hi <= 1e-9 && or_min >= 0.0;

    // Two disconnected uniform blocks with indicator assignments.
    let mut block = Tensor::zeros(6, 6);
    for i in 0..6 {
        for j in 0..6 {
            if i / 3 == j / 3 {
                block.set(i, j, 1.0 / 3.0);
            }
        }
    }
    let ind = Tensor::from_rows(&[
        [1.0, 0.0],
        [1.0, 0.0],
        [1.0, 0.0],
        [0.0, 1.0],
        [0.0, 1.0],
        [0.0, 1.0],
    ]);
    let at_min = gc(&block, &ind);
    // Every edge crosses between the two indicator clusters.
    let mut bipartite = Tensor::zeros(4, 4);
    for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
        bipartite.set(i, j, 0.5);
        bipartite.set(j, i, 0.5);
    }
    let halves = Tensor::from_rows(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]);
    let at_max = gc(&bipartite, &halves);
    // Orthogonal columns of equal norm.
    let ortho = Tensor::from_rows(&[
        [3.0, 0.0, 0.0],
        [0.0, 0.0, 3.0],
        [0.0, 3.0, 0.0],
        [0.0, 0.0, 0.0],
    ]);
    let or_zero = or(&ortho);
    let passed =
        in_range && (at_min + 1.0).abs() <= 1e-9 && at_max.abs() <= 1e-9 && or_zero.abs() <= 1e-9;
    let detail = format!(
        "{instances} symmetric normalized / doubly-stochastic instances: L_gc in [{lo:.6}, {hi:.3e}], min L_or {or_min:.3e}; block+indicator {at_min:.12}, orthogonal {at_max:.3e}, orthonormal-scaled L_or {or_zero:.3e}"
    );

    // The pipeline's row-softmax adjacency is not symmetric, so the lower
    // bound does not carry over; report how far below it the quotient goes.
    let mut floor = f64::INFINITY;
    let mut below = 0;
    for t in 0..200u64 {
        let mut g = rng(1000 + t);
        let k = g.random_range(2..10);
        let tape = Tape::new();
        let src = tape.constant(Tensor::uniform(k, 4, 2.0, &mut g));
        let w = tape.constant(Tensor::uniform(4, 4, 1.5, &mut g));
        let a = build_dsc_adjacency(&tape, src, &[w])?[0];
        let a = tape.value(a).clone();
        let f = Tensor::uniform(k, 2, 1.0, &mut g).map(f64::abs);
        let v = gc(&a, &f);
        floor = floor.min(v);
        below += (v < -1.0 - 1e-9) as usize;
    }
    let note = format!(
        "row-softmax adjacencies from the pipeline: {below}/200 instances below -1, minimum L_gc {floor:.6}; L_gc <= 0 holds, the -1 floor needs a symmetric adjacency with spectral radius 1"
    );
    Ok((outcome(passed, detail), note))
}

fn spectral_consistency() -> anyhow::Result<Outcome> {
    let mut r = rng(3);
    let (mut checked, mut worst, mut worst_gc) = (0usize, 0.0f64, 0.0f64);
    for k in 2..=6 {
        for draw in 0..4 {
            let w = random_graph(k, &mut r, if draw % 2 == 0 { 0.0 } else { 0.4 });
            let a = nested(&w);
            let e = sym_normalized(&w);
            let deg = w.row_sums();
            for c in 1..=3.min(k) {
                for p in all_partitions(k, c) {
                    let ncut = ncut_objective(&a, &p)?;
                    let (tr_l, tr_rel, gram) = ncut_trace_form(&a, &p)?;
                    let mut err = (2.0 * ncut - tr_l).abs().max((tr_l - tr_rel).abs());
                    for (i, row) in gram.iter().enumerate() {
                        for (j, &g) in row.iter().enumerate() {
                            err = err.max((g - if i == j { 1.0 } else { 0.0 }).abs());
                        }
                    }
                    worst = worst.max(err);
                    // Same indicator through the training loss: −tr(FᵀEF)/C.
                    let mut vol = vec![0.0; c];
                    for u in 0..k {
                        vol[p[u]] += deg[u];
                    }
                    let mut f = Tensor::zeros(k, c);
                    for u in 0..k {
                        f.set(u, p[u], (deg[u] / vol[p[u]]).sqrt());
                    }
                    worst_gc = worst_gc.max((gc(&e, &f) + (c as f64 - tr_l) / c as f64).abs());
                    checked += 1;
                }
            }
        }
    }
    // Three disconnected blocks of sizes 2, 3 and 4.
    let sizes = [2usize, 3, 4];
    let n: usize = sizes.iter().sum();
    let block_of: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            if block_of[i] == block_of[j] {
                let v = r.random_range(0.2..1.0);
                a[i][j] = v;
                a[j][i] = v;
            }
        }
    }
    let sc = spectral_cluster_oracle(&a, 3)?;
    let eig_err = sc
        .eigenvalues
        .iter()
        .map(|v| (v - 1.0).abs())
        .fold(0.0, f64::max);
    let recovered = (0..n).all(|i| {
        (0..n).all(|j| (sc.partition[i] == sc.partition[j]) == (block_of[i] == block_of[j]))
    });
    Ok(outcome(
        worst <= 1e-9 && worst_gc <= 1e-9 && eig_err <= 1e-9 && recovered,
        format!(
            "{checked} (graph, partition) cases with K<=6, C<=3: max |ncut - trace form| {worst:.2e}, training-loss cross-check {worst_gc:.2e}; 3-block eigenvalues {:?} (max dev {eig_err:.2e}), blocks recovered {recovered}",
            sc.eigenvalues.iter().map(|v| format!("{v:.12}")).collect::<Vec<_>>()
        ),
    ))
}

fn metric_correctness() -> anyhow::Result<Outcome> {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let k = r.random_range(1..=500);
        let classes = r.random_range(2..=10);
        let quantize = case % 3 == 0;
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let mut row: Vec<f64> = (0..classes).map(|_| r.random::<f64>()).collect();
                if quantize {
                    row.iter_mut().for_each(|v| *v = (*v * 4.0).round() / 4.0);
                }
                let s = row.iter().sum::<f64>().max(1e-9);
                row.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let labels: Vec<usize> = (0..k).map(|_| r.random_range(0..classes)).collect();
        let report = compute_metrics(&Tensor::from_rows(&rows), &labels, RankAveraging::Micro)?;
        let (aupr, auc) = metric_oracle(&rows, &labels);
        let (aupr, auc) = (
            aupr.expect("positives exist"),
            auc.expect("both classes exist"),
        );
        worst = worst
            .max((report.aupr - aupr).abs())
            .max((report.auc - auc).abs());
    }
    let labels = [0usize, 3, 1, 2, 2, 4, 0];
    let mut perfect = Tensor::zeros(labels.len(), 5);
    for (i, &y) in labels.iter().enumerate() {
        perfect.set(i, y, 1.0);
    }
    let m = compute_metrics(&perfect, &labels, RankAveraging::Micro)?;
    let six = [m.aupr, m.auc, m.acc, m.f1, m.precision, m.recall];
    Ok(outcome(
        worst <= 1e-9 && six == [1.0; 6],
        format!("50 random cases: max deviation from threshold enumeration {worst:.2e}; perfect predictions {six:?}"),
    ))
}

fn run_config(data: &Path, extra: Overrides) -> anyhow::Result<RunConfig> {
    let o = Overrides {
        preset: Some("small".into()),
        drugs: Some(data.join("drugs.tsv")),
        ddis: Some(data.join("ddis.tsv")),
        task: Some(1),
        folds: Some(5),
        ..extra
    };
    RunConfig::resolve(None, &o)
}

fn learnability(root: &Path) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let data = root.join("learn-data");
    let ds = synth::generate(&synth::SynthConfig::default())?;
    synth::write(&ds, &data)?;
    let cfg = run_config(&data, Overrides::default())?;
    let dir = root.join("learn-run");
    let outcomes = run::train_run(&cfg, &dir)?;
    let eval = run::eval_run(&dir, false)?;
    let elapsed = start.elapsed();
    let train_min = outcomes
        .iter()
        .map(|o| o.train_accuracy)
        .fold(f64::INFINITY, f64::min);
    let held: Vec<f64> = eval.reports.iter().map(|(_, r)| r.acc).collect();
    let held_mean = held.iter().sum::<f64>() / held.len().max(1) as f64;
    Ok(outcome(
        cfg.model.epochs <= 300
            && train_min >= 0.99
            && held.len() == 5
            && held_mean >= 0.70
            && elapsed < Duration::from_secs(600),
        format!(
            "{} drugs, {} DDIs, {} events, {} epochs: min fold training accuracy {train_min:.4} (>= 0.99), held-out accuracy mean {held_mean:.4} over {} folds (>= 0.70), {:.0}s (limit 600s)",
            ds.table.len(),
            ds.ddis.len(),
            ds.ddis.num_events(),
            cfg.model.epochs,
            held.len(),
            secs(elapsed)
        ),
    ))
}

fn split_laws() -> anyhow::Result<Outcome> {
    use std::collections::HashSet;
    let mut problems = Vec::new();

    // Full-scale fold arithmetic.
    let n = 300;
    let mut r = rng(6);
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .collect();
    pairs.shuffle(&mut r);
    let records: Vec<DdiRecord> = pairs
        .into_iter()
        .take(37_264)
        .enumerate()
        .map(|(i, (a, b))| DdiRecord {
            a,
            b,
            event: i % 65,
        })
        .collect();
    let big = DdiSet::new(records, n)?;
    let plan = make_splits(&big, n, Task::KnownDrugs, 5, 0)?;
    let sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
    let mut seen = HashSet::new();
    for f in &plan.folds {
        for d in &f.test {
            if !seen.insert((d.a, d.b)) {
                problems.push(format!("fold {} repeats a test DDI", f.index));
            }
        }
        if f.train.len() + f.test.len() != big.len() {
            problems.push(format!("fold {} does not cover every DDI", f.index));
        }
    }
    if seen.len() != big.len() || sizes.iter().any(|&s| s != 7452 && s != 7453) {
        problems.push(format!("task 1 fold sizes {sizes:?}"));
    }

    let ds = synth::generate(&synth::SynthConfig::default())?;
    let t2 = make_splits(&ds.ddis, ds.table.len(), Task::OneNewDrug, 5, 0)?;
    let t3 = make_splits(&ds.ddis, ds.table.len(), Task::TwoNewDrugs, 5, 0)?;
    for (a, b) in t2.folds.iter().zip(&t3.folds) {
        let new: HashSet<usize> = a.new_drugs.iter().copied().collect();
        let count = |d: &DdiRecord| new.contains(&d.a) as usize + new.contains(&d.b) as usize;
        if !a.test.iter().all(|d| count(d) == 1) {
            problems.push(format!(
                "task 2 fold {} has a test DDI without exactly one new drug",
                a.index
            ));
        }
        let train: HashSet<usize> = b.train.iter().flat_map(|d| [d.a, d.b]).collect();
        let test: HashSet<usize> = b.test.iter().flat_map(|d| [d.a, d.b]).collect();
        if !train.is_disjoint(&test) {
            problems.push(format!(
                "task 3 fold {} shares drugs between train and test",
                b.index
            ));
        }
        if a.train != b.train {
            problems.push(format!(
                "fold {} train sets differ between tasks 2 and 3",
                a.index
            ));
        }
    }
    let t2_sizes: Vec<usize> = t2.folds.iter().map(|f| f.test.len()).collect();
    let t3_sizes: Vec<usize> = t3.folds.iter().map(|f| f.test.len()).collect();
    Ok(outcome(
        problems.is_empty(),
        format!(
            "37264 DDIs -> task 1 test folds {sizes:?}; synthetic task 2 test sizes {t2_sizes:?}, task 3 {t3_sizes:?}; violations {problems:?}"
        ),
    ))
}

fn determinism(root: &Path) -> anyhow::Result<Outcome> {
    let data = root.join("det-data");
    synth::write(
        &synth::generate(&synth::SynthConfig {
            seed: 5,
            ..synth::SynthConfig::default()
        })?,
        &data,
    )?;
    let cfg = run_config(
        &data,
        Overrides {
            epochs: Some(8),
            seed: Some(11),
            ..Overrides::default()
        },
    )?;
    let dirs = [root.join("det-a"), root.join("det-b")];
    let mut runs = Vec::new();
    for d in &dirs {
        let train = run::train_run(&cfg, d)?;
        let eval = run::eval_run(d, false)?;
        runs.push((train, eval));
    }
    let (a, b) = (&runs[0], &runs[1]);
    let record_count: usize = a.0.iter().map(|o| o.records.len()).sum();
    let records_equal = a.0.len() == b.0.len()
        && a.0.iter().zip(&b.0).all(|(x, y)| {
            x.records.len() == y.records.len()
                && x.records
                    .iter()
                    .zip(&y.records)
                    .all(|(p, q)| p.matches(q, 1e-12))
        });
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12;
    let metrics_equal = a.1.reports.len() == b.1.reports.len()
        && a.1
            .reports
            .iter()
            .zip(&b.1.reports)
            .all(|((fa, x), (fb, y))| {
                fa == fb
                    && [
                        (x.aupr, y.aupr),
                        (x.auc, y.auc),
                        (x.acc, y.acc),
                        (x.f1, y.f1),
                        (x.precision, y.precision),
                        (x.recall, y.recall),
                    ]
                    .iter()
                    .all(|&(p, q)| close(p, q))
            });
    let mut ckpt_equal = true;
    for f in cfg.selected_folds() {
        let x = std::fs::read(run::fold_checkpoint(&dirs[0], f))?;
        let y = std::fs::read(run::fold_checkpoint(&dirs[1], f))?;
        ckpt_equal &= x == y;
    }
    let split_equal =
        std::fs::read(dirs[0].join("split.json"))? == std::fs::read(dirs[1].join("split.json"))?;
    Ok(outcome(
        records_equal && metrics_equal && ckpt_equal && split_equal,
        format!(
            "two 5-fold runs, {record_count} train records each: records equal {records_equal}, metric reports equal {metrics_equal}, checkpoints bit-equal {ckpt_equal}, splits equal {split_equal}"
        ),
    ))
}

fn extended(root: &Path) -> Option<anyhow::Result<Outcome>> {
    let dir = std::env::var_os("HMGRL_D1_DIR")?;
    let dir = Path::new(&dir).to_path_buf();
    Some((|| {
        let o = Overrides {
            preset: Some("d1-task1".into()),
            drugs: Some(dir.join("drugs.tsv")),
            ddis: Some(dir.join("ddis.tsv")),
            task: Some(1),
            folds: Some(5),
            ..Overrides::default()
        };
        let cfg = RunConfig::resolve(None, &o)?;
        let run_dir = root.join("d1-run");
        run::train_run(&cfg, &run_dir)?;
        let eval = run::eval_run(&run_dir, false)?;
        let s = eval.summary.expect("folds were evaluated");
        Ok(outcome(
            s.mean[0] >= 0.96,
            format!("5-fold AUPR {:.4} (>= 0.9600)", s.mean[0]),
        ))
    })())
}

fn report(id: usize, name: &str, result: anyhow::Result<Outcome>, failures: &mut usize) {
    match result {
        Ok(o) => {
            *failures += !o.passed as usize;
            println!(
                "{} [{id}] {name}: {}",
                if o.passed { "PASS" } else { "FAIL" },
                o.detail
            );
        }
        Err(e) => {
            *failures += 1;
            println!("FAIL [{id}] {name}: error: {e:#}");
        }
    }
}

fn main() {
    let root = tempfile::tempdir().expect("temporary directory");
    let mut failures = 0;
    report(1, "gradient integrity", gradient_integrity(), &mut failures);
    match loss_bounds() {
        Ok((o, note)) => {
            report(2, "loss bounds", Ok(o), &mut failures);
            println!("NOTE [2] {note}");
        }
        Err(e) => report(2, "loss bounds", Err(e), &mut failures),
    }
    report(
        3,
        "classical spectral clustering consistency",
        spectral_consistency(),
        &mut failures,
    );
    report(4, "metric correctness", metric_correctness(), &mut failures);
    report(5, "learnability", learnability(root.path()), &mut failures);
    report(6, "split-protocol laws", split_laws(), &mut failures);
    report(7, "determinism", determinism(root.path()), &mut failures);
    match extended(root.path()) {
        Some(r) => report(8, "full Dataset 1 run", r, &mut failures),
        None => println!("SKIP [8] full Dataset 1 run: set HMGRL_D1_DIR to a directory with drugs.tsv and ddis.tsv"),
    }
    if failures > 0 {
        println!("{failures} criterion/criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
