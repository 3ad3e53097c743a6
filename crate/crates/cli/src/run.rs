//! Run orchestration: splits, per-fold training, evaluation and prediction.
//!
//! A run directory holds
//!
//! ```text
//! config.toml             effective configuration
//! split.json              fold assignment
//! log/fold-{i}.jsonl      config echo, then one training record per line
//! checkpoint/fold-{i}.ckpt
//! metrics/fold-{i}.json   config echo and fold report
//! metrics/summary.json    config echo, per-fold reports, mean and std
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use hmgrl::eval::{
    compute_metrics, make_splits, MetricReport, MetricSummary, RankAveraging, SplitPlan,
};
use hmgrl::featurize::{read_drug_table, DrugTable, PairInputs};
use hmgrl::graphcore::{read_ddi_triples, DdiRecord, DdiSet};
use hmgrl::model::{CheckpointMeta, Context, HmgrlModel, Predictions, TrainRecord};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

pub fn load_dataset(drugs: &Path, ddis: &Path) -> Result<(DrugTable, DdiSet)> {
    let table = read_drug_table(drugs)?;
    let ddis = read_ddi_triples(ddis, &table)?;
    Ok((table, ddis))
}

/// `run/<timestamp>` under the configured output directory.
pub fn timestamped_dir(base: &Path) -> PathBuf {
    base.join(chrono::Local::now().format("%Y%m%d-%H%M%S").to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn split(cfg: &RunConfig, ddis: &DdiSet, num_drugs: usize) -> Result<SplitPlan> {
    Ok(make_splits(
        ddis,
        num_drugs,
        cfg.task,
        cfg.folds,
        cfg.split_seed,
    )?)
}

pub fn fold_log(run_dir: &Path, fold: usize) -> PathBuf {
    run_dir.join("log").join(format!("fold-{fold}.jsonl"))
}

pub fn fold_checkpoint(run_dir: &Path, fold: usize) -> PathBuf {
    run_dir.join("checkpoint").join(format!("fold-{fold}.ckpt"))
}

pub fn fold_metrics(run_dir: &Path, fold: usize) -> PathBuf {
    run_dir.join("metrics").join(format!("fold-{fold}.json"))
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    pub records: Vec<TrainRecord>,
    /// Accuracy on the fold's own training interactions after the last epoch.
    pub train_accuracy: f64,
}

/// Trains every selected fold and writes config, split, logs and checkpoints
/// under `run_dir`.
pub fn train_run(cfg: &RunConfig, run_dir: &Path) -> Result<Vec<FoldOutcome>> {
    let (table, ddis) = load_dataset(&cfg.drugs, &cfg.ddis)?;
    fs::create_dir_all(run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
    fs::write(run_dir.join("config.toml"), cfg.to_toml()?)?;
    let plan = split(cfg, &ddis, table.len())?;
    write_json(&run_dir.join("split.json"), &plan)?;
    let inputs = PairInputs::new(&table)?;
    let echo = serde_json::to_string(&json!({ "config": cfg }))?;
    let mut outcomes = Vec::new();
    for fold in cfg.selected_folds() {
        let f = &plan.folds[fold];
        log::info!(
            "fold {fold}: {} train, {} test interactions",
            f.train.len(),
            f.test.len()
        );
        let ctx = Context::from_inputs(inputs.clone(), &f.train, ddis.num_events(), &cfg.model)?;
        let mut model = HmgrlModel::new(
            cfg.model.clone(),
            table.len(),
            ddis.num_events(),
            table.sizes(),
        )?;
        let log_path = fold_log(run_dir, fold);
        fs::create_dir_all(log_path.parent().expect("nested path"))?;
        let mut log = BufWriter::new(
            File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
        );
        writeln!(log, "{echo}")?;
        let mut io_error = None;
        let records = model.fit(&ctx, &f.train, &mut |r| {
            if io_error.is_none() {
                let line = serde_json::to_string(r).map_err(anyhow::Error::from);
                if let Err(e) = line.and_then(|l| writeln!(log, "{l}").map_err(anyhow::Error::from))
                {
                    io_error = Some(e);
                }
            }
            if r.batch == 0 {
                log::debug!("fold {fold} epoch {}: total {:.6}", r.epoch, r.total);
            }
        })?;
        if let Some(e) = io_error {
            return Err(e.context(format!("writing {}", log_path.display())));
        }
        log.flush()?;
        let ckpt = fold_checkpoint(run_dir, fold);
        fs::create_dir_all(ckpt.parent().expect("nested path"))?;
        model.save(&ctx, &ckpt)?;
        let train_accuracy = accuracy(&model.predict(&ctx, &pairs_of(&f.train))?, &f.train);
        log::info!("fold {fold}: training accuracy {train_accuracy:.4}");
        outcomes.push(FoldOutcome {
            fold,
            records,
            train_accuracy,
        });
    }
    Ok(outcomes)
}

fn pairs_of(records: &[DdiRecord]) -> Vec<(usize, usize)> {
    records.iter().map(|r| (r.a, r.b)).collect()
}

pub fn accuracy(pred: &Predictions, records: &[DdiRecord]) -> f64 {
    let hits = pred
        .events
        .iter()
        .zip(records)
        .filter(|(p, r)| **p == r.event)
        .count();
    hits as f64 / records.len().max(1) as f64
}

/// Rebuilds a checkpointed model with the context it was trained against.
pub fn restore(table: &DrugTable, path: &Path) -> Result<(HmgrlModel, Context)> {
    let (model, meta): (HmgrlModel, CheckpointMeta) = HmgrlModel::load(path)?;
    if meta.num_drugs != table.len() || meta.sizes != table.sizes() {
        anyhow::bail!(hmgrl::Error::Checkpoint(format!(
            "{} was trained on {} drugs with descriptor sizes {:?}; the drug table has {} drugs with {:?}",
            path.display(),
            meta.num_drugs,
            meta.sizes,
            table.len(),
            table.sizes()
        )));
    }
    let ctx = Context::new(table, &meta.edges, meta.num_events, &meta.config)?;
    Ok((model, ctx))
}

#[derive(Clone, Debug)]
pub struct EvalOutcome {
    pub reports: Vec<(usize, MetricReport)>,
    pub summary: Option<MetricSummary>,
}

/// Scores every trained fold of `run_dir` on its test interactions. Folds
/// with no test interactions are reported and skipped.
pub fn eval_run(run_dir: &Path, macro_override: bool) -> Result<EvalOutcome> {
    let text = fs::read_to_string(run_dir.join("config.toml"))
        .with_context(|| format!("reading {}", run_dir.join("config.toml").display()))?;
    let mut cfg = RunConfig::from_toml(&text)?;
    cfg.macro_auc |= macro_override;
    let plan: SplitPlan = read_json(&run_dir.join("split.json"))?;
    let table = read_drug_table(&cfg.drugs)?;
    let averaging = if cfg.macro_auc {
        RankAveraging::Macro
    } else {
        RankAveraging::Micro
    };
    let mut reports = Vec::new();
    for fold in cfg.selected_folds() {
        let f = &plan.folds[fold];
        if f.test.is_empty() {
            log::warn!("fold {fold} has no test interactions; skipped");
            continue;
        }
        let (model, ctx) = restore(&table, &fold_checkpoint(run_dir, fold))?;
        let pred = model.predict(&ctx, &pairs_of(&f.test))?;
        let labels: Vec<usize> = f.test.iter().map(|r| r.event).collect();
        let report = compute_metrics(&pred.probabilities, &labels, averaging)?;
        log::info!(
            "fold {fold}: aupr {:.4} auc {:.4} acc {:.4}",
            report.aupr,
            report.auc,
            report.acc
        );
        write_json(
            &fold_metrics(run_dir, fold),
            &json!({ "config": cfg, "fold": fold, "report": report }),
        )?;
        reports.push((fold, report));
    }
    let plain: Vec<MetricReport> = reports.iter().map(|(_, r)| r.clone()).collect();
    let summary = MetricSummary::new(&plain);
    let by_field = summary.as_ref().map(|s| {
        MetricSummary::FIELDS
            .iter()
            .enumerate()
            .map(|(i, name)| {
                (
                    name.to_string(),
                    json!({ "mean": s.mean[i], "std": s.std[i] }),
                )
            })
            .collect::<serde_json::Map<_, _>>()
    });
    write_json(
        &run_dir.join("metrics").join("summary.json"),
        &json!({ "config": cfg, "folds": reports.iter().map(|(f, _)| f).collect::<Vec<_>>(), "reports": plain, "summary": by_field }),
    )?;
    Ok(EvalOutcome { reports, summary })
}

/// Reads `id_a<TAB>id_b` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(path: &Path, text: &str, table: &DrugTable) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = |msg: String| hmgrl::Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [a, b] = fields[..] else {
            return Err(parse(format!(
                "expected 2 tab-separated fields, found {}",
                fields.len()
            ))
            .into());
        };
        let ia = table.index_of(a).map_err(|e| parse(e.to_string()))?;
        let ib = table.index_of(b).map_err(|e| parse(e.to_string()))?;
        if ia == ib {
            return Err(parse(format!("drug `{a}` paired with itself")).into());
        }
        out.push((ia, ib));
    }
    Ok(out)
}

pub fn format_predictions(pred: &Predictions, table: &DrugTable) -> String {
    let mut out = String::from("drug_a\tdrug_b\tevent");
    for e in 0..pred.probabilities.cols() {
        out.push_str(&format!("\tp{e}"));
    }
    out.push('\n');
    for (i, &(a, b)) in pred.pairs.iter().enumerate() {
        out.push_str(&format!(
            "{}\t{}\t{}",
            table.drug(a).id,
            table.drug(b).id,
            pred.events[i]
        ));
        for p in pred.probabilities.row(i) {
            out.push_str(&format!("\t{p}"));
        }
        out.push('\n');
    }
    out
}

pub fn predict_file(checkpoint: &Path, drugs: &Path, pairs: &Path) -> Result<String> {
    let table = read_drug_table(drugs)?;
    let (model, ctx) = restore(&table, checkpoint)?;
    let text = fs::read_to_string(pairs).with_context(|| format!("reading {}", pairs.display()))?;
    let pairs = parse_pairs(pairs, &text, &table)?;
    Ok(format_predictions(&model.predict(&ctx, &pairs)?, &table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Overrides;
    use crate::synth::{generate, write, SynthConfig};

    fn tiny_run(dir: &Path) -> RunConfig {
        let data = dir.join("data");
        write(
            &generate(&SynthConfig {
                drugs: 16,
                events: 3,
                density: 0.5,
                ..SynthConfig::default()
            })
            .unwrap(),
            &data,
        )
        .unwrap();
        let o = Overrides {
            preset: Some("micro".into()),
            drugs: Some(data.join("drugs.tsv")),
            ddis: Some(data.join("ddis.tsv")),
            epochs: Some(2),
            folds: Some(3),
            only_folds: Some(vec![0, 2]),
            ..Overrides::default()
        };
        RunConfig::resolve(None, &o).unwrap()
    }

    #[test]
    fn train_then_eval_writes_the_run_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_run(dir.path());
        let run = dir.path().join("run");
        let outcomes = train_run(&cfg, &run).unwrap();
        assert_eq!(
            outcomes.iter().map(|o| o.fold).collect::<Vec<_>>(),
            vec![0, 2]
        );
        for f in [0, 2] {
            assert!(fold_checkpoint(&run, f).exists());
            let log = fs::read_to_string(fold_log(&run, f)).unwrap();
            let first: serde_json::Value =
                serde_json::from_str(log.lines().next().unwrap()).unwrap();
            assert_eq!(first["config"]["preset"], "micro");
            let records: Vec<TrainRecord> = log
                .lines()
                .skip(1)
                .map(|l| serde_json::from_str(l).unwrap())
                .collect();
            assert_eq!(
                records.len(),
                outcomes.iter().find(|o| o.fold == f).unwrap().records.len()
            );
        }
        assert!(!fold_checkpoint(&run, 1).exists());
        let eval = eval_run(&run, false).unwrap();
        assert_eq!(eval.reports.len(), 2);
        let summary: serde_json::Value = read_json(&run.join("metrics/summary.json")).unwrap();
        assert!(summary["summary"]["aupr"]["mean"].is_f64());
        assert_eq!(summary["config"]["model"]["epochs"], 2);
        let fold: serde_json::Value = read_json(&fold_metrics(&run, 2)).unwrap();
        assert_eq!(
            fold["report"]["averaging"],
            eval.reports[1].1.averaging.as_str()
        );
    }

    #[test]
    fn predictions_name_drugs_and_rows_sum_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            only_folds: vec![1],
            ..tiny_run(dir.path())
        };
        let run = dir.path().join("run");
        train_run(&cfg, &run).unwrap();
        let pairs = dir.path().join("pairs.tsv");
        fs::write(&pairs, "# query\nSYN0000\tSYN0003\nSYN0005\tSYN0001\n").unwrap();
        let out = predict_file(&fold_checkpoint(&run, 1), &cfg.drugs, &pairs).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("SYN0000\tSYN0003\t"));
        let p: f64 = lines[2]
            .split('\t')
            .skip(3)
            .map(|v| v.parse::<f64>().unwrap())
            .sum();
        assert!((p - 1.0).abs() < 1e-9);
    }

    #[test]
    fn malformed_pairs_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_run(dir.path());
        let table = read_drug_table(&cfg.drugs).unwrap();
        let path = Path::new("q.tsv");
        for (text, line) in [
            ("SYN0000\tSYN0001\nSYN0000\n", 2),
            ("\nSYN0000\tNOPE\n", 2),
            ("SYN0002\tSYN0002\n", 1),
        ] {
            let err = parse_pairs(path, text, &table).unwrap_err();
            match err.downcast_ref::<hmgrl::Error>() {
                Some(hmgrl::Error::Parse { line: l, .. }) => assert_eq!(*l, line, "{text:?}"),
                other => panic!("{other:?}"),
            }
        }
    }
}
