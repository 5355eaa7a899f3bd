//! One function per subcommand. Each returns the text it prints so tests can
//! drive the pipeline without spawning processes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use alstm_core::baselines::{indicator_records, Indicator};
use alstm_core::eval::{
    confidence_histogram, multi_run_report, predict, predict_attacked, relative_improvement,
    write_histogram, write_predictions, write_text, MetricsReport, RpdReport, RunSummary,
};
use alstm_core::market::{
    align_trading_days, ingest_many, label_and_window, AlignedMarket, Dataset, Label, SplitSpec,
    NUM_FEATURES,
};
use alstm_core::nn::{Checkpoint, Model};
use alstm_core::train::{grid_search, train, write_grid, write_loss_curve, TrainMode};
use alstm_core::{Error, Result};

use crate::config::RunConfig;

pub const DATASET_FILE: &str = "dataset.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

pub fn dataset_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join(DATASET_FILE)
}

/// Directory holding the artifacts of the run with `seed`.
pub fn run_dir(cfg: &RunConfig, seed: u64) -> PathBuf {
    cfg.out.join(format!("seed-{seed}"))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_market(cfg: &RunConfig) -> Result<AlignedMarket> {
    for p in &cfg.data {
        if !p.is_file() {
            return Err(Error::Io {
                path: p.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
            });
        }
    }
    let series = ingest_many(&cfg.data)?;
    align_trading_days(&series, cfg.min_coverage)
}

/// Loads the dataset artifact and checks it matches the config.
pub fn load_dataset(cfg: &RunConfig) -> Result<(Dataset, String)> {
    let path = dataset_path(cfg);
    if !path.is_file() {
        return Err(Error::Io {
            path,
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "dataset artifact not found; run `build` first",
            ),
        });
    }
    let (dataset, hash) = Dataset::load(&path)?;
    if dataset.spec != cfg.split {
        return Err(Error::Artifact(format!(
            "{} was built with a different split spec than the config",
            path.display()
        )));
    }
    if let Some(expected) = &cfg.dataset_hash {
        if *expected != hash {
            return Err(Error::Artifact(format!(
                "dataset hash {hash} does not match the expected {expected}"
            )));
        }
    }
    Ok((dataset, hash))
}

/// Loads the checkpoint of a run and checks it belongs to `dataset`.
pub fn load_checkpoint(dir: &Path, dataset: &Dataset, dataset_hash: &str) -> Result<Checkpoint> {
    let path = dir.join(CHECKPOINT_FILE);
    if !path.is_file() {
        return Err(Error::Io {
            path,
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "checkpoint not found; run `train` first",
            ),
        });
    }
    let ckpt = Checkpoint::load(&path)?;
    let dims = ckpt.model.dims;
    if dims.features != NUM_FEATURES || dims.lag != dataset.lag() {
        return Err(Error::Artifact(format!(
            "checkpoint expects {}x{} windows but the dataset has {}x{}",
            dims.lag,
            dims.features,
            dataset.lag(),
            NUM_FEATURES
        )));
    }
    match ckpt.meta("dataset_hash") {
        Some(h) if h == dataset_hash => Ok(ckpt),
        Some(h) => Err(Error::Artifact(format!(
            "checkpoint was trained on dataset {h}, not {dataset_hash}"
        ))),
        None => Err(Error::Artifact("checkpoint records no dataset hash".into())),
    }
}

fn class_balance(examples: &[alstm_core::market::Example]) -> (usize, usize) {
    let up = examples.iter().filter(|e| e.label == Label::Up).count();
    (up, examples.len() - up)
}

pub fn cmd_build(cfg: &RunConfig) -> Result<String> {
    let market = load_market(cfg)?;
    let dataset = Dataset::build(&market, &cfg.split)?;
    create_dir(&cfg.out)?;
    let hash = dataset.save(&dataset_path(cfg))?;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "stocks {} (excluded {}), trading days {}",
        dataset.prices.len(),
        dataset.excluded_stocks.len(),
        dataset.calendar.len()
    );
    for (name, split) in [
        ("train", &dataset.examples.train),
        ("validation", &dataset.examples.validation),
        ("test", &dataset.examples.test),
    ] {
        let (up, down) = class_balance(split);
        let _ = writeln!(
            out,
            "{name:<10} {:>7} examples  up {up}  down {down}",
            split.len()
        );
    }
    let _ = writeln!(out, "dataset {} sha256 {hash}", dataset_path(cfg).display());
    Ok(out)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let (dataset, hash) = load_dataset(cfg)?;
    let ex = &dataset.examples;
    let mut out = String::new();
    for seed in cfg.runs() {
        let run = cfg.clone().with_seed(seed);
        let dir = run_dir(cfg, seed);
        create_dir(&dir)?;
        let init = Model::init(run.model_dims(), seed)?;
        let result = train(init, &ex.train, &ex.validation, &run.train)?;

        let manifest = RunConfig {
            dataset_hash: Some(hash.clone()),
            ..run.clone()
        };
        let t = &run.train;
        Checkpoint::new(result.best.clone(), seed)
            .with_meta("dataset_hash", hash.clone())
            .with_meta("config_hash", manifest.hash())
            .with_meta("mode", t.mode.to_string())
            .with_meta("alpha", t.alpha.to_string())
            .with_meta("beta", t.effective_beta().to_string())
            .with_meta("epsilon", t.epsilon.to_string())
            .with_meta("best_epoch", result.best_epoch.to_string())
            .save(&dir.join(CHECKPOINT_FILE))?;
        write_loss_curve(&dir.join("loss_curve.csv"), &result.curve)?;
        write_text(
            &dir.join("manifest.conf"),
            &format!(
                "# config sha256 {}\n{}",
                manifest.hash(),
                manifest.to_text()
            ),
        )?;

        let first = result
            .curve
            .first()
            .map(|s| s.train_loss)
            .unwrap_or(f64::NAN);
        let last = result
            .curve
            .last()
            .map(|s| s.train_loss)
            .unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "seed {seed}: {} training, best epoch {} of {}, train loss {first:.4} -> {last:.4}",
            t.mode,
            result.best_epoch,
            result.curve.len() - 1
        );
    }
    Ok(out)
}

/// One row of a metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodMetrics {
    pub method: String,
    pub report: MetricsReport,
}

fn metrics_csv(rows: &[MethodMetrics]) -> String {
    let mut s = String::from("method,acc,mcc,n,tp,tn,fp,fn\n");
    for r in rows {
        let m = &r.report;
        let c = &m.confusion;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.method, m.acc, m.mcc, m.n, c.tp, c.tn, c.fp, c.fn_
        );
    }
    s
}

fn parse_metrics(path: &Path) -> Result<Vec<(String, f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: message.into(),
        };
        if fields.len() != 8 {
            return Err(bad("expected 8 fields"));
        }
        let acc = fields[1].parse().map_err(|_| bad("bad acc"))?;
        let mcc = fields[2].parse().map_err(|_| bad("bad mcc"))?;
        rows.push((fields[0].to_string(), acc, mcc));
    }
    Ok(rows)
}

fn model_name(ckpt: &Checkpoint) -> String {
    let attentive = ckpt.model.dims.use_attention;
    let mode: TrainMode = ckpt
        .meta("mode")
        .and_then(|m| m.parse().ok())
        .unwrap_or(TrainMode::Normal);
    match (attentive, mode) {
        (false, TrainMode::Normal) => "LSTM".into(),
        (false, TrainMode::Adversarial) => "Adv-LSTM".into(),
        (false, TrainMode::RandomPerturbation) => "Rand-LSTM".into(),
        (true, TrainMode::Normal) => "ALSTM".into(),
        (true, TrainMode::Adversarial) => "Adv-ALSTM".into(),
        (true, TrainMode::RandomPerturbation) => "Rand-ALSTM".into(),
    }
}

fn comparison_table(rows: &[MethodMetrics]) -> String {
    let mut s = format!("{:<12} {:>8} {:>9}\n", "method", "Acc", "MCC");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<12} {:>8.2} {:>9.4}",
            r.method, r.report.acc, r.report.mcc
        );
    }
    if let (Some(model), [baselines @ .., _]) = (rows.last(), rows) {
        let best_acc = baselines
            .iter()
            .map(|r| r.report.acc)
            .fold(f64::NEG_INFINITY, f64::max);
        let best_mcc = baselines
            .iter()
            .map(|r| r.report.mcc)
            .fold(f64::NEG_INFINITY, f64::max);
        let fmt = |v: Option<f64>| {
            v.map(|x| format!("{x:.2}%"))
                .unwrap_or_else(|| "n/a".into())
        };
        let _ = writeln!(
            s,
            "{:<12} {:>8} {:>9}",
            "RI",
            fmt(relative_improvement(model.report.acc, best_acc)),
            fmt(relative_improvement(model.report.mcc, best_mcc))
        );
    }
    s
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<String> {
    let (dataset, hash) = load_dataset(cfg)?;
    let test = &dataset.examples.test;
    if test.is_empty() {
        return Err(Error::Data("test split is empty".into()));
    }
    let mut out = String::new();
    for seed in cfg.runs() {
        let dir = run_dir(cfg, seed);
        let ckpt = load_checkpoint(&dir, &dataset, &hash)?;
        let records = predict(&ckpt.model, test)?;
        let mut rows = Vec::new();
        for (indicator, file) in [
            (Indicator::Momentum, "predictions_mom.csv"),
            (Indicator::MeanReversion, "predictions_mr.csv"),
        ] {
            let recs = indicator_records(&dataset, test, indicator, &cfg.indicators)?;
            write_predictions(&dir.join(file), &recs)?;
            rows.push(MethodMetrics {
                method: indicator.name().into(),
                report: MetricsReport::from_records(&recs)?,
            });
        }
        rows.push(MethodMetrics {
            method: model_name(&ckpt),
            report: MetricsReport::from_records(&records)?,
        });
        write_predictions(&dir.join("predictions.csv"), &records)?;
        write_text(&dir.join("metrics.csv"), &metrics_csv(&rows))?;

        let hist = confidence_histogram(&records, cfg.hist_bins, -cfg.hist_range, cfg.hist_range)?;
        write_histogram(&dir.join("histogram.csv"), &hist)?;
        write_text(
            &dir.join("confidence.csv"),
            &format!(
                "min_abs,max_abs,mean_abs\n{},{},{}\n",
                hist.min_abs, hist.max_abs, hist.mean_abs
            ),
        )?;
        let table = comparison_table(&rows);
        write_text(&dir.join("comparison.txt"), &table)?;
        let _ = writeln!(out, "seed {seed} (test n={})\n{table}", test.len());
    }
    Ok(out)
}

pub fn cmd_attack(cfg: &RunConfig, epsilon: Option<f64>) -> Result<String> {
    let (dataset, hash) = load_dataset(cfg)?;
    let test = &dataset.examples.test;
    if test.is_empty() {
        return Err(Error::Data("test split is empty".into()));
    }
    let mut out = String::new();
    for seed in cfg.runs() {
        let dir = run_dir(cfg, seed);
        let ckpt = load_checkpoint(&dir, &dataset, &hash)?;
        let eps = match epsilon.or(cfg.attack_epsilon) {
            Some(e) => e,
            None => ckpt
                .meta("epsilon")
                .and_then(|e| e.parse().ok())
                .unwrap_or(cfg.train.epsilon),
        };
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::Config(format!(
                "attack epsilon must be >= 0, got {eps}"
            )));
        }
        let clean = MetricsReport::from_records(&predict(&ckpt.model, test)?)?;
        let attacked_records = predict_attacked(&ckpt.model, test, eps)?;
        let attacked = MetricsReport::from_records(&attacked_records)?;
        let rpd = RpdReport::between(&clean, &attacked);
        write_predictions(&dir.join("predictions_attacked.csv"), &attacked_records)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        write_text(
            &dir.join("attack.csv"),
            &format!(
                "metric,epsilon,clean,attacked,rpd\nacc,{eps},{},{},{}\nmcc,{eps},{},{},{}\n",
                clean.acc,
                attacked.acc,
                opt(rpd.acc),
                clean.mcc,
                attacked.mcc,
                opt(rpd.mcc)
            ),
        )?;
        let show = |v: Option<f64>| {
            v.map(|x| format!("{x:+.4}"))
                .unwrap_or_else(|| "n/a".into())
        };
        let _ = writeln!(
            out,
            "seed {seed} eps {eps}: Acc {:.2} -> {:.2} (RPD {}), MCC {:.4} -> {:.4} (RPD {})",
            clean.acc,
            attacked.acc,
            show(rpd.acc),
            clean.mcc,
            attacked.mcc,
            show(rpd.mcc)
        );
    }
    Ok(out)
}

pub fn cmd_grid(cfg: &RunConfig) -> Result<String> {
    let market = load_market(cfg)?;
    let data_for_lag = |lag: usize| {
        let spec = SplitSpec {
            lag,
            ..cfg.split.clone()
        };
        label_and_window(&market, &spec)
    };
    let mapping = (cfg.mapping_dim != 0).then_some(cfg.mapping_dim);
    let outcome = grid_search(&cfg.grid, &cfg.train, mapping, data_for_lag)?;
    create_dir(&cfg.out)?;
    write_grid(&cfg.out.join("grid.csv"), &outcome.cells)?;

    let b = outcome.best;
    let mut best = cfg.clone();
    best.hidden_dim = b.hidden;
    best.split.lag = b.lag;
    best.train.alpha = b.lambda;
    best.train.beta = b.beta;
    best.train.epsilon = b.epsilon;
    best.train.mode = TrainMode::Adversarial;
    write_text(
        &cfg.out.join("best_config.conf"),
        &format!(
            "# grid selection: normal-stage val acc {:.2}, adversarial-stage val acc {:.2}\n{}",
            outcome.best_normal.val_acc,
            b.val_acc,
            best.to_text()
        ),
    )?;
    Ok(format!(
        "{} cells\nbest normal: U={} T={} lambda={} (val acc {:.2}, mcc {:.4})\nbest adversarial: beta={} epsilon={} (val acc {:.2}, mcc {:.4})\n",
        outcome.cells.len(),
        outcome.best_normal.hidden,
        outcome.best_normal.lag,
        outcome.best_normal.lambda,
        outcome.best_normal.val_acc,
        outcome.best_normal.val_mcc,
        b.beta,
        b.epsilon,
        b.val_acc,
        b.val_mcc
    ))
}

pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let mut methods: Vec<(String, Vec<MetricsReport>)> = Vec::new();
    for seed in cfg.runs() {
        let path = run_dir(cfg, seed).join("metrics.csv");
        for (method, acc, mcc) in parse_metrics(&path)? {
            let report = MetricsReport {
                acc,
                mcc,
                n: 0,
                confusion: Default::default(),
            };
            match methods.iter_mut().find(|(m, _)| *m == method) {
                Some((_, v)) => v.push(report),
                None => methods.push((method, vec![report])),
            }
        }
    }
    let mut csv = String::from("method,acc_mean,acc_std,mcc_mean,mcc_std,runs\n");
    let mut table = format!("{:<12} {:>14} {:>16}\n", "method", "Acc", "MCC");
    let mut summaries: Vec<(RunSummary, RunSummary)> = Vec::new();
    for (method, runs) in &methods {
        let (acc, mcc) = multi_run_report(runs)?;
        let _ = writeln!(
            csv,
            "{method},{},{},{},{},{}",
            acc.mean, acc.std, mcc.mean, mcc.std, acc.runs
        );
        let _ = writeln!(
            table,
            "{method:<12} {:>14} {:>16}",
            acc.format(2),
            mcc.format(4)
        );
        summaries.push((acc, mcc));
    }
    if let [baselines @ .., (acc, mcc)] = summaries.as_slice() {
        if !baselines.is_empty() {
            let best_acc = baselines
                .iter()
                .map(|b| b.0.mean)
                .fold(f64::NEG_INFINITY, f64::max);
            let best_mcc = baselines
                .iter()
                .map(|b| b.1.mean)
                .fold(f64::NEG_INFINITY, f64::max);
            let fmt = |v: Option<f64>| {
                v.map(|x| format!("{x:.2}%"))
                    .unwrap_or_else(|| "n/a".into())
            };
            let _ = writeln!(
                table,
                "{:<12} {:>14} {:>16}",
                "RI",
                fmt(relative_improvement(acc.mean, best_acc)),
                fmt(relative_improvement(mcc.mean, best_mcc))
            );
        }
    }
    create_dir(&cfg.out)?;
    write_text(&cfg.out.join("report.csv"), &csv)?;
    write_text(&cfg.out.join("report.txt"), &table)?;
    Ok(table)
}
