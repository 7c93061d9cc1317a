//! Subcommand implementations. Every command is a pure function of
//! (config, seed) to files; reruns reproduce outputs byte-for-byte.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hymos_core::data::{
    generate_scenario, load_dataset, save_dataset, Dataset, ScenarioConfig, ScenarioMetadata,
};
use hymos_core::eval::{
    ce_baseline_train_eval, dump_embeddings, evaluate_target, final_threshold, metrics_report,
    MetricsReport,
};
use hymos_core::train::{load_checkpoint, run_training, save_checkpoint, TrainConfig};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(CliError::runtime_from)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn cmd_generate(cfg: &RunConfig, out_dir: &Path) -> CliResult<()> {
    let (sources, target, meta) = generate_scenario(&cfg.scenario)?;
    fs::create_dir_all(out_dir)?;
    for (i, ds) in sources.iter().enumerate() {
        save_dataset(&out_dir.join(format!("source_{i}.csv")), ds)?;
    }
    save_dataset(&out_dir.join("target.csv"), &target)?;
    write_json(&out_dir.join("metadata.json"), &meta)?;
    cfg.echo_into(out_dir)?;
    println!(
        "generated {} source domains + target ({} samples) into {} (openness {:.3})",
        sources.len(),
        target.len(),
        out_dir.display(),
        meta.openness
    );
    Ok(())
}

pub fn load_data(dir: &Path) -> CliResult<(Vec<Dataset>, Dataset, ScenarioMetadata)> {
    let meta_text = fs::read_to_string(dir.join("metadata.json"))
        .map_err(|e| CliError::usage(format!("cannot read {}/metadata.json: {e}", dir.display())))?;
    let meta: ScenarioMetadata =
        serde_json::from_str(&meta_text).map_err(CliError::usage_from)?;
    let mut sources = Vec::with_capacity(meta.num_sources);
    for i in 0..meta.num_sources {
        sources.push(load_dataset(&dir.join(format!("source_{i}.csv")), false)?);
    }
    let target = load_dataset(&dir.join("target.csv"), true)?;
    Ok((sources, target, meta))
}

/// Scenario for a run: either the dataset files on disk or a fresh inline
/// generation with the run's seed.
fn run_data(cfg: &RunConfig, seed: u64) -> CliResult<(Vec<Dataset>, Dataset)> {
    match &cfg.data_dir {
        Some(dir) => {
            let (s, t, _) = load_data(dir)?;
            Ok((s, t))
        }
        None => {
            let scenario = ScenarioConfig {
                seed,
                ..cfg.scenario.clone()
            };
            let (s, t, _) = generate_scenario(&scenario)?;
            Ok((s, t))
        }
    }
}

fn eval_trained(
    cfg: &RunConfig,
    params: &hymos_core::model::ModelParams,
    sources: &[Dataset],
    target: &Dataset,
    known: usize,
) -> CliResult<(MetricsReport, Vec<hymos_core::eval::PredictionRecord>)> {
    let (threshold, protos) = final_threshold(params, sources, cfg.train.max_samples_per_class)?;
    let records = evaluate_target(params, target, &protos, threshold.alpha)?;
    Ok((metrics_report(&records, known, cfg.eval_mode), records))
}

fn known_classes(sources: &[Dataset]) -> usize {
    sources
        .iter()
        .flat_map(|d| d.samples.iter())
        .filter_map(|s| s.label.known())
        .max()
        .map(|y| y + 1)
        .unwrap_or(0)
}

fn summarize(report: &MetricsReport) -> String {
    // benchmark-table style percent rendering with one decimal
    let pct = |v: f64| format!("{:.1}", v * 100.0);
    let mut s = format!("OS* {}", pct(report.os_star));
    if let (Some(unk), Some(hos)) = (report.unk, report.hos) {
        s.push_str(&format!(" UNK {} HOS {}", pct(unk), pct(hos)));
    }
    if let Some(a) = report.auroc {
        s.push_str(&format!(" AUROC {}", pct(a)));
    }
    s
}

/// One full training run for a seed; returns the evaluation report.
fn run_one(cfg: &RunConfig, seed: u64, out_dir: &Path) -> CliResult<MetricsReport> {
    fs::create_dir_all(out_dir)?;
    let (sources, target) = run_data(cfg, seed)?;
    let known = known_classes(&sources);
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };

    let report = if cfg.ce_baseline {
        let (report, _) = ce_baseline_train_eval(
            &sources,
            &target,
            &train_cfg,
            cfg.ce_reject_percentile,
            cfg.eval_mode,
        )?;
        report
    } else {
        let out = run_training(&sources, &target, &train_cfg)?;
        save_checkpoint(&out.state, &out_dir.join("checkpoint.json"))?;
        let mut log = BufWriter::new(File::create(out_dir.join("log.jsonl"))?);
        for rec in &out.log {
            let line = serde_json::to_string(rec).map_err(CliError::runtime_from)?;
            writeln!(log, "{line}")?;
        }
        log.flush()?;
        let (report, records) = eval_trained(cfg, &out.state.params, &sources, &target, known)?;
        if cfg.dump_embeddings {
            let (threshold, protos) =
                final_threshold(&out.state.params, &sources, cfg.train.max_samples_per_class)?;
            let _ = records;
            dump_embeddings(
                &out_dir.join("embeddings.csv"),
                &out.state.params,
                &sources,
                &target,
                &protos,
                threshold.alpha,
            )?;
        }
        report
    };
    write_json(&out_dir.join("report.json"), &report)?;
    println!("seed {seed}: {}", summarize(&report));
    Ok(report)
}

pub fn cmd_train(cfg: &RunConfig, out_dir: &Path) -> CliResult<()> {
    cfg.echo_into(out_dir)?;
    for &seed in &cfg.seeds {
        run_one(cfg, seed, &out_dir.join(format!("seed_{seed}")))?;
    }
    Ok(())
}

pub fn cmd_eval(
    cfg: &RunConfig,
    checkpoint: &Path,
    data_dir: Option<&Path>,
    out_dir: &Path,
) -> CliResult<()> {
    let state = load_checkpoint(checkpoint)?;
    let (sources, target) = match data_dir {
        Some(dir) => {
            let (s, t, _) = load_data(dir)?;
            (s, t)
        }
        None => run_data(cfg, cfg.scenario.seed)?,
    };
    let known = known_classes(&sources);
    fs::create_dir_all(out_dir)?;
    let (report, _) = eval_trained(cfg, &state.params, &sources, &target, known)?;
    if cfg.dump_embeddings {
        let (threshold, protos) =
            final_threshold(&state.params, &sources, cfg.train.max_samples_per_class)?;
        dump_embeddings(
            &out_dir.join("embeddings.csv"),
            &state.params,
            &sources,
            &target,
            &protos,
            threshold.alpha,
        )?;
    }
    write_json(&out_dir.join("report.json"), &report)?;
    cfg.echo_into(out_dir)?;
    println!("{}", summarize(&report));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    AlphaM,
    Tau,
    Openness,
}

impl SweepAxis {
    pub fn parse(s: &str) -> CliResult<SweepAxis> {
        match s {
            "alpha-m" => Ok(SweepAxis::AlphaM),
            "tau" => Ok(SweepAxis::Tau),
            "openness" => Ok(SweepAxis::Openness),
            other => Err(CliError::usage(format!(
                "unknown sweep axis {other:?} (expected alpha-m, tau or openness)"
            ))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            SweepAxis::AlphaM => "alpha_m",
            SweepAxis::Tau => "tau",
            SweepAxis::Openness => "openness",
        }
    }
}

pub fn cmd_sweep(cfg: &RunConfig, axis: SweepAxis, out_dir: &Path) -> CliResult<()> {
    fs::create_dir_all(out_dir)?;
    cfg.echo_into(out_dir)?;
    let values: Vec<f64> = match axis {
        SweepAxis::AlphaM => cfg.alpha_m_axis.clone(),
        SweepAxis::Tau => cfg.tau_axis.clone(),
        SweepAxis::Openness => cfg
            .target_private_axis
            .iter()
            .map(|&v| v as f64)
            .collect(),
    };
    if values.is_empty() {
        return Err(CliError::usage("sweep axis has no values in the config"));
    }

    let mut csv = String::from("axis,value,seed,os_star,unk,os,hos,auroc\n");
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for &value in &values {
        let mut variant = cfg.clone();
        match axis {
            SweepAxis::AlphaM => variant.train.alpha_m = value,
            SweepAxis::Tau => variant.train.tau = value,
            SweepAxis::Openness => {
                variant.scenario.target_private = value as usize;
                variant.data_dir = None; // openness requires regeneration
            }
        }
        variant.validate()?;
        let mut reports = Vec::new();
        for &seed in &cfg.seeds {
            let run_dir = out_dir.join(format!("{}_{value}", axis.name())).join(format!("seed_{seed}"));
            let report = run_one(&variant, seed, &run_dir)?;
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                axis.name(),
                value,
                seed,
                report.os_star,
                fmt_opt(report.unk),
                fmt_opt(report.os),
                fmt_opt(report.hos),
                fmt_opt(report.auroc),
            ));
            reports.push(report);
        }
        let n = reports.len() as f64;
        let mean_of = |f: &dyn Fn(&MetricsReport) -> Option<f64>| -> Option<f64> {
            let vals: Vec<f64> = reports.iter().filter_map(|r| f(r)).collect();
            if vals.len() == reports.len() {
                Some(vals.iter().sum::<f64>() / n)
            } else {
                None
            }
        };
        csv.push_str(&format!(
            "{},{},mean,{},{},{},{},{}\n",
            axis.name(),
            value,
            reports.iter().map(|r| r.os_star).sum::<f64>() / n,
            fmt_opt(mean_of(&|r| r.unk)),
            fmt_opt(mean_of(&|r| r.os)),
            fmt_opt(mean_of(&|r| r.hos)),
            fmt_opt(mean_of(&|r| r.auroc)),
        ));
    }
    fs::write(out_dir.join("sweep.csv"), csv)?;
    println!(
        "sweep over {} ({} values x {} seeds) written to {}",
        axis.name(),
        values.len(),
        cfg.seeds.len(),
        out_dir.join("sweep.csv").display()
    );
    Ok(())
}

/// Aggregate every report.json found under `dir` into one plot-ready CSV.
pub fn cmd_report(dir: &Path, out: Option<&Path>) -> CliResult<()> {
    let mut rows: Vec<(String, MetricsReport)> = Vec::new();
    collect_reports(dir, dir, &mut rows)?;
    if rows.is_empty() {
        return Err(CliError::usage(format!(
            "no report.json files found under {}",
            dir.display()
        )));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut csv = String::from("run,os_star,unk,os,hos,auroc\n");
    for (name, r) in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            name,
            r.os_star,
            fmt_opt(r.unk),
            fmt_opt(r.os),
            fmt_opt(r.hos),
            fmt_opt(r.auroc),
        ));
    }
    let out_path = out
        .map(PathBuf::from)
        .unwrap_or_else(|| dir.join("report.csv"));
    fs::write(&out_path, csv)?;
    println!("{} runs aggregated into {}", rows.len(), out_path.display());
    Ok(())
}

fn collect_reports(
    root: &Path,
    dir: &Path,
    rows: &mut Vec<(String, MetricsReport)>,
) -> CliResult<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_reports(root, &path, rows)?;
        } else if path.file_name().is_some_and(|n| n == "report.json") {
            let report: MetricsReport =
                serde_json::from_str(&fs::read_to_string(&path)?).map_err(CliError::runtime_from)?;
            let name = path
                .parent()
                .and_then(|p| p.strip_prefix(root).ok())
                .map(|p| p.to_string_lossy().into_owned())
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| ".".into());
            rows.push((name, report));
        }
    }
    Ok(())
}
