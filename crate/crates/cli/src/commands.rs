//! One function per subcommand. Each computes everything first and writes
//! its outputs only once the run has succeeded.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use ssal_core::bench::{bench, write_bench_csv};
use ssal_core::data::{synth_drift_generate, write_dataset, ShardEncoding};
use ssal_core::experiment::noise_sweep;
use ssal_core::metrics::{config_hash, emit_report, Report, RunSummary, REPORT_SCHEMA_VERSION};
use ssal_core::net::Checkpoint;
use ssal_core::selection::SelectorConfig;
use ssal_core::stream::{initial_states, run_ablation_suite, run_experiment, run_from_states, StreamConfig, StreamResult};
use ssal_core::{Error, Result};

use crate::config::ExperimentConfig;

pub const OUT_ENV: &str = "SSAL_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Train,
    Stream,
    Ablate,
    Bench,
    Noise,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Stream => "stream",
            Command::Ablate => "ablate",
            Command::Bench => "bench",
            Command::Noise => "noise",
            Command::Report => "report",
        }
    }
}

/// `--out`, then the config's `out`, then `$SSAL_OUT/<command>`, then
/// `runs/<command>`.
pub fn output_dir(cfg: &ExperimentConfig, command: Command) -> PathBuf {
    if let Some(out) = &cfg.out {
        return out.clone();
    }
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    root.join(command.name())
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(io(path))
}

fn report(cfg: &ExperimentConfig, results: &[&StreamResult]) -> Result<Report> {
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        config_hash: config_hash(cfg)?,
        seeds: cfg.seeds.clone(),
        rows: results.iter().flat_map(|r| r.report_rows()).collect(),
        summary: results.iter().map(|r| r.summary()).collect(),
    })
}

fn warn_violations(results: &[&StreamResult]) {
    for r in results {
        for v in r.violations() {
            eprintln!("warning: {}: {v}", r.label);
        }
    }
}

fn print_summary(summary: &[RunSummary]) {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"));
    println!("{:<36} {:>7} {:>7} {:>7} {:>7}", "run", "f1", "±", "fnr", "fpr");
    for s in summary {
        println!(
            "{:<36} {:>7} {:>7} {:>7} {:>7}",
            s.run,
            fmt(s.f1_mean),
            fmt(s.f1_std),
            fmt(s.fnr_mean),
            fmt(s.fpr_mean)
        );
    }
}

fn write_selections(path: &Path, results: &[&StreamResult]) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        run: &'a str,
        seed: u64,
        month: String,
        id: &'a str,
        label: u8,
        margin: f64,
        lp_distance: f64,
        confidence: f64,
        hybrid: f64,
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in results {
        for run in &r.runs {
            for m in &run.months {
                let month = m.metrics.month.map(|m| m.to_string()).unwrap_or_default();
                for s in &m.selected {
                    w.serialize(Row {
                        run: &r.label,
                        seed: run.seed,
                        month: month.clone(),
                        id: &s.id,
                        label: s.label,
                        margin: s.margin,
                        lp_distance: s.lp_distance,
                        confidence: s.confidence,
                        hybrid: s.hybrid,
                    })?;
                }
            }
        }
    }
    w.flush().map_err(io(path))
}

fn stream_outputs(out: &Path, cfg: &ExperimentConfig, results: &[&StreamResult], name: &str) -> Result<()> {
    warn_violations(results);
    let rep = report(cfg, results)?;
    std::fs::create_dir_all(out).map_err(io(out))?;
    write_json(&out.join(format!("{name}.json")), &results)?;
    write_selections(&out.join("selections.csv"), results)?;
    emit_report(out, &rep)?;
    print_summary(&rep.summary);
    Ok(())
}

pub fn synth(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let gen = cfg.generator_or_default();
    let stream = synth_drift_generate(&gen)?;
    std::fs::create_dir_all(out).map_err(io(out))?;
    let manifest = write_dataset(&out.join("dataset"), &stream.dataset, ShardEncoding::Binary)?;
    println!(
        "wrote {} months, {} samples, dim {} to {}",
        manifest.months.len(),
        stream.dataset.len(),
        manifest.feature_dim,
        out.join("dataset").display()
    );
    Ok(())
}

pub fn train(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let setup = cfg.stream_setup()?;
    let states = initial_states(&setup, &cfg.seeds)?;
    let static_cfg = StreamConfig {
        budget: 0,
        ..cfg.stream.clone()
    };
    let mut evaluation = run_from_states(&states, &setup.months, &setup.oracle(), &static_cfg)?;
    evaluation.label = "static".into();
    std::fs::create_dir_all(out).map_err(io(out))?;
    for s in &states {
        Checkpoint::new(s.model.clone(), None, s.seed).save(&out.join(format!("checkpoint-{}.json", s.seed)))?;
        write_json(&out.join(format!("train_report-{}.json", s.seed)), &s.report)?;
        println!(
            "seed {}: final loss {:.6}, {} steps",
            s.seed,
            s.report.final_loss().unwrap_or(f64::NAN),
            s.report.steps
        );
    }
    if !setup.months.is_empty() {
        let rep = report(cfg, &[&evaluation])?;
        emit_report(out, &rep)?;
        print_summary(&rep.summary);
    }
    Ok(())
}

pub fn stream(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let setup = cfg.stream_setup()?;
    let result = run_experiment(&setup, &cfg.stream)?;
    stream_outputs(out, cfg, &[&result], "stream")
}

pub fn ablate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let setup = cfg.stream_setup()?;
    let selectors: Vec<SelectorConfig> = cfg
        .ablation
        .selectors
        .iter()
        .map(|&kind| SelectorConfig {
            kind,
            ..cfg.stream.selector
        })
        .collect();
    let cells = run_ablation_suite(&setup, &cfg.stream, &selectors, &cfg.ablation.budgets)?;
    let results: Vec<&StreamResult> = cells.iter().map(|c| &c.result).collect();
    stream_outputs(out, cfg, &results, "ablation")
}

pub fn bench_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let records = bench(&cfg.bench)?;
    std::fs::create_dir_all(out).map_err(io(out))?;
    write_bench_csv(&out.join("bench.csv"), &records)?;
    println!("{:>8} {:>10} {:>16}", "n", "seconds", "operations");
    for r in &records {
        println!("{:>8} {:>10.3} {:>16}", r.n, r.seconds, r.operations);
    }
    Ok(())
}

pub fn noise(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let setup = cfg.stream_setup()?;
    let points = noise_sweep(&setup, &cfg.stream, &cfg.noise.rates)?;
    let results: Vec<&StreamResult> = points.iter().map(|p| &p.result).collect();
    stream_outputs(out, cfg, &results, "noise")
}

/// Reprints and re-exports the summary of an earlier run directory.
pub fn report_cmd(input: &Path, out: &Path) -> Result<()> {
    let path = input.join("report.json");
    let text = std::fs::read_to_string(&path).map_err(io(&path))?;
    let rep: Report = serde_json::from_str(&text)?;
    if rep.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::Data {
            source_name: path.display().to_string(),
            message: format!("schema version {} not supported", rep.schema_version),
        });
    }
    std::fs::create_dir_all(out).map_err(io(out))?;
    let summary_path = out.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary_path)?;
    for s in &rep.summary {
        w.serialize(s)?;
    }
    w.flush().map_err(io(&summary_path))?;
    print_summary(&rep.summary);
    Ok(())
}

fn hash_tree(root: &Path, dir: &Path, into: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(io(dir))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io(dir))?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let path = e.path();
        if path.is_dir() {
            hash_tree(root, &path, into)?;
        } else if path.file_name().is_some_and(|n| n != "run.json") {
            let bytes = std::fs::read(&path).map_err(io(&path))?;
            let rel = path.strip_prefix(root).unwrap_or(&path).to_string_lossy().replace('\\', "/");
            into.insert(rel, hex::encode(Sha256::digest(&bytes)));
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    version: &'a str,
    config_hash: String,
    seeds: &'a [u64],
    config: &'a ExperimentConfig,
    /// SHA-256 of every file written, by path relative to the output dir.
    artifacts: BTreeMap<String, String>,
}

pub fn write_run_record(command: Command, cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(io(out))?;
    let mut artifacts = BTreeMap::new();
    hash_tree(out, out, &mut artifacts)?;
    let record = RunRecord {
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(cfg)?,
        seeds: &cfg.seeds,
        config: cfg,
        artifacts,
    };
    write_json(&out.join("run.json"), &record)
}
