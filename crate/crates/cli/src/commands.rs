//! The four subcommands, as library functions over paths and configs.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use icon_core::calibration::{train as fit, training_samples, TrainLog};
use icon_core::domain::{Scenario, Session, Technology};
use icon_core::evaluation::{make_report, run_cv_where, sig, CvRun, EvalReport, FoldResult};
use icon_core::simulator::gen_dataset;

use crate::config::RunConfig;
use crate::dataset::{load_sessions, scenario_of, write_sessions, MANIFEST};
use crate::error::{CliError, Result};

pub const REPORT_TEXT: &str = "report.txt";
pub const FOLDS_CSV: &str = "folds.csv";
pub const CDF_CSV: &str = "cdf.csv";
pub const ERRORS_CSV: &str = "errors.csv";
const ERRORS_HEADER: &str = "tech,scenario,fold,t,baseline_error_m,icon_error_m";
const ERROR_DIGITS: usize = 9;

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Defaults, then the manifest found in `data_dir` (if any), then `file`.
/// A later layer replaces the whole config, since every file is complete
/// once defaults are filled in.
pub fn layered_config(data_dir: Option<&Path>, file: Option<&Path>) -> Result<RunConfig> {
    if let Some(f) = file {
        return RunConfig::load(f);
    }
    if let Some(m) = data_dir.map(|d| d.join(MANIFEST)).filter(|m| m.exists()) {
        return RunConfig::load(&m);
    }
    Ok(RunConfig::default())
}

pub fn manifest_text(cfg: &RunConfig) -> String {
    format!("# icon dataset manifest, icon-cli {}\n{}", env!("CARGO_PKG_VERSION"), cfg.to_toml())
}

/// Generates the dataset described by `cfg` into its output directory and
/// returns the session files written.
pub fn simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let r = cfg.resolve()?;
    let dir = cfg.output_dir.as_deref().ok_or_else(|| CliError::Usage("an output directory is required".into()))?;
    let sessions = gen_dataset(r.tech, &r.scenarios, r.sessions_per_scenario, &r.profile, &r.testbed)?;
    let files = write_sessions(dir, &sessions)?;
    write(&dir.join(MANIFEST), &manifest_text(cfg))?;
    Ok(files)
}

pub fn train_log_csv(log: &TrainLog) -> String {
    let mut out = String::from("epoch,F,alpha,beta,gamma\n");
    for e in &log.epochs {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.epoch,
            sig(e.f_after, ERROR_DIGITS),
            sig(e.alpha, ERROR_DIGITS),
            sig(e.beta, ERROR_DIGITS),
            sig(e.gamma, ERROR_DIGITS)
        );
    }
    out
}

/// Path of the training log written next to `model`.
pub fn log_path(model: &Path) -> PathBuf {
    let mut name = model.as_os_str().to_owned();
    name.push(".log.csv");
    PathBuf::from(name)
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub technology: Technology,
    pub train_sessions: usize,
    pub samples: usize,
    pub log: TrainLog,
}

/// Trains on every session of `data_dir` except `hold_out` and writes the
/// model plus its training log.
pub fn train(data_dir: &Path, hold_out: Option<&str>, model: &Path, cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.resolve()?;
    let (tech, sessions) = load_sessions(data_dir)?;
    if let Some(id) = hold_out {
        if !sessions.iter().any(|s| s.id == id) {
            return Err(CliError::Usage(format!("no session `{id}` in {}", data_dir.display())));
        }
    }
    let train_set: Vec<&Session> = sessions.iter().filter(|s| Some(s.id.as_str()) != hold_out).collect();
    if train_set.is_empty() {
        return Err(CliError::Usage("nothing left to train on".into()));
    }
    let samples = training_samples(&train_set)?;
    let (m, log) = fit(&samples, &cfg.train_config())?;
    if let Some(dir) = model.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write(model, &m.to_text())?;
    write(&log_path(model), &train_log_csv(&log))?;
    Ok(TrainOutcome { technology: tech, train_sessions: train_set.len(), samples: samples.len(), log })
}

/// Rounds errors the way `errors.csv` stores them, so a report rebuilt from
/// that file matches the original exactly.
fn quantize(run: &mut CvRun) {
    let q = |v: &mut f64| *v = sig(*v, ERROR_DIGITS).parse().expect("formatted number parses");
    for f in &mut run.folds {
        f.baseline_errors.iter_mut().for_each(q);
        f.icon_errors.iter_mut().for_each(q);
    }
}

pub fn errors_csv(tech: Technology, run: &CvRun, timestamps: &HashMap<String, Vec<f64>>) -> String {
    let mut out = format!("{ERRORS_HEADER}\n");
    for f in &run.folds {
        let ts = &timestamps[&f.held_out];
        for ((t, b), i) in ts.iter().zip(&f.baseline_errors).zip(&f.icon_errors) {
            let _ = writeln!(
                out,
                "{tech},{},{},{},{},{}",
                f.scenario,
                f.held_out,
                sig(*t, ERROR_DIGITS),
                sig(*b, ERROR_DIGITS),
                sig(*i, ERROR_DIGITS)
            );
        }
    }
    out
}

/// Writes `report.txt`, `folds.csv` and `cdf.csv` into `out`.
pub fn write_report(report: &EvalReport, out: &Path) -> Result<()> {
    create_dir(out)?;
    write(&out.join(REPORT_TEXT), &report.to_text())?;
    write(&out.join(FOLDS_CSV), &report.folds_csv())?;
    write(&out.join(CDF_CSV), &report.cdf_csv())
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub run: CvRun,
    pub report: Option<EvalReport>,
}

/// Full leave-one-session-out evaluation of `data_dir`. Every output file
/// is written even when folds fail; the failure is then returned as
/// [`CliError::FoldsFailed`].
pub fn evaluate(data_dir: &Path, cfg: &RunConfig, scenario: Option<Scenario>, out: &Path) -> Result<EvalOutcome> {
    let r = cfg.resolve()?;
    let (tech, sessions) = load_sessions(data_dir)?;
    if sessions.len() < 2 {
        return Err(CliError::Usage(format!(
            "cross-validation needs at least 2 sessions, {} holds {}",
            data_dir.display(),
            sessions.len()
        )));
    }
    if let Some(s) = scenario {
        if !sessions.iter().any(|x| x.scenario == s) {
            return Err(CliError::Usage(format!("no {s} sessions in {}", data_dir.display())));
        }
    }
    let mut run = run_cv_where(&sessions, tech, &r.cv, |s| scenario.is_none_or(|want| s.scenario == want))?;
    quantize(&mut run);
    let timestamps = sessions.iter().map(|s| (s.id.clone(), s.records().timestamps())).collect();
    create_dir(out)?;
    write(&out.join(ERRORS_CSV), &errors_csv(tech, &run, &timestamps))?;
    let total = run.folds.len() + run.failures.len();
    let report = if run.folds.is_empty() {
        let mut text = format!("WARNING: all {total} folds FAILED; nothing to report\n");
        for f in &run.failures {
            let _ = writeln!(text, "  {} ({}): {}", f.held_out, f.scenario, f.reason);
        }
        write(&out.join(REPORT_TEXT), &text)?;
        None
    } else {
        let report = make_report(tech, &run)?;
        write_report(&report, out)?;
        Some(report)
    };
    if !run.failures.is_empty() {
        return Err(CliError::FoldsFailed { failed: run.failures.len(), total });
    }
    Ok(EvalOutcome { run, report })
}

/// Reads an `errors.csv` written by [`evaluate`].
pub fn parse_errors(text: &str, file: &Path) -> Result<(Technology, CvRun)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut rows = rdr.records();
    match rows.next() {
        Some(Ok(h)) if h.iter().collect::<Vec<_>>().join(",") == ERRORS_HEADER => {}
        _ => return Err(CliError::parse(file, 1, format!("expected header `{ERRORS_HEADER}`"))),
    }
    let mut tech = None;
    let mut folds: Vec<FoldResult> = Vec::new();
    for row in rows {
        let row = row.map_err(|e| CliError::parse(file, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |msg: String| CliError::parse(file, line, msg);
        let t: Technology = row[0].parse().map_err(|e: icon_core::Error| bad(e.to_string()))?;
        if *tech.get_or_insert(t) != t {
            return Err(bad("mixed technologies".into()));
        }
        let scenario: Scenario = row[1].parse().map_err(|e: icon_core::Error| bad(e.to_string()))?;
        let fold = &row[2];
        if scenario_of(fold) != Some(scenario) {
            return Err(bad(format!("fold `{fold}` does not belong to scenario {scenario}")));
        }
        let num = |k: usize| -> Result<f64> {
            row[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("column {}: `{}` is not a finite number", k + 1, &row[k])))
        };
        num(3)?;
        let (b, i) = (num(4)?, num(5)?);
        if b < 0.0 || i < 0.0 {
            return Err(bad("negative error".into()));
        }
        match folds.last_mut() {
            Some(f) if f.held_out == fold => {
                f.baseline_errors.push(b);
                f.icon_errors.push(i);
            }
            _ => {
                if folds.iter().any(|f| f.held_out == fold) {
                    return Err(bad(format!("rows of fold `{fold}` are not contiguous")));
                }
                folds.push(FoldResult {
                    held_out: fold.to_string(),
                    scenario,
                    baseline_errors: vec![b],
                    icon_errors: vec![i],
                });
            }
        }
    }
    let tech = tech.ok_or_else(|| CliError::parse(file, 1, "no error rows"))?;
    Ok((tech, CvRun { folds, failures: Vec::new() }))
}

/// Rebuilds the report files from an `errors.csv`.
pub fn report(errors: &Path, out: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(errors).map_err(|e| CliError::io(errors, e))?;
    let (tech, run) = parse_errors(&text, errors)?;
    let report = make_report(tech, &run)?;
    write_report(&report, out)?;
    Ok(report)
}
