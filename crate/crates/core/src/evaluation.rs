//! Leave-one-session-out cross-validation, error statistics, the two-sample
//! Kolmogorov–Smirnov test and report assembly.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::calibration::{calibrate_session, train, training_samples, CalibModel, TrainConfig};
use crate::domain::{Scenario, Session, Technology};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::smoothing::{moving_average, DEFAULT_WINDOW};

/// One cross-validation fold: indices into the session list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: usize,
}

/// `N` folds for `N` sessions; fold `i` holds out session `i`.
pub fn loso_split(sessions: &[Session]) -> Result<Vec<Fold>> {
    let n = sessions.len();
    if n < 2 {
        return Err(Error::NotEnoughSessions { needed: 2, got: n });
    }
    Ok((0..n).map(|test| Fold { train: (0..n).filter(|&i| i != test).collect(), test }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    pub train: TrainConfig,
    /// Moving-average window applied to baseline and ICON tracks alike.
    pub window: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { train: TrainConfig::default(), window: DEFAULT_WINDOW }
    }
}

/// Per-record errors of a held-out session, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub held_out: String,
    pub scenario: Scenario,
    pub baseline_errors: Vec<f64>,
    pub icon_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldFailure {
    pub held_out: String,
    pub scenario: Scenario,
    pub reason: String,
}

/// Outcome of a cross-validation run. Failed folds are listed separately
/// and never contribute errors.
#[derive(Debug, Clone, PartialEq)]
pub struct CvRun {
    pub folds: Vec<FoldResult>,
    pub failures: Vec<FoldFailure>,
}

impl CvRun {
    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

fn smoothed_errors(track: &[Point2], truths: &[Point2], window: usize) -> Result<Vec<f64>> {
    Ok(moving_average(track, window)?.iter().zip(truths).map(|(p, t)| p.distance(t)).collect())
}

/// Baseline errors of a session after smoothing its stored baseline track.
pub fn baseline_errors(session: &Session, window: usize) -> Result<Vec<f64>> {
    let r = session.records();
    smoothed_errors(&r.baselines(), &r.truths(), window)
}

/// Trains on `train` and scores the held-out `test` session.
pub fn run_fold(train_set: &[&Session], test: &Session, cfg: &CvConfig) -> Result<(FoldResult, CalibModel)> {
    let samples = training_samples(train_set)?;
    let (model, _) = train(&samples, &cfg.train)?;
    let icon = calibrate_session(&model, test, cfg.window)?;
    let truths = test.records().truths();
    let icon_errors = icon.iter().zip(&truths).map(|(p, t)| p.distance(t)).collect();
    let result = FoldResult {
        held_out: test.id.clone(),
        scenario: test.scenario,
        baseline_errors: baseline_errors(test, cfg.window)?,
        icon_errors,
    };
    Ok((result, model))
}

/// Runs every leave-one-session-out fold. Folds run in parallel; the
/// output is ordered by held-out session id.
pub fn run_cv(sessions: &[Session], tech: Technology, cfg: &CvConfig) -> Result<CvRun> {
    run_cv_where(sessions, tech, cfg, |_| true)
}

/// Like [`run_cv`], but only folds whose held-out session passes `held_out`
/// are run. Training sets still draw on every other session.
pub fn run_cv_where(
    sessions: &[Session],
    tech: Technology,
    cfg: &CvConfig,
    held_out: impl Fn(&Session) -> bool + Sync,
) -> Result<CvRun> {
    let mut folds = loso_split(sessions)?;
    folds.retain(|f| held_out(&sessions[f.test]));
    if folds.is_empty() {
        return Err(Error::InvalidInput("no session matches the fold filter".into()));
    }
    if let Some(s) = sessions.iter().find(|s| s.technology() != tech) {
        return Err(Error::InvalidInput(format!("session {} is {} but {tech} was requested", s.id, s.technology())));
    }
    if cfg.window == 0 {
        return Err(Error::InvalidInput("moving-average window must be >= 1".into()));
    }
    cfg.train.validate()?;
    let outcomes: Vec<_> = folds
        .par_iter()
        .map(|fold| {
            let train_set: Vec<&Session> = fold.train.iter().map(|&i| &sessions[i]).collect();
            let test = &sessions[fold.test];
            run_fold(&train_set, test, cfg).map(|(r, _)| r).map_err(|e| FoldFailure {
                held_out: test.id.clone(),
                scenario: test.scenario,
                reason: e.to_string(),
            })
        })
        .collect();
    let mut run = CvRun { folds: Vec::new(), failures: Vec::new() };
    for o in outcomes {
        match o {
            Ok(r) => run.folds.push(r),
            Err(f) => run.failures.push(f),
        }
    }
    run.folds.sort_by(|a, b| fold_order(&a.held_out, &b.held_out));
    run.failures.sort_by(|a, b| fold_order(&a.held_out, &b.held_out));
    Ok(run)
}

/// Orders ids like `walking-2` < `walking-10` by comparing trailing numbers
/// numerically.
pub fn fold_order(a: &str, b: &str) -> std::cmp::Ordering {
    fn split(s: &str) -> (&str, Option<u64>) {
        match s.rsplit_once('-') {
            Some((head, n)) => match n.parse() {
                Ok(n) => (head, Some(n)),
                Err(_) => (s, None),
            },
            None => (s, None),
        }
    }
    split(a).cmp(&split(b)).then_with(|| a.cmp(b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
}

/// Two-sample Kolmogorov–Smirnov test. `p` comes from the asymptotic
/// Kolmogorov distribution at `√n_e · D`, `n_e = n_a n_b / (n_a + n_b)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("sample contains NaN".into()));
    }
    let d = ks_statistic(a, b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ne = na * nb / (na + nb);
    Ok(KsResult { d, p: kolmogorov_q(ne.sqrt() * d) })
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Largest ECDF gap, evaluated right after every distinct value.
fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    d
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // the alternating series converges slowly here; use the dual form
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=8).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Baseline and ICON statistics over a set of records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub records: usize,
    pub baseline_mean: f64,
    pub icon_mean: f64,
    pub baseline_median: f64,
    pub icon_median: f64,
}

impl Summary {
    fn of(baseline: &[f64], icon: &[f64]) -> Self {
        Self {
            records: baseline.len(),
            baseline_mean: mean(baseline),
            icon_mean: mean(icon),
            baseline_median: median(baseline),
            icon_median: median(icon),
        }
    }

    /// `1 − icon/baseline`; `None` when the baseline mean is zero.
    pub fn reduction(&self) -> Option<f64> {
        reduction(self.baseline_mean, self.icon_mean)
    }
}

pub fn reduction(baseline_mean: f64, icon_mean: f64) -> Option<f64> {
    (baseline_mean > 0.0 && baseline_mean.is_finite() && icon_mean.is_finite()).then(|| 1.0 - icon_mean / baseline_mean)
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let s = sorted(v);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldRow {
    pub scenario: Scenario,
    pub fold: String,
    pub baseline_mean: f64,
    pub icon_mean: f64,
    pub ks: KsResult,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfPoint {
    pub error: f64,
    pub baseline: f64,
    pub icon: f64,
}

/// Number of points in [`EvalReport::cdf`].
pub const CDF_POINTS: usize = 201;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub technology: Technology,
    pub scenarios: Vec<(Scenario, Summary)>,
    pub combined: Summary,
    /// Pooled baseline errors against pooled ICON errors.
    pub ks: KsResult,
    pub folds: Vec<FoldRow>,
    pub cdf: Vec<CdfPoint>,
    pub failures: Vec<FoldFailure>,
}

pub fn make_report(technology: Technology, run: &CvRun) -> Result<EvalReport> {
    if run.folds.is_empty() {
        return Err(Error::InvalidInput("no successful fold to report".into()));
    }
    for f in &run.folds {
        let ok = f.baseline_errors.len() == f.icon_errors.len()
            && !f.baseline_errors.is_empty()
            && f.baseline_errors.iter().chain(&f.icon_errors).all(|e| *e >= 0.0 && e.is_finite());
        if !ok {
            return Err(Error::InvalidInput(format!("fold {} has malformed errors", f.held_out)));
        }
    }
    let pool = |pick: &dyn Fn(&FoldResult) -> bool| {
        let mut b = Vec::new();
        let mut i = Vec::new();
        for f in run.folds.iter().filter(|f| pick(f)) {
            b.extend_from_slice(&f.baseline_errors);
            i.extend_from_slice(&f.icon_errors);
        }
        (b, i)
    };
    let scenarios = Scenario::ALL
        .iter()
        .filter_map(|&s| {
            let (b, i) = pool(&|f| f.scenario == s);
            (!b.is_empty()).then(|| (s, Summary::of(&b, &i)))
        })
        .collect();
    let (all_b, all_i) = pool(&|_| true);
    let folds = run
        .folds
        .iter()
        .map(|f| {
            Ok(FoldRow {
                scenario: f.scenario,
                fold: f.held_out.clone(),
                baseline_mean: mean(&f.baseline_errors),
                icon_mean: mean(&f.icon_errors),
                ks: ks_two_sample(&f.baseline_errors, &f.icon_errors)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        technology,
        scenarios,
        combined: Summary::of(&all_b, &all_i),
        ks: ks_two_sample(&all_b, &all_i)?,
        folds,
        cdf: cdf_samples(&all_b, &all_i),
        failures: run.failures.clone(),
    })
}

/// Both ECDFs on an even grid from 0 to the largest error.
fn cdf_samples(baseline: &[f64], icon: &[f64]) -> Vec<CdfPoint> {
    let (b, i) = (sorted(baseline), sorted(icon));
    let top = b.last().copied().unwrap_or(0.0).max(i.last().copied().unwrap_or(0.0));
    let ecdf = |s: &[f64], x: f64| s.partition_point(|v| *v <= x) as f64 / s.len() as f64;
    (0..CDF_POINTS)
        .map(|k| {
            let x = top * k as f64 / (CDF_POINTS - 1) as f64;
            CdfPoint { error: x, baseline: ecdf(&b, x), icon: ecdf(&i, x) }
        })
        .collect()
}

/// Mean errors for one table row, `None` where a scenario was not run.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub walk: Option<(f64, f64)>,
    pub trolley: Option<(f64, f64)>,
}

impl TableRow {
    pub fn from_report(r: &EvalReport) -> Self {
        let get = |s| r.scenarios.iter().find(|(x, _)| *x == s).map(|(_, m)| (m.baseline_mean, m.icon_mean));
        Self { label: r.technology.to_string().to_uppercase(), walk: get(Scenario::Walking), trolley: get(Scenario::Trolley) }
    }
}

/// Walk/Trolley × Baseline/ICON table of mean errors.
pub fn render_table(rows: &[TableRow]) -> String {
    let cell = |v: Option<(f64, f64)>| match v {
        Some((b, i)) => format!("{:>10} {:>10}", format!("{b:.4}m"), format!("{i:.4}m")),
        None => format!("{:>10} {:>10}", "-", "-"),
    };
    let mut out = String::new();
    let _ = writeln!(out, "{:<6} {:^21} {:^21}", "", "Walk", "Trolley");
    let _ = writeln!(out, "{:<6} {:>10} {:>10} {:>10} {:>10}", "", "Baseline", "ICON", "Baseline", "ICON");
    for r in rows {
        let _ = writeln!(out, "{:<6} {} {}", r.label, cell(r.walk), cell(r.trolley));
    }
    out
}

pub fn format_reduction(r: Option<f64>) -> String {
    match r {
        Some(r) => format!("{:.1}%", 100.0 * r),
        None => "n/a".into(),
    }
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if !self.failures.is_empty() {
            let _ = writeln!(out, "WARNING: {} fold(s) FAILED and are excluded from every figure below:", self.failures.len());
            for f in &self.failures {
                let _ = writeln!(out, "  {} ({}): {}", f.held_out, f.scenario, f.reason);
            }
            out.push('\n');
        }
        let _ = writeln!(out, "Mean positioning error, {} folds\n", self.folds.len());
        out.push_str(&render_table(&[TableRow::from_report(self)]));
        out.push('\n');
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>12} {:>10} {:>10} {:>12} {:>10}",
            "scenario", "records", "baseline_m", "icon_m", "reduction", "baseline_med", "icon_med"
        );
        let rows = self.scenarios.iter().map(|(s, m)| (s.to_string(), m)).chain([("combined".to_string(), &self.combined)]);
        for (name, m) in rows {
            let _ = writeln!(
                out,
                "{:<10} {:>8} {:>12.4} {:>10.4} {:>10} {:>12.4} {:>10.4}",
                name,
                m.records,
                m.baseline_mean,
                m.icon_mean,
                format_reduction(m.reduction()),
                m.baseline_median,
                m.icon_median
            );
        }
        let _ = writeln!(out, "\nKolmogorov-Smirnov, baseline vs ICON: D = {:.4}, p = {:.3e}\n", self.ks.d, self.ks.p);
        let _ = writeln!(out, "{:<10} {:<14} {:>12} {:>10} {:>8} {:>10}", "scenario", "fold", "baseline_m", "icon_m", "ks_D", "ks_p");
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{:<10} {:<14} {:>12.4} {:>10.4} {:>8.4} {:>10.3e}",
                f.scenario, f.fold, f.baseline_mean, f.icon_mean, f.ks.d, f.ks.p
            );
        }
        out
    }

    pub fn folds_csv(&self) -> String {
        let mut out = String::from("scenario,fold,baseline_mean_m,icon_mean_m,ks_D,ks_p\n");
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                f.scenario,
                f.fold,
                sig(f.baseline_mean, 6),
                sig(f.icon_mean, 6),
                sig(f.ks.d, 6),
                sig(f.ks.p, 6)
            );
        }
        out
    }

    pub fn cdf_csv(&self) -> String {
        let mut out = String::from("error_m,baseline_cdf,icon_cdf\n");
        for p in &self.cdf {
            let _ = writeln!(out, "{},{},{}", sig(p.error, 6), sig(p.baseline, 6), sig(p.icon, 6));
        }
        out
    }
}

/// Decimal rendering with `digits` significant digits and no exponent;
/// trailing zeros are dropped and `-0` prints as `0`.
pub fn sig(v: f64, digits: usize) -> String {
    assert!(digits > 0);
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    // take the exponent after rounding, so 9.99…→10 gets one fewer decimal
    let e = format!("{:.*e}", digits - 1, v);
    let exp: i32 = e.rsplit_once('e').and_then(|(_, x)| x.parse().ok()).unwrap_or(0);
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.truncate(s.trim_end_matches('0').len());
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}
