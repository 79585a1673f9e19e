//! One CSV file per session plus a `manifest.toml`.
//!
//! Measurements carry 9 significant digits and coordinates 6; numbers never
//! use an exponent and trailing zeros are dropped, so a file read back and
//! written again is byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use icon_core::domain::{BleRecord, Records, Scenario, Session, Technology, UwbRecord, BLE_CHANNELS, UWB_ANCHORS};
use icon_core::evaluation::{fold_order, sig};
use icon_core::geometry::{wrap_deg, Point2};

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.toml";
const MEASUREMENT_DIGITS: usize = 9;
const COORDINATE_DIGITS: usize = 6;

pub fn header(tech: Technology) -> String {
    let mut cols = vec!["t".to_string()];
    match tech {
        Technology::Ble => {
            cols.extend((1..=BLE_CHANNELS).map(|i| format!("rssi{i}")));
            cols.extend((1..=BLE_CHANNELS).map(|i| format!("aoa{i}")));
            cols.extend(["ble_x", "ble_y", "uwb_x", "uwb_y"].map(String::from));
        }
        Technology::Uwb => {
            cols.extend((1..=UWB_ANCHORS).map(|i| format!("cir{i}")));
            cols.extend((1..=UWB_ANCHORS).map(|i| format!("psa{i}")));
            cols.extend((1..=UWB_ANCHORS).map(|i| format!("d{i}")));
            cols.extend(["uwb_x", "uwb_y", "mocap_x", "mocap_y"].map(String::from));
        }
    }
    cols.join(",")
}

fn meas(v: f64) -> String {
    sig(v, MEASUREMENT_DIGITS)
}

fn coord(v: f64) -> String {
    sig(v, COORDINATE_DIGITS)
}

/// Rounding may carry an angle just below 180° onto 180°, outside the
/// reporting range; such values wrap to -180°.
fn angle(v: f64) -> String {
    let s = meas(v);
    match s.parse::<f64>() {
        Ok(r) if r >= 180.0 => meas(wrap_deg(r)),
        _ => s,
    }
}

fn point(p: &Point2) -> [String; 2] {
    [coord(p.x), coord(p.y)]
}

/// The session as CSV text, header included.
pub fn session_csv(session: &Session) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let tech = session.technology();
    w.write_record(header(tech).split(',')).expect("in-memory write");
    match session.records() {
        Records::Ble(rs) => {
            for r in rs {
                let mut row = vec![meas(r.timestamp)];
                row.extend(r.rssi.iter().map(|v| meas(*v)));
                row.extend(r.aoa.iter().map(|v| angle(*v)));
                row.extend(point(&r.baseline));
                row.extend(point(&r.truth));
                w.write_record(&row).expect("in-memory write");
            }
        }
        Records::Uwb(rs) => {
            for r in rs {
                let mut row = vec![meas(r.timestamp)];
                row.extend(r.cir.iter().map(|v| meas(*v)));
                row.extend(r.psa.iter().map(u32::to_string));
                row.extend(r.dist.iter().map(|v| meas(*v)));
                row.extend(point(&r.baseline));
                row.extend(point(&r.truth));
                w.write_record(&row).expect("in-memory write");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
}

/// Scenario encoded in an id of the form `<scenario>-<k>`.
pub fn scenario_of(id: &str) -> Option<Scenario> {
    id.rsplit_once('-').and_then(|(s, _)| s.parse().ok())
}

/// Parses one session file. `id` names the session; errors cite `file` and
/// the 1-based line.
pub fn parse_session(id: &str, text: &str, file: &Path) -> Result<Session> {
    let scenario = scenario_of(id)
        .ok_or_else(|| CliError::parse(file, 0, format!("session id `{id}` does not start with a scenario name")))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut rows = rdr.records();
    let head = match rows.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(csv_error(file, e)),
        None => return Err(CliError::parse(file, 1, "empty file")),
    };
    let head: Vec<&str> = head.iter().collect();
    let tech = [Technology::Ble, Technology::Uwb]
        .into_iter()
        .find(|t| head.join(",") == header(*t))
        .ok_or_else(|| CliError::parse(file, 1, "header matches neither the BLE nor the UWB schema"))?;

    let mut values = Vec::new();
    let mut ble = Vec::new();
    let mut uwb = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for row in rows {
        let row = row.map_err(|e| csv_error(file, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |msg: String| CliError::parse(file, line, msg);
        values.clear();
        for (k, field) in row.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| bad(format!("column {}: `{field}` is not a number", k + 1)))?;
            if !v.is_finite() {
                return Err(bad(format!("column {}: `{field}` is not finite", k + 1)));
            }
            values.push(v);
        }
        let t = values[0];
        if t <= last_t {
            return Err(bad(format!("timestamp {t} does not increase")));
        }
        last_t = t;
        let pt = |i: usize| Point2::new(values[i], values[i + 1]);
        match tech {
            Technology::Ble => {
                let mut rssi = [0.0; BLE_CHANNELS];
                let mut aoa = [0.0; BLE_CHANNELS];
                rssi.copy_from_slice(&values[1..1 + BLE_CHANNELS]);
                aoa.copy_from_slice(&values[1 + BLE_CHANNELS..1 + 2 * BLE_CHANNELS]);
                let r = BleRecord { timestamp: t, rssi, aoa, baseline: pt(17), truth: pt(19) };
                r.validate().map_err(|e| bad(e.to_string()))?;
                ble.push(r);
            }
            Technology::Uwb => {
                let mut cir = [0.0; UWB_ANCHORS];
                let mut psa = [0u32; UWB_ANCHORS];
                let mut dist = [0.0; UWB_ANCHORS];
                cir.copy_from_slice(&values[1..5]);
                for (k, p) in psa.iter_mut().enumerate() {
                    let v = values[5 + k];
                    if v.fract() != 0.0 || !(0.0..=u32::MAX as f64).contains(&v) {
                        return Err(bad(format!("psa{}: `{v}` is not a symbol count", k + 1)));
                    }
                    *p = v as u32;
                }
                dist.copy_from_slice(&values[9..13]);
                let r = UwbRecord { timestamp: t, cir, psa, dist, baseline: pt(13), truth: pt(15) };
                r.validate().map_err(|e| bad(e.to_string()))?;
                uwb.push(r);
            }
        }
    }
    let records = match tech {
        Technology::Ble => Records::Ble(ble),
        Technology::Uwb => Records::Uwb(uwb),
    };
    if records.is_empty() {
        return Err(CliError::parse(file, 1, "no data rows"));
    }
    Ok(Session::new(id, scenario, records)?)
}

fn csv_error(file: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    let msg = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} columns, found {len}")
        }
        _ => e.to_string(),
    };
    CliError::parse(file, line, msg)
}

/// Writes every session as `<id>.csv` into `dir`, creating it if needed.
pub fn write_sessions(dir: &Path, sessions: &[Session]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    sessions
        .iter()
        .map(|s| {
            let path = dir.join(format!("{}.csv", s.id));
            fs::write(&path, session_csv(s)).map_err(|e| CliError::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Reads every `*.csv` in `dir`, ordered by session id.
pub fn load_sessions(dir: &Path) -> Result<(Technology, Vec<Session>)> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            files.push(path);
        }
    }
    let mut sessions = Vec::with_capacity(files.len());
    for path in files {
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        sessions.push(parse_session(&id, &text, &path)?);
    }
    sessions.sort_by(|a, b| fold_order(&a.id, &b.id));
    let Some(first) = sessions.first() else {
        return Err(CliError::Usage(format!("{} holds no session files", dir.display())));
    };
    let tech = first.technology();
    if let Some(s) = sessions.iter().find(|s| s.technology() != tech) {
        return Err(CliError::Usage(format!("{} mixes {tech} and {} sessions ({})", dir.display(), s.technology(), s.id)));
    }
    Ok((tech, sessions))
}
