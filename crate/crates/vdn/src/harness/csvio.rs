//! CSV writers and strict loaders for the three export schemas.
//!
//! * curves:  `task,architecture,seed,episode,reward`
//! * summary: `task,architecture,auc_norm,final_norm,final_raw_mean,final_ci90`
//! * trace:   `step,q1,q2,q_total,reward,event_agent,event_kind`
//!
//! Numeric fields carry 9 significant decimal digits (enough to round-trip
//! every `f32` exactly); files are UTF-8 with LF line endings. Fields never
//! contain commas or quotes, so no quoting dialect is needed — the loaders
//! reject anything that would require one.

use std::path::Path;

use crate::error::{Result, VdnError};
use crate::gridworld::EventKind;
use crate::util::format_sig9;

use super::metrics::MetricsTable;
use super::{QTrace, QTraceRow, RunRecord};

pub const CURVES_HEADER: &str = "task,architecture,seed,episode,reward";
pub const SUMMARY_HEADER: &str = "task,architecture,auc_norm,final_norm,final_raw_mean,final_ci90";
pub const TRACE_HEADER: &str = "step,q1,q2,q_total,reward,event_agent,event_kind";

/// Writes via a temporary sibling then renames, so readers never observe a
/// half-written file and interrupted executions leave no truncated outputs.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| VdnError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| VdnError::io(path, e))
}

/// One parsed curves row.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub task: String,
    pub architecture: u8,
    pub seed: u64,
    pub episode: usize,
    pub reward: f64,
}

pub fn curves_csv_string(records: &[&RunRecord]) -> String {
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for r in records {
        for (i, &reward) in r.rewards.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.task,
                r.architecture,
                r.seed,
                i + 1,
                format_sig9(reward),
            ));
        }
    }
    out
}

pub fn write_curves_csv(path: &Path, records: &[&RunRecord]) -> Result<()> {
    atomic_write(path, curves_csv_string(records).as_bytes())
}

/// Rejects any carriage return (`lines()` would hide a `\r\n` ending).
fn reject_cr(text: &str) -> Result<()> {
    if let Some(pos) = text.find('\r') {
        let line = text[..pos].matches('\n').count() + 1;
        let col = pos - text[..pos].rfind('\n').map_or(0, |i| i + 1) + 1;
        return Err(VdnError::parse(line, col, "carriage return; files are LF-terminated"));
    }
    Ok(())
}

/// Splits a data line into exactly `n` fields, tagging each with its
/// 1-based starting column.
fn fields<'a>(line_no: usize, line: &'a str, n: usize) -> Result<Vec<(usize, &'a str)>> {
    let mut out = Vec::with_capacity(n);
    let mut col = 1;
    for field in line.split(',') {
        out.push((col, field));
        col += field.len() + 1;
    }
    if out.len() != n {
        return Err(VdnError::parse(
            line_no,
            1,
            format!("expected {n} comma-separated fields, got {}", out.len()),
        ));
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(
    line: usize,
    (col, raw): (usize, &str),
    what: &str,
) -> Result<T> {
    raw.parse().map_err(|_| VdnError::parse(line, col, format!("invalid {what}: {raw:?}")))
}

fn check_header(text: &str, expected: &str) -> Result<()> {
    match text.lines().next() {
        Some(h) if h == expected => Ok(()),
        Some(h) => Err(VdnError::parse(1, 1, format!("bad header {h:?}, expected {expected:?}"))),
        None => Err(VdnError::parse(1, 1, "empty file")),
    }
}

/// Parses curves CSV text, validating the full schema.
pub fn load_curves_csv_text(text: &str) -> Result<Vec<CurveRow>> {
    reject_cr(text)?;
    check_header(text, CURVES_HEADER)?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let line_no = idx + 1;
        if line.is_empty() {
            return Err(VdnError::parse(line_no, 1, "blank line inside data"));
        }
        let f = fields(line_no, line, 5)?;
        let (task_col, task) = f[0];
        if task.is_empty() || !task.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(VdnError::parse(line_no, task_col, format!("invalid task name {task:?}")));
        }
        let architecture: u8 = parse_field(line_no, f[1], "architecture")?;
        if !(1..=9).contains(&architecture) {
            return Err(VdnError::parse(line_no, f[1].0, "architecture out of range 1-9"));
        }
        let seed: u64 = parse_field(line_no, f[2], "seed")?;
        let episode: usize = parse_field(line_no, f[3], "episode")?;
        if episode == 0 {
            return Err(VdnError::parse(line_no, f[3].0, "episodes are 1-based"));
        }
        let reward: f64 = parse_field(line_no, f[4], "reward")?;
        if !reward.is_finite() {
            return Err(VdnError::parse(line_no, f[4].0, "non-finite reward"));
        }
        rows.push(CurveRow { task: task.to_string(), architecture, seed, episode, reward });
    }
    Ok(rows)
}

pub fn load_curves_csv(path: &Path) -> Result<Vec<CurveRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| VdnError::io(path, e))?;
    load_curves_csv_text(&text)
}

pub fn summary_csv_string(table: &MetricsTable) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for e in &table.entries {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.task,
            e.architecture,
            format_sig9(e.auc_norm),
            format_sig9(e.final_norm),
            format_sig9(e.final_raw_mean),
            format_sig9(e.final_ci90),
        ));
    }
    out
}

pub fn write_summary_csv(path: &Path, table: &MetricsTable) -> Result<()> {
    atomic_write(path, summary_csv_string(table).as_bytes())
}

pub fn trace_csv_string(trace: &QTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.rows {
        let (agent, kind) = match r.event {
            Some((agent, kind)) => (agent.to_string(), kind.name().to_string()),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{agent},{kind}\n",
            r.step,
            format_sig9(r.q1 as f64),
            format_sig9(r.q2 as f64),
            format_sig9(r.q_total as f64),
            format_sig9(r.reward as f64),
        ));
    }
    out
}

pub fn write_trace_csv(path: &Path, trace: &QTrace) -> Result<()> {
    atomic_write(path, trace_csv_string(trace).as_bytes())
}

fn parse_event_kind(line: usize, (col, raw): (usize, &str)) -> Result<EventKind> {
    for kind in
        [EventKind::SwitchGoal, EventKind::Pickup, EventKind::Dropoff, EventKind::Apple, EventKind::Lemon]
    {
        if kind.name() == raw {
            return Ok(kind);
        }
    }
    Err(VdnError::parse(line, col, format!("unknown event kind {raw:?}")))
}

/// Parses trace CSV text. Q values and rewards are parsed directly as `f32`
/// (single rounding), matching the precision they were recorded at.
pub fn load_trace_csv_text(text: &str) -> Result<Vec<QTraceRow>> {
    reject_cr(text)?;
    check_header(text, TRACE_HEADER)?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let line_no = idx + 1;
        let f = fields(line_no, line, 7)?;
        let step: u32 = parse_field(line_no, f[0], "step")?;
        let q1: f32 = parse_field(line_no, f[1], "q1")?;
        let q2: f32 = parse_field(line_no, f[2], "q2")?;
        let q_total: f32 = parse_field(line_no, f[3], "q_total")?;
        let reward: f32 = parse_field(line_no, f[4], "reward")?;
        for (col, v) in [(f[1].0, q1), (f[2].0, q2), (f[3].0, q_total), (f[4].0, reward)] {
            if !v.is_finite() {
                return Err(VdnError::parse(line_no, col, "non-finite value"));
            }
        }
        let event = match (f[5].1, f[6].1) {
            ("", "") => None,
            _ => {
                let agent: usize = parse_field(line_no, f[5], "event agent")?;
                if agent > 1 {
                    return Err(VdnError::parse(line_no, f[5].0, "event agent out of range"));
                }
                Some((agent, parse_event_kind(line_no, f[6])?))
            }
        };
        rows.push(QTraceRow { step, q1, q2, q_total, reward, event });
    }
    Ok(rows)
}

pub fn load_trace_csv(path: &Path) -> Result<Vec<QTraceRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| VdnError::io(path, e))?;
    load_trace_csv_text(&text)
}

#[cfg(test)]
mod tests {
    use super::super::metrics::build_metrics;
    use super::*;

    fn record(task: &str, arch: u8, seed: u64, rewards: Vec<f64>) -> RunRecord {
        RunRecord {
            architecture: arch,
            task: task.to_string(),
            seed,
            rewards,
            env_steps: 0,
            train_steps: 0,
            wall_secs: 0.0,
        }
    }

    #[test]
    fn curves_round_trip_preserves_stored_values() {
        let recs = vec![
            record("fetch_open", 3, 0, vec![1.0, -2.5, 1.0 / 3.0]),
            record("fetch_open", 3, 1, vec![0.0, 17.25, 1e-7]),
        ];
        let refs: Vec<&RunRecord> = recs.iter().collect();
        let text = curves_csv_string(&refs);
        assert!(text.starts_with(CURVES_HEADER));
        assert!(text.ends_with('\n') && !text.contains('\r'));
        let rows = load_curves_csv_text(&text).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].episode, 1);
        assert_eq!(rows[3].seed, 1);

        // Re-serialize what was loaded: stored values are already at 9
        // significant digits, so the bytes must be identical.
        let reloaded: Vec<RunRecord> = recs
            .iter()
            .map(|r| {
                let mut c = r.clone();
                c.rewards = rows
                    .iter()
                    .filter(|row| row.seed == r.seed)
                    .map(|row| row.reward)
                    .collect();
                c
            })
            .collect();
        let refs2: Vec<&RunRecord> = reloaded.iter().collect();
        assert_eq!(curves_csv_string(&refs2), text);
    }

    #[test]
    fn empty_record_set_writes_a_header_only_file() {
        assert_eq!(curves_csv_string(&[]), format!("{CURVES_HEADER}\n"));
        let rows = load_curves_csv_text(&format!("{CURVES_HEADER}\n")).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn curves_loader_rejects_malformed_input() {
        let good = "task,architecture,seed,episode,reward\nfetch_open,3,0,1,1.5\n";
        assert!(load_curves_csv_text(good).is_ok());
        for (bad, what) in [
            ("", "empty"),
            ("wrong,header\n", "header"),
            ("task,architecture,seed,episode,reward\nfetch_open,3,0,1\n", "field count"),
            ("task,architecture,seed,episode,reward\nfetch_open,12,0,1,1.5\n", "arch range"),
            ("task,architecture,seed,episode,reward\nfetch_open,3,0,0,1.5\n", "episode 0"),
            ("task,architecture,seed,episode,reward\nfetch_open,3,0,1,NaN\n", "NaN"),
            ("task,architecture,seed,episode,reward\nfetch open,3,0,1,1.5\n", "task name"),
            ("task,architecture,seed,episode,reward\nfetch_open,3,0,1,1.5\r\n", "CR"),
            ("task,architecture,seed,episode,reward\n\nfetch_open,3,0,1,1.5\n", "blank line"),
        ] {
            assert!(
                matches!(load_curves_csv_text(bad), Err(VdnError::Parse { .. })),
                "{what} was accepted"
            );
        }
    }

    #[test]
    fn loader_errors_point_at_the_offending_field() {
        let text = "task,architecture,seed,episode,reward\nfetch_open,3,0,1,oops\n";
        match load_curves_csv_text(text).unwrap_err() {
            VdnError::Parse { line, col, msg } => {
                assert_eq!(line, 2);
                assert_eq!(col, 18, "column of the reward field");
                assert!(msg.contains("reward"), "{msg}");
            }
            other => panic!("wrong error {other}"),
        }
    }

    #[test]
    fn summary_rows_follow_the_metrics_table_order() {
        let recs = vec![
            record("checkers", 1, 0, vec![1.0; 10]),
            record("switch_open", 1, 0, vec![1.0; 10]),
            record("switch_open", 3, 0, vec![2.0; 10]),
        ];
        let table = build_metrics(&recs, 5).unwrap();
        let text = summary_csv_string(&table);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SUMMARY_HEADER);
        assert!(lines[1].starts_with("switch_open,1,"));
        assert!(lines[2].starts_with("switch_open,3,1.0,1.0,"));
        assert!(lines[3].starts_with("checkers,1,1.0,1.0,"));
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn trace_round_trip_keeps_f32_values_bit_exact() {
        let rows = vec![
            QTraceRow {
                step: 1,
                q1: 0.1f32,
                q2: 1.0 / 3.0,
                q_total: 0.1f32 + 1.0f32 / 3.0,
                reward: 0.0,
                event: None,
            },
            QTraceRow {
                step: 2,
                q1: -7.25,
                q2: 3.5e-8,
                q_total: -7.25f32 + 3.5e-8f32,
                reward: 5.0,
                event: Some((1, EventKind::Dropoff)),
            },
        ];
        let trace = QTrace { task: "fetch_open".into(), rows: rows.clone() };
        let text = trace_csv_string(&trace);
        let back = load_trace_csv_text(&text).unwrap();
        assert_eq!(back, rows);
        for r in &back {
            assert_eq!(r.q_total, r.q1 + r.q2, "same-order f32 sum survives the CSV");
        }
    }

    #[test]
    fn trace_loader_rejects_inconsistent_event_columns() {
        let head = TRACE_HEADER;
        for bad in [
            format!("{head}\n1,0.0,0.0,0.0,0.0,2,pickup\n"),
            format!("{head}\n1,0.0,0.0,0.0,0.0,0,nonsense\n"),
            format!("{head}\n1,0.0,0.0,0.0,0.0,,pickup\n"),
            format!("{head}\n1,0.0,0.0,inf,0.0,,\n"),
        ] {
            assert!(
                matches!(load_trace_csv_text(&bad), Err(VdnError::Parse { .. })),
                "{bad:?} was accepted"
            );
        }
    }
}
