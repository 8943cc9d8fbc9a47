//! Per-round CSV and JSON summary artifacts.

use std::fmt::Write as _;
use std::path::Path;

use crate::environment::RoundRecord;
use crate::error::{Error, Result};
use crate::harness::ExperimentSummary;

pub const CSV_HEADER: &str = "t,chosen,reward,instant_regret,cum_regret,elapsed_ns";

/// Render records as CSV. With `with_timing = false` the `elapsed_ns`
/// column is written as `0` so the file is a pure function of the config.
pub fn records_to_csv(records: &[RoundRecord], with_timing: bool) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    let mut cum = 0.0;
    for r in records {
        cum += r.instant_regret;
        let elapsed = if with_timing { r.elapsed_ns } else { 0 };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t, r.chosen, r.reward, r.instant_regret, cum, elapsed
        );
    }
    out
}

pub fn emit_csv(records: &[RoundRecord], path: &Path, with_timing: bool) -> Result<()> {
    std::fs::write(path, records_to_csv(records, with_timing)).map_err(|e| Error::io(path, e))
}

/// A parsed CSV row: the record fields plus the stored cumulative regret.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub record: RoundRecord,
    pub cum_regret: f64,
}

pub fn parse_csv(text: &str, origin: &Path) -> Result<Vec<CsvRow>> {
    let perr = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(perr(1, format!("expected header `{CSV_HEADER}`"))),
    }
    lines
        .map(|(i, line)| {
            let lineno = i + 1;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(perr(lineno, format!("expected 6 fields, got {}", f.len())));
            }
            let int = |s: &str| s.parse::<u64>().map_err(|_| perr(lineno, format!("bad integer `{s}`")));
            let real = |s: &str| s.parse::<f64>().map_err(|_| perr(lineno, format!("bad number `{s}`")));
            Ok(CsvRow {
                record: RoundRecord {
                    t: int(f[0])? as usize,
                    chosen: int(f[1])? as usize,
                    reward: real(f[2])?,
                    instant_regret: real(f[3])?,
                    ucb_gap: 0.0,
                    elapsed_ns: int(f[5])?,
                },
                cum_regret: real(f[4])?,
            })
        })
        .collect()
}

pub fn emit_summary(summary: &ExperimentSummary, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::InvalidInput(format!("summary serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: usize, chosen: usize, reward: f64, regret: f64) -> RoundRecord {
        RoundRecord {
            t,
            chosen,
            reward,
            instant_regret: regret,
            ucb_gap: 0.0,
            elapsed_ns: 1234,
        }
    }

    #[test]
    fn empty_is_header_only() {
        assert_eq!(records_to_csv(&[], true), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn round_trip_and_prefix_sums() {
        let records = vec![
            rec(1, 2, 0.123_456_789_012_345_6, 0.1),
            rec(2, 0, -0.5, 0.0),
            rec(3, 1, 1e-17, 0.3333333333333333),
        ];
        let text = records_to_csv(&records, true);
        assert!(text.ends_with('\n'));
        let rows = parse_csv(&text, Path::new("x.csv")).unwrap();
        let mut cum = 0.0;
        for (row, r) in rows.iter().zip(&records) {
            assert_eq!(&row.record, r);
            cum += r.instant_regret;
            assert_eq!(row.cum_regret, cum);
        }
        let untimed = parse_csv(&records_to_csv(&records, false), Path::new("y.csv")).unwrap();
        assert!(untimed.iter().all(|r| r.record.elapsed_ns == 0));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let bad = format!("{CSV_HEADER}\n1,0,0.5,0,0,1\n2,0,abc,0,0,1\n");
        match parse_csv(&bad, Path::new("b.csv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
