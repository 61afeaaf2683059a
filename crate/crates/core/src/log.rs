//! Per-tick time series and its CSV form.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::secondary::Role;

/// Column names of the CSV body, in order.
pub const CSV_COLUMNS: [&str; 13] = [
    "t",
    "ibr_id",
    "P_w",
    "Q_var",
    "V_volt",
    "omega_rad_s",
    "v_adj_volt",
    "x_est_volt",
    "pcc_v_volt",
    "load_p_w",
    "load_q_var",
    "consensus_rounds",
    "mode",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbrSample {
    /// Filtered active power, W.
    pub p: f64,
    /// Filtered reactive power, var.
    pub q: f64,
    /// Terminal voltage magnitude during the tick, V.
    pub v: f64,
    pub omega: f64,
    /// Secondary adjustment computed this tick, V.
    pub v_adj: f64,
    pub x: f64,
    pub mode: Role,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickRow {
    pub t: f64,
    pub ibrs: Vec<IbrSample>,
    pub pcc_v: f64,
    pub load_p: f64,
    pub load_q: f64,
    pub consensus_rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeSeriesLog {
    /// Comment lines written above the column header, without the `#` prefix.
    pub header: Vec<String>,
    pub rows: Vec<TickRow>,
}

impl TimeSeriesLog {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        if self.rows.is_empty() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                "log has no rows",
            ));
        }
        for line in &self.header {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "{}", CSV_COLUMNS.join(","))?;
        for row in &self.rows {
            for (i, s) in row.ibrs.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    sig9(row.t),
                    i + 1,
                    sig9(s.p),
                    sig9(s.q),
                    sig9(s.v),
                    sig9(s.omega),
                    sig9(s.v_adj),
                    sig9(s.x),
                    sig9(row.pcc_v),
                    sig9(row.load_p),
                    sig9(row.load_q),
                    row.consensus_rounds,
                    s.mode.as_str()
                )?;
            }
        }
        Ok(())
    }
}

/// Nine significant digits in scientific notation; negative zero prints as zero.
pub fn sig9(value: f64) -> String {
    format!("{:.8e}", value + 0.0)
}

pub fn emit_csv(log: &TimeSeriesLog, out_path: impl AsRef<Path>) -> io::Result<()> {
    if log.is_empty() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "log has no rows",
        ));
    }
    let mut out = BufWriter::new(File::create(out_path)?);
    log.write_csv(&mut out)?;
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_tick() -> TimeSeriesLog {
        TimeSeriesLog {
            header: vec!["scenario test".into()],
            rows: vec![TickRow {
                t: 0.0,
                ibrs: vec![
                    IbrSample {
                        p: 1.0e5,
                        q: -2.5e4,
                        v: 240.0,
                        omega: 376.99,
                        v_adj: -0.0,
                        x: 0.0,
                        mode: Role::ShareQ,
                    };
                    2
                ],
                pcc_v: 239.5,
                load_p: 2e5,
                load_q: -5e4,
                consensus_rounds: 0,
            }],
        }
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(sig9(240.0), "2.40000000e2");
        assert_eq!(sig9(-0.0), "0.00000000e0");
        assert_eq!(sig9(0.123456789123), "1.23456789e-1");
    }

    #[test]
    fn one_tick_log_has_header_and_rows() {
        let mut buf = Vec::new();
        one_tick().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# scenario test");
        assert_eq!(lines[1], CSV_COLUMNS.join(","));
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("0.00000000e0,1,1.00000000e5,-2.50000000e4,"));
        assert_eq!(lines[3].split(',').count(), CSV_COLUMNS.len());
    }

    #[test]
    fn empty_log_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = emit_csv(&TimeSeriesLog::default(), dir.path().join("x.csv")).unwrap_err();
        assert_eq!(err.kind(), io::ErrorKind::InvalidInput);
    }

    #[test]
    fn unwritable_path_is_an_error() {
        assert!(emit_csv(&one_tick(), "/nonexistent-dir/out.csv").is_err());
    }
}
