//! CSV emission of backtest results.
//!
//! Floats are written in their shortest round-trip form, so re-reading an
//! equity curve reproduces the realized returns bit for bit.

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::BacktestReport;

fn write_comments<W: Write>(w: &mut W, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    Ok(())
}

/// Columns `time, portfolio_return, cumulative_return`.
pub fn write_equity_curve<W: Write>(report: &BacktestReport, mut out: W, comments: &[String]) -> Result<()> {
    write_comments(&mut out, comments)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "portfolio_return", "cumulative_return"])?;
    let mut cum = 0.0;
    for (time, r) in report.return_times.iter().zip(&report.portfolio_returns) {
        cum += r;
        w.write_record([time.as_str(), &r.to_string(), &cum.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format `rebalance_time, asset_id, weight`.
pub fn write_weights_history<W: Write>(report: &BacktestReport, mut out: W, comments: &[String]) -> Result<()> {
    write_comments(&mut out, comments)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rebalance_time", "asset_id", "weight"])?;
    for rec in &report.weights_history {
        for (id, x) in report.asset_ids.iter().zip(&rec.weights) {
            w.write_record([rec.rebalance_time.as_str(), id, &x.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// An equity curve read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EquityCurve {
    pub times: Vec<String>,
    pub returns: Vec<f64>,
}

pub fn read_equity_curve<R: Read>(input: R) -> Result<EquityCurve> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut times = Vec::new();
    let mut returns = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let value = rec.get(1).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| Error::Data {
            path: "equity curve".into(),
            line: rec.position().map_or(i + 2, |p| p.line() as usize),
            message: "missing or malformed portfolio_return".into(),
        })?;
        times.push(rec.get(0).unwrap_or_default().to_string());
        returns.push(value);
    }
    Ok(EquityCurve { times, returns })
}
