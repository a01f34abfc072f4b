//! CSV tables and plot-ready long-format rows.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::discourse::{PositionRow, QuartileRow};
use super::retention::{RetentionRole, RetentionTable};
use crate::error::Result;
use crate::format::{Provenance, TABLE_FORMAT};

/// One point of a figure: `figure,series,x,y,ci_low,ci_high,n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub figure: String,
    pub series: String,
    pub x: String,
    pub y: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
}

fn csv_writer<W: Write>(mut writer: W, provenance: &Provenance) -> Result<csv::Writer<W>> {
    writeln!(writer, "{}", provenance.csv_comment(TABLE_FORMAT))?;
    Ok(csv::Writer::from_writer(writer))
}

/// `group,n,retained,fraction,ci_low,ci_high`.
pub fn write_retention_csv<W: Write>(table: &RetentionTable, writer: W, provenance: &Provenance) -> Result<()> {
    let mut w = csv_writer(writer, provenance)?;
    w.write_record(["group", "n", "retained", "fraction", "ci_low", "ci_high"])?;
    for r in &table.rows {
        w.write_record([
            r.group.clone(),
            r.n_users.to_string(),
            r.n_retained.to_string(),
            r.fraction.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `position,n,md,fraction_md,ci_low,ci_high`.
pub fn write_positions_csv<W: Write>(rows: &[PositionRow], writer: W, provenance: &Provenance) -> Result<()> {
    let mut w = csv_writer(writer, provenance)?;
    w.write_record(["position", "n", "md", "fraction_md", "ci_low", "ci_high"])?;
    for r in rows {
        w.write_record([
            r.position.to_string(),
            r.n_threads.to_string(),
            r.n_md.to_string(),
            r.fraction_md.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `quartile,delta_min_s,delta_max_s,n,retained,fraction,ci_low,ci_high`.
pub fn write_quartiles_csv<W: Write>(rows: &[QuartileRow], writer: W, provenance: &Provenance) -> Result<()> {
    let mut w = csv_writer(writer, provenance)?;
    w.write_record(["quartile", "delta_min_s", "delta_max_s", "n", "retained", "fraction", "ci_low", "ci_high"])?;
    for r in rows {
        w.write_record([
            r.quartile.to_string(),
            r.delta_min_s.to_string(),
            r.delta_max_s.to_string(),
            r.n_users.to_string(),
            r.n_retained.to_string(),
            r.fraction.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn retention_long_rows(table: &RetentionTable) -> Vec<LongRow> {
    let figure = match table.role {
        RetentionRole::Seeker => "seeker_retention",
        RetentionRole::PeerSupporter => "peer_supporter_retention",
    };
    table
        .rows
        .iter()
        .map(|r| LongRow {
            figure: figure.to_string(),
            series: table.group_by.to_string(),
            x: r.group.clone(),
            y: r.fraction,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            n: r.n_users,
        })
        .collect()
}

pub fn position_long_rows(rows: &[PositionRow]) -> Vec<LongRow> {
    rows.iter()
        .map(|r| LongRow {
            figure: "md_by_seeker_position".to_string(),
            series: "mutual_discourse".to_string(),
            x: r.position.to_string(),
            y: r.fraction_md,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            n: r.n_threads,
        })
        .collect()
}

pub fn quartile_long_rows(rows: &[QuartileRow]) -> Vec<LongRow> {
    rows.iter()
        .map(|r| LongRow {
            figure: "peer_supporter_retention_by_response_quartile".to_string(),
            series: "peer_supporter".to_string(),
            x: format!("Q{}", r.quartile),
            y: r.fraction,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            n: r.n_users,
        })
        .collect()
}

pub fn write_long_csv<W: Write>(rows: &[LongRow], writer: W, provenance: &Provenance) -> Result<()> {
    let mut w = csv_writer(writer, provenance)?;
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["figure", "series", "x", "y", "ci_low", "ci_high", "n"])?;
    }
    w.flush()?;
    Ok(())
}
