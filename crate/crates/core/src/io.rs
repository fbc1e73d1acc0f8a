//! CSV exchange formats. Every file may start with `#` comment lines that
//! carry the configuration it was produced from.

use std::io::Write;

use crate::cavity::ModeOrder;
use crate::coupling::CouplingSet;
use crate::error::{invalid, Error, Result};
use crate::knife_edge::{KnifeEdgeDataset, KnifeEdgeSample};
use crate::spectrum::TransmissionSpectrum;
use crate::sweep::{RowStatus, SweepRow};
use crate::units::MICRON;

pub const KNIFE_EDGE_COLUMNS: [&str; 3] = ["z_um", "x_um", "power_fraction"];
pub const COUPLING_COLUMNS: [&str; 3] = ["n", "m", "eta"];
pub const SPECTRUM_COLUMNS: [&str; 2] = ["detuning_Hz", "intensity"];
pub const SWEEP_COLUMNS: [&str; 9] = ["L_um", "w0_um", "z1_um", "fsr_GHz", "finesse", "eta00", "beta", "T00", "stable"];
pub const ETA_COLUMNS: [&str; 2] = ["L_um", "eta00"];

/// A parsed table: leading comment lines and numeric rows tagged with their line number.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub rows: Vec<(usize, Vec<f64>)>,
}

fn write_rows<W: Write>(out: W, comments: &[String], columns: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut out = out;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(columns).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a numeric CSV table whose header must equal `columns`.
pub fn read_table(text: &str, columns: &[&str]) -> Result<Table> {
    let comments: Vec<String> = text
        .lines()
        .take_while(|l| l.trim_start().starts_with('#'))
        .map(|l| l.trim_start().trim_start_matches('#').trim().to_string())
        .collect();
    let header_line = comments.len() + 1;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse {
        line: header_line,
        message: e.to_string(),
    })?;
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(Error::Parse {
            line: header_line,
            message: format!("empty input: expected header `{}`", columns.join(",")),
        });
    }
    if header.iter().ne(columns.iter().copied()) {
        return Err(Error::Parse {
            line: header_line,
            message: format!(
                "header `{}` does not match `{}`",
                header.iter().collect::<Vec<_>>().join(","),
                columns.join(",")
            ),
        });
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let values = rec
            .iter()
            .map(|v| {
                v.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("`{v}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, values));
    }
    Ok(Table { comments, rows })
}

pub fn write_knife_edge<W: Write>(out: W, comments: &[String], data: &KnifeEdgeDataset) -> Result<()> {
    let rows = data.samples.iter().map(|s| {
        vec![
            (s.z / MICRON).to_string(),
            (s.x / MICRON).to_string(),
            s.power_fraction.to_string(),
        ]
    });
    write_rows(out, comments, &KNIFE_EDGE_COLUMNS, rows)
}

pub fn read_knife_edge(text: &str) -> Result<(KnifeEdgeDataset, Vec<String>)> {
    let table = read_table(text, &KNIFE_EDGE_COLUMNS)?;
    let samples = table
        .rows
        .iter()
        .map(|(_, r)| KnifeEdgeSample {
            z: r[0] * MICRON,
            x: r[1] * MICRON,
            power_fraction: r[2],
        })
        .collect();
    Ok((KnifeEdgeDataset::new(samples)?, table.comments))
}

pub fn write_coupling<W: Write>(out: W, comments: &[String], set: &CouplingSet) -> Result<()> {
    let rows = set
        .iter()
        .map(|(o, e)| vec![o.n.to_string(), o.m.to_string(), e.to_string()]);
    write_rows(out, comments, &COUPLING_COLUMNS, rows)
}

pub fn read_coupling(text: &str) -> Result<(CouplingSet, Vec<String>)> {
    let table = read_table(text, &COUPLING_COLUMNS)?;
    let mut entries = std::collections::BTreeMap::new();
    let mut n_max = 0;
    for (line, r) in &table.rows {
        let order = |v: f64| {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as u32)
            } else {
                Err(Error::Parse {
                    line: *line,
                    message: format!("mode index {v} is not a non-negative integer"),
                })
            }
        };
        let o = ModeOrder::new(order(r[0])?, order(r[1])?);
        n_max = n_max.max(o.n).max(o.m);
        entries.insert(o, r[2]);
    }
    Ok((CouplingSet::from_entries(n_max, entries), table.comments))
}

pub fn write_spectrum<W: Write>(out: W, comments: &[String], sp: &TransmissionSpectrum) -> Result<()> {
    let rows = sp
        .detuning
        .iter()
        .zip(&sp.intensity)
        .map(|(x, y)| vec![x.to_string(), y.to_string()]);
    write_rows(out, comments, &SPECTRUM_COLUMNS, rows)
}

/// Reads a spectrum; `fsr` is attached for finesse evaluation.
pub fn read_spectrum(text: &str, fsr: Option<f64>) -> Result<(TransmissionSpectrum, Vec<String>)> {
    let table = read_table(text, &SPECTRUM_COLUMNS)?;
    if table.rows.is_empty() {
        return Err(invalid("spectrum has no samples"));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = table.rows.iter().map(|(_, r)| (r[0], r[1])).unzip();
    Ok((TransmissionSpectrum::new(x, y, fsr)?, table.comments))
}

/// Sweep lengths in µm, rounded to the picometre so grid steps print cleanly.
fn length_um(meters: f64) -> String {
    ((meters / MICRON * 1e6).round() / 1e6).to_string()
}

pub fn write_sweep<W: Write>(out: W, comments: &[String], rows: &[SweepRow]) -> Result<()> {
    let rows = rows.iter().map(|r| {
        vec![
            length_um(r.length),
            (r.waist_radius / MICRON).to_string(),
            (r.waist_position / MICRON).to_string(),
            (r.fsr / 1e9).to_string(),
            r.finesse.to_string(),
            r.eta00.to_string(),
            r.beta.to_string(),
            r.t00.to_string(),
            u8::from(r.status == RowStatus::Stable).to_string(),
        ]
    });
    write_rows(out, comments, &SWEEP_COLUMNS, rows)
}

/// Two-column `L_um,eta00` curve of the stable rows.
pub fn write_eta_curve<W: Write>(out: W, comments: &[String], rows: &[SweepRow]) -> Result<()> {
    let rows = rows
        .iter()
        .filter(|r| !r.eta00.is_nan())
        .map(|r| vec![length_um(r.length), r.eta00.to_string()]);
    write_rows(out, comments, &ETA_COLUMNS, rows)
}
