//! Labeled CSV blocks for exchanging state-space models.
//!
//! ```text
//! # psstune state-space v1
//! [A]
//! ,G1.dw,G1.eq_p
//! G1.dw,-0.1,0.2
//! ...
//! [B]
//! ,G1.vref
//! ...
//! ```
//! Each block starts with its column labels; every data row starts with its
//! row label. Values use the shortest round-trip decimal form.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::StateSpaceModel;
use crate::error::{Error, Result};

const HEADER: &str = "# psstune state-space v1";

fn write_block(out: &mut String, name: &str, m: &DMatrix<f64>, rows: &[String], cols: &[String]) {
    let _ = writeln!(out, "[{name}]");
    let _ = writeln!(out, ",{}", cols.join(","));
    for (i, r) in rows.iter().enumerate() {
        let vals: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        if vals.is_empty() {
            let _ = writeln!(out, "{r}");
        } else {
            let _ = writeln!(out, "{r},{}", vals.join(","));
        }
    }
}

pub fn write_state_space(ss: &StateSpaceModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    write_block(&mut out, "A", &ss.a, &ss.state_labels, &ss.state_labels);
    write_block(&mut out, "B", &ss.b, &ss.state_labels, &ss.input_labels);
    write_block(&mut out, "C", &ss.c, &ss.output_labels, &ss.state_labels);
    write_block(&mut out, "D", &ss.d, &ss.output_labels, &ss.input_labels);
    out
}

struct Block {
    cols: Vec<String>,
    rows: Vec<String>,
    data: Vec<Vec<f64>>,
}

fn split_labels(line: &str) -> Vec<String> {
    let rest = line.strip_prefix(',').unwrap_or(line);
    if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',').map(|s| s.trim().to_string()).collect()
    }
}

pub fn read_state_space(text: &str) -> Result<StateSpaceModel> {
    let mut blocks: Vec<(String, Block)> = Vec::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let mut pending: Option<(String, Block)> = None;
    while let Some((no, line)) = lines.next() {
        let line = line.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            if let Some(b) = pending.take() {
                blocks.push(b);
            }
            let (_, header) = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("line {}: block [{name}] has no header", no + 1)))?;
            pending = Some((name.to_string(), Block { cols: split_labels(header.trim()), rows: vec![], data: vec![] }));
            continue;
        }
        let (_, block) =
            pending.as_mut().ok_or_else(|| Error::Parse(format!("line {}: data outside a block", no + 1)))?;
        let mut fields = line.split(',');
        let label = fields.next().unwrap_or_default().trim().to_string();
        let values = fields
            .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", no + 1))))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != block.cols.len() {
            return Err(Error::Parse(format!(
                "line {}: expected {} values, found {}",
                no + 1,
                block.cols.len(),
                values.len()
            )));
        }
        block.rows.push(label);
        block.data.push(values);
    }
    if let Some(b) = pending.take() {
        blocks.push(b);
    }
    let take = |name: &str| -> Result<&Block> {
        blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b)
            .ok_or_else(|| Error::Parse(format!("missing block [{name}]")))
    };
    let to_matrix = |b: &Block| {
        DMatrix::from_fn(b.rows.len(), b.cols.len(), |i, j| b.data[i][j])
    };
    let (a, b, c, d) = (take("A")?, take("B")?, take("C")?, take("D")?);
    let states = a.rows.clone();
    if a.cols != states || b.rows != states || c.cols != states {
        return Err(Error::Parse("state labels disagree between blocks".into()));
    }
    if d.rows != c.rows || d.cols != b.cols {
        return Err(Error::Parse("input/output labels disagree between blocks".into()));
    }
    StateSpaceModel::new(
        to_matrix(a),
        to_matrix(b),
        to_matrix(c),
        to_matrix(d),
        states,
        b.cols.clone(),
        c.rows.clone(),
    )
}
