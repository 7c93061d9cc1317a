//! Dataset CSV format: header `domain,label,f0,...,f{d-1}`. Floats are
//! written in shortest round-trip form, so save/load is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::dataset::{Dataset, Label, Sample};
use crate::error::{Error, Result};

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let dim = dataset
        .feature_dim()
        .ok_or_else(|| Error::SchemaError("cannot save an empty dataset".into()))?;
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "domain,label")?;
    for i in 0..dim {
        write!(out, ",f{i}")?;
    }
    writeln!(out)?;
    for s in &dataset.samples {
        write!(out, "{},{}", s.domain_id, s.label.reveal())?;
        for f in &s.features {
            write!(out, ",{f}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Load a dataset. With `hidden = true` (target splits) labels are ingested
/// as `Label::Hidden`, invisible to training but retained for evaluation.
pub fn load_dataset(path: &Path, hidden: bool) -> Result<Dataset> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::SchemaError("empty file".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "domain" || cols[1] != "label" {
        return Err(Error::SchemaError(format!("bad header: {header}")));
    }
    let dim = cols.len() - 2;
    for (i, name) in cols[2..].iter().enumerate() {
        if *name != format!("f{i}") {
            return Err(Error::SchemaError(format!("bad feature column: {name}")));
        }
    }

    let mut samples = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(Error::SchemaError(format!(
                "line {line_no}: expected {} fields, got {}",
                dim + 2,
                fields.len()
            )));
        }
        let domain_id: usize = fields[0].parse().map_err(|_| Error::ParseError {
            line: line_no,
            msg: format!("bad domain id: {}", fields[0]),
        })?;
        let class: usize = fields[1].parse().map_err(|_| Error::ParseError {
            line: line_no,
            msg: format!("bad label: {}", fields[1]),
        })?;
        let mut features = Vec::with_capacity(dim);
        for f in &fields[2..] {
            let v: f64 = f.parse().map_err(|_| Error::ParseError {
                line: line_no,
                msg: format!("bad feature value: {f}"),
            })?;
            features.push(v);
        }
        samples.push(Sample {
            features,
            label: if hidden {
                Label::Hidden(class)
            } else {
                Label::Known(class)
            },
            domain_id,
        });
    }
    if samples.is_empty() {
        return Err(Error::SchemaError("no data rows".into()));
    }
    Ok(Dataset { samples })
}
