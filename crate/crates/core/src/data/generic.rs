//! Delimited text with a header: `instance_id,cycle,<sensor>...`.

use std::fmt::Write as _;

use super::{Instance, RunToFailureDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

fn delimiter(header: &str) -> char {
    [',', '\t', ';']
        .into_iter()
        .find(|d| header.contains(*d))
        .unwrap_or(',')
}

/// Parses the generic format. Rows of one instance must be contiguous with
/// cycles 1, 2, 3, ...
pub fn parse_generic(text: &str) -> Result<RunToFailureDataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::EmptyInput("dataset file"))?;
    let delim = delimiter(header);
    let cols: Vec<String> = header.split(delim).map(|s| s.trim().to_string()).collect();
    if cols.len() < 3 {
        return Err(Error::Parse {
            line: 1,
            message: "header needs instance_id, cycle and at least one sensor".into(),
        });
    }
    let sensor_names = cols[2..].to_vec();
    let mut instances: Vec<Instance> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut current: Option<String> = None;

    let flush = |id: Option<String>, rows: &mut Vec<Vec<f64>>, out: &mut Vec<Instance>| -> Result<()> {
        if let Some(id) = id {
            out.push(Instance {
                id,
                series: Matrix::from_rows(rows)?,
            });
            rows.clear();
        }
        Ok(())
    };

    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {} columns, found {}", cols.len(), fields.len()),
            });
        }
        let id = fields[0].to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: "empty instance id".into(),
            });
        }
        let cycle: usize = fields[1].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("invalid cycle '{}'", fields[1]),
        })?;
        let values = fields[2..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: lineno,
                        message: format!("non-numeric value '{f}'"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        if current.as_deref() != Some(id.as_str()) {
            if instances.iter().any(|inst| inst.id == id) {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("instance '{id}' is not contiguous"),
                });
            }
            flush(current.take(), &mut rows, &mut instances)?;
            current = Some(id.clone());
        }
        if cycle != rows.len() + 1 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("instance '{id}': expected cycle {}, found {cycle}", rows.len() + 1),
            });
        }
        rows.push(values);
    }
    flush(current.take(), &mut rows, &mut instances)?;
    RunToFailureDataset::new(instances, sensor_names)
}

pub fn write_generic(ds: &RunToFailureDataset) -> String {
    let mut s = String::from("instance_id,cycle");
    for n in &ds.sensor_names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for inst in &ds.instances {
        for (t, row) in inst.series.iter_rows().enumerate() {
            let _ = write!(s, "{},{}", inst.id, t + 1);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
    }
    s
}

/// RUL labels, one per line: either a bare value in instance order or
/// `instance_id,value`.
pub fn parse_rul_labels(text: &str, ds: &RunToFailureDataset) -> Result<Vec<f64>> {
    let mut bare = Vec::new();
    let mut keyed: Vec<Option<f64>> = vec![None; ds.len()];
    let mut any_keyed = false;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse { line: i + 1, message: msg };
        let fields: Vec<&str> = t.split([',', '\t', ' ']).filter(|f| !f.is_empty()).collect();
        let parse_val = |f: &str| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| bad(format!("invalid RUL value '{f}'")))
        };
        match fields.as_slice() {
            [v] => bare.push(parse_val(v)?),
            [id, v] => {
                // tolerate a header line
                let Ok(val) = parse_val(v) else {
                    if i == 0 {
                        continue;
                    }
                    return Err(bad(format!("invalid RUL value '{v}'")));
                };
                let idx = ds
                    .instances
                    .iter()
                    .position(|inst| inst.id == *id)
                    .ok_or_else(|| bad(format!("unknown instance '{id}'")))?;
                keyed[idx] = Some(val);
                any_keyed = true;
            }
            _ => return Err(bad(format!("expected 'value' or 'id,value', got '{t}'"))),
        }
    }
    if any_keyed {
        if !bare.is_empty() {
            return Err(Error::invalid("RUL file mixes bare and keyed lines"));
        }
        return keyed
            .into_iter()
            .zip(&ds.instances)
            .map(|(v, inst)| v.ok_or_else(|| Error::invalid(format!("no RUL label for '{}'", inst.id))))
            .collect();
    }
    if bare.len() != ds.len() {
        return Err(Error::Dimension {
            context: "RUL labels",
            expected: ds.len(),
            found: bare.len(),
        });
    }
    Ok(bare)
}

pub fn write_rul_labels(ds: &RunToFailureDataset) -> String {
    let mut s = String::from("instance_id,rul\n");
    if let Some(labels) = &ds.rul_labels {
        for (inst, r) in ds.instances.iter().zip(labels) {
            let _ = writeln!(s, "{},{r}", inst.id);
        }
    }
    s
}
