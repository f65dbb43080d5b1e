//! Whitespace-delimited turbofan format: unit id, cycle, 3 operating
//! settings and 21 sensors per row. The answer file holds one RUL per line.

use super::{Instance, RunToFailureDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const TURBOFAN_COLUMNS: usize = 26;
const SENSORS: usize = TURBOFAN_COLUMNS - 2;

fn sensor_names() -> Vec<String> {
    (1..=3)
        .map(|i| format!("setting_{i}"))
        .chain((1..=21).map(|i| format!("sensor_{i}")))
        .collect()
}

/// Parses one turbofan series file. Units are kept in order of first
/// appearance; each unit's cycles must run 1, 2, 3, ... without gaps.
pub fn parse_turbofan_series(text: &str) -> Result<RunToFailureDataset> {
    let mut order: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut current: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != TURBOFAN_COLUMNS {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {TURBOFAN_COLUMNS} columns, found {}", fields.len()),
            });
        }
        let unit = parse_integer(fields[0], lineno, "unit id")?;
        let cycle = parse_integer(fields[1], lineno, "cycle")?;
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
            .collect::<Result<Vec<f64>>>()?;
        let id = unit.to_string();
        let idx = match current {
            Some(k) if order[k] == id => k,
            _ => {
                if order.contains(&id) {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("unit {id} reappears after other units"),
                    });
                }
                order.push(id);
                rows.push(Vec::new());
                order.len() - 1
            }
        };
        current = Some(idx);
        let expected = rows[idx].len() as u64 + 1;
        if cycle != expected {
            return Err(Error::Parse {
                line: lineno,
                message: format!("unit {}: expected cycle {expected}, found {cycle}", order[idx]),
            });
        }
        rows[idx].push(values);
    }
    let instances = order
        .into_iter()
        .zip(rows)
        .map(|(id, r)| Ok(Instance { id, series: Matrix::from_rows(&r)? }))
        .collect::<Result<Vec<_>>>()?;
    let ds = RunToFailureDataset::new(instances, sensor_names())?;
    debug_assert_eq!(ds.sensor_count(), SENSORS);
    Ok(ds)
}

fn parse_integer(field: &str, line: usize, what: &str) -> Result<u64> {
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("non-numeric {what} '{field}'"),
    })?;
    if v < 1.0 || v.fract() != 0.0 {
        return Err(Error::Parse {
            line,
            message: format!("{what} must be a positive integer, got '{field}'"),
        });
    }
    Ok(v as u64)
}

pub fn parse_turbofan_rul(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t
            .split_whitespace()
            .next()
            .and_then(|s| s.parse().ok())
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("invalid RUL value '{t}'"),
            })?;
        out.push(v);
    }
    Ok(out)
}

/// Parses the train file and the truncated test file with its answers.
pub fn parse_turbofan(train_text: &str, test_text: &str, rul_text: &str) -> Result<(RunToFailureDataset, RunToFailureDataset)> {
    let train = parse_turbofan_series(train_text)?;
    let test = parse_turbofan_series(test_text)?.with_labels(parse_turbofan_rul(rul_text)?)?;
    Ok((train, test))
}
