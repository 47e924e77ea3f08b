//! CSV serialization with exact float round-tripping.
//!
//! Every float is written with [`fmt_f64`], which keeps 18 significant
//! digits; parsing the text back recovers the identical bit pattern, so
//! byte-identical output files are a faithful determinism check and emitted
//! artifacts can feed later runs without drift.

use std::io::{self, BufRead, Write};

use crate::dyadic::Dyadic;
use crate::error::{CoreError, Result};
use crate::invariant::InvariantMeasure;
use crate::kernel::TransitionKernel;
use crate::space::StateSpace;

/// Scientific notation with enough digits that `f64::from_str` inverts it
/// exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}

/// RFC 4180 quoting: fields containing commas, quotes or line breaks are
/// wrapped and inner quotes doubled.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_csv_line(line: &str, line_no: usize) -> Result<Vec<String>> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    while let Some(ch) = chars.next() {
        match ch {
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    current.push('"');
                } else {
                    quoted = false;
                }
            }
            '"' if current.is_empty() => quoted = true,
            ',' if !quoted => {
                fields.push(std::mem::take(&mut current));
            }
            _ => current.push(ch),
        }
    }
    if quoted {
        return Err(CoreError::Parse {
            line: line_no,
            detail: "unterminated quoted field".into(),
        });
    }
    fields.push(current);
    Ok(fields)
}

fn parse_f64(text: &str, line_no: usize) -> Result<f64> {
    text.trim().parse().map_err(|_| CoreError::Parse {
        line: line_no,
        detail: format!("expected a number, got {text:?}"),
    })
}

/// `from,to,probability` rows, from-major, zero entries included so the
/// file fully determines the matrix.
pub fn write_kernel_csv<W: Write>(mut w: W, kernel: &TransitionKernel) -> io::Result<()> {
    writeln!(w, "from,to,probability")?;
    let space = kernel.space();
    for x in 0..kernel.len() {
        for y in 0..kernel.len() {
            writeln!(
                w,
                "{},{},{}",
                csv_field(space.label(x)),
                csv_field(space.label(y)),
                fmt_f64(kernel.entry(x, y))
            )?;
        }
    }
    Ok(())
}

/// Inverse of [`write_kernel_csv`]. The state space is reconstructed from
/// the order in which labels first appear in the `from` column.
pub fn read_kernel_csv<R: BufRead>(reader: R, step: Dyadic) -> Result<TransitionKernel> {
    let mut labels: Vec<String> = Vec::new();
    let mut triples: Vec<(String, String, f64)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line_no == 1 {
            if line.trim() != "from,to,probability" {
                return Err(CoreError::Parse {
                    line: 1,
                    detail: format!("expected header from,to,probability, got {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_csv_line(&line, line_no)?;
        if fields.len() != 3 {
            return Err(CoreError::Parse {
                line: line_no,
                detail: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let value = parse_f64(&fields[2], line_no)?;
        if !labels.contains(&fields[0]) {
            labels.push(fields[0].clone());
        }
        triples.push((fields[0].clone(), fields[1].clone(), value));
    }
    let space = StateSpace::from_labels(labels)?;
    let n = space.len();
    let mut rows = vec![0.0; n * n];
    let mut seen = vec![false; n * n];
    for (from, to, value) in triples {
        let missing = |label: &str| CoreError::Parse {
            line: 0,
            detail: format!("state {label:?} never appears in the from column"),
        };
        let x = space.index_of(&from).ok_or_else(|| missing(&from))?;
        let y = space.index_of(&to).ok_or_else(|| missing(&to))?;
        if seen[x * n + y] {
            return Err(CoreError::Parse {
                line: 0,
                detail: format!("duplicate entry for ({from}, {to})"),
            });
        }
        seen[x * n + y] = true;
        rows[x * n + y] = value;
    }
    if let Some(flat) = seen.iter().position(|s| !s) {
        return Err(CoreError::Parse {
            line: 0,
            detail: format!(
                "missing entry for ({}, {})",
                space.label(flat / n),
                space.label(flat % n)
            ),
        });
    }
    TransitionKernel::new(space, rows, step)
}

/// `state,weight` rows in state order.
pub fn write_measure_csv<W: Write>(mut w: W, measure: &InvariantMeasure) -> io::Result<()> {
    writeln!(w, "state,weight")?;
    let space = measure.space();
    for (x, weight) in measure.weights().iter().enumerate() {
        writeln!(w, "{},{}", csv_field(space.label(x)), fmt_f64(*weight))?;
    }
    Ok(())
}

/// Inverse of [`write_measure_csv`], up to the containing space.
pub fn read_measure_csv<R: BufRead>(reader: R) -> Result<(StateSpace, Vec<f64>)> {
    let mut labels = Vec::new();
    let mut weights = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line_no == 1 {
            if line.trim() != "state,weight" {
                return Err(CoreError::Parse {
                    line: 1,
                    detail: format!("expected header state,weight, got {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_csv_line(&line, line_no)?;
        if fields.len() != 2 {
            return Err(CoreError::Parse {
                line: line_no,
                detail: format!("expected 2 fields, got {}", fields.len()),
            });
        }
        labels.push(fields[0].clone());
        weights.push(parse_f64(&fields[1], line_no)?);
    }
    Ok((StateSpace::from_labels(labels)?, weights))
}

/// `state,<name>` rows for an arbitrary per-state function.
pub fn write_function_csv<W: Write>(
    mut w: W,
    space: &StateSpace,
    name: &str,
    values: &[f64],
) -> io::Result<()> {
    writeln!(w, "state,{}", csv_field(name))?;
    for (x, value) in values.iter().enumerate() {
        writeln!(w, "{},{}", csv_field(space.label(x)), fmt_f64(*value))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariant::invariant_measure;

    #[test]
    fn float_formatting_round_trips_exactly() {
        let cases = [
            0.1,
            1.0 / 3.0,
            -0.0,
            1e300,
            5e-324,
            2.0f64.sqrt(),
            -1.2345678901234567e-8,
        ];
        for x in cases {
            let back: f64 = fmt_f64(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {}", fmt_f64(x));
        }
    }

    #[test]
    fn kernel_round_trips_through_csv() {
        let space = StateSpace::from_labels(vec!["rest, low", "busy \"hot\""]).unwrap();
        let kernel = TransitionKernel::new(
            space,
            vec![0.9, 0.1, 1.0 / 3.0, 2.0 / 3.0],
            Dyadic::level_step(2),
        )
        .unwrap();
        let mut buffer = Vec::new();
        write_kernel_csv(&mut buffer, &kernel).unwrap();
        let back = read_kernel_csv(buffer.as_slice(), Dyadic::level_step(2)).unwrap();
        assert_eq!(back.space().labels(), kernel.space().labels());
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(back.entry(x, y).to_bits(), kernel.entry(x, y).to_bits());
            }
        }
    }

    #[test]
    fn measure_round_trips_through_csv() {
        let space = StateSpace::from_labels(vec!["a", "b"]).unwrap();
        let kernel = TransitionKernel::new(
            space,
            vec![0.9, 0.1, 0.2, 0.8],
            Dyadic::one(),
        )
        .unwrap();
        let mu = invariant_measure(&kernel).unwrap();
        let mut buffer = Vec::new();
        write_measure_csv(&mut buffer, &mu).unwrap();
        let (space_back, weights) = read_measure_csv(buffer.as_slice()).unwrap();
        assert_eq!(space_back.labels(), mu.space().labels());
        for (w, orig) in weights.iter().zip(mu.weights()) {
            assert_eq!(w.to_bits(), orig.to_bits());
        }
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let text = "from,to,probability\na,b,not-a-number\n";
        let err = read_kernel_csv(text.as_bytes(), Dyadic::one()).unwrap_err();
        match err {
            CoreError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn incomplete_kernels_are_rejected() {
        let text = "from,to,probability\na,a,1.0\na,b,0.0\nb,a,0.5\n";
        assert!(read_kernel_csv(text.as_bytes(), Dyadic::one()).is_err());
    }
}
