use std::io::{BufRead, Write};

use super::{ModelKind, ModelSpec, StudentError, StudentParams};

const MAGIC: &str = "prd-student 1";

/// Writes a plain-text checkpoint. Values use the shortest representation
/// that reads back to the same `f64`.
pub fn write_checkpoint<W: Write>(params: &StudentParams, mut out: W) -> std::io::Result<()> {
    let spec = params.spec();
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "kind {}", spec.kind)?;
    writeln!(out, "input_dim {}", spec.input_dim)?;
    writeln!(out, "hidden_units {}", spec.hidden_units)?;
    writeln!(out, "params {}", params.values().len())?;
    for v in params.values() {
        writeln!(out, "{v:?}")?;
    }
    out.flush()
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<StudentParams, StudentError> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String), StudentError> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l.trim().to_string())),
            Some((n, Err(e))) => Err(StudentError::Checkpoint {
                line: n,
                message: e.to_string(),
            }),
            None => Err(StudentError::Checkpoint {
                line: 0,
                message: format!("unexpected end of file, expected {what}"),
            }),
        }
    };
    let bad = |line: usize, message: String| StudentError::Checkpoint { line, message };

    let (n, magic) = next("header")?;
    if magic != MAGIC {
        return Err(bad(n, format!("expected {MAGIC:?}, found {magic:?}")));
    }
    let mut field = |key: &str| -> Result<(usize, String), StudentError> {
        let (n, l) = next(key)?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok((n, v.trim().to_string())),
            _ => Err(bad(n, format!("expected `{key} <value>`, found {l:?}"))),
        }
    };
    let (n, kind) = field("kind")?;
    let kind: ModelKind = kind.parse().map_err(|e: StudentError| bad(n, e.to_string()))?;
    let mut int = |key: &str| -> Result<usize, StudentError> {
        let (n, v) = field(key)?;
        v.parse().map_err(|_| bad(n, format!("{key} must be a non-negative integer")))
    };
    let input_dim = int("input_dim")?;
    let hidden_units = int("hidden_units")?;
    let count = int("params")?;
    let spec = ModelSpec {
        kind,
        hidden_units,
        input_dim,
    };
    spec.validate()?;
    if count != spec.num_params() {
        return Err(StudentError::ParamCount {
            expected: spec.num_params(),
            got: count,
        });
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, l) = next("parameter value")?;
        let v: f64 = l.parse().map_err(|_| bad(n, format!("invalid number {l:?}")))?;
        values.push(v);
    }
    if let Ok((n, l)) = next("end of file") {
        if !l.is_empty() {
            return Err(bad(n, "trailing content after parameters".into()));
        }
    }
    StudentParams::from_values(spec, values)
}
