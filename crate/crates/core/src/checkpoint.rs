//! Plain-text inverse-map checkpoints.
//!
//! ```text
//! g2p-inverse-map v1
//! inputs 6
//! hidden 6
//! outputs 3
//! scale_mode std_dev
//! scaler <inputs values>
//! w1 <hidden × inputs values, row-major>
//! b1 <hidden values>
//! w2 <outputs × hidden values, row-major>
//! b2 <outputs values>
//! adam_step <integer>
//! adam_m <parameter-count values>
//! adam_v <parameter-count values>
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a reload is
//! bit-identical.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{io_err, Error};
use crate::inverse_map::{AdamState, InverseMap, ScaleMode, Scaler};

pub const HEADER: &str = "g2p-inverse-map v1";

fn push_line(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        write!(out, " {v:?}").expect("write to String");
    }
    out.push('\n');
}

pub fn to_text(map: &InverseMap) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    writeln!(out, "inputs {}", map.inputs()).unwrap();
    writeln!(out, "hidden {}", map.hidden()).unwrap();
    writeln!(out, "outputs {}", map.outputs()).unwrap();
    let mode = match map.scaler().mode {
        ScaleMode::StdDev => "std_dev",
        ScaleMode::Variance => "variance",
    };
    writeln!(out, "scale_mode {mode}").unwrap();
    push_line(&mut out, "scaler", &map.scaler().factors);
    push_line(&mut out, "w1", map.w1());
    push_line(&mut out, "b1", map.b1());
    push_line(&mut out, "w2", map.w2());
    push_line(&mut out, "b2", map.b2());
    writeln!(out, "adam_step {}", map.adam_state().step).unwrap();
    push_line(&mut out, "adam_m", &map.adam_state().m);
    push_line(&mut out, "adam_v", &map.adam_state().v);
    out
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn field(&mut self, key: &str) -> Result<(usize, &'a str), String> {
        let (n, line) = self
            .iter
            .next()
            .ok_or_else(|| format!("missing `{key}` line"))?;
        let (k, rest) = line.split_once(' ').unwrap_or((line, ""));
        if k != key {
            return Err(format!("line {}: expected `{key}`, found `{k}`", n + 1));
        }
        Ok((n + 1, rest))
    }

    fn count(&mut self, key: &str) -> Result<usize, String> {
        let (n, rest) = self.field(key)?;
        rest.trim()
            .parse()
            .map_err(|_| format!("line {n}: `{key}` is not an integer: {rest:?}"))
    }

    fn floats(&mut self, key: &str, expected: usize) -> Result<Vec<f64>, String> {
        let (n, rest) = self.field(key)?;
        let values = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| format!("line {n}: bad number {t:?} in `{key}`")))
            .collect::<Result<Vec<f64>, String>>()?;
        if values.len() != expected {
            return Err(format!("line {n}: `{key}` has {} values, expected {expected}", values.len()));
        }
        Ok(values)
    }
}

pub fn from_text(text: &str) -> Result<InverseMap, String> {
    let mut it = text.lines().enumerate();
    match it.next() {
        Some((_, h)) if h == HEADER => {}
        Some((_, h)) => return Err(format!("unrecognized header {h:?}, expected {HEADER:?}")),
        None => return Err("empty checkpoint".into()),
    }
    let mut lines = Lines { iter: it };
    let inputs = lines.count("inputs")?;
    let hidden = lines.count("hidden")?;
    let outputs = lines.count("outputs")?;
    if inputs == 0 || hidden == 0 || outputs == 0 {
        return Err("layer sizes must be positive".into());
    }
    let (n, mode) = lines.field("scale_mode")?;
    let mode = match mode.trim() {
        "std_dev" => ScaleMode::StdDev,
        "variance" => ScaleMode::Variance,
        other => return Err(format!("line {n}: unknown scale_mode {other:?}")),
    };
    let factors = lines.floats("scaler", inputs)?;
    let mut params = lines.floats("w1", hidden * inputs)?;
    params.extend(lines.floats("b1", hidden)?);
    params.extend(lines.floats("w2", outputs * hidden)?);
    params.extend(lines.floats("b2", outputs)?);
    let (n, step) = lines.field("adam_step")?;
    let step = step
        .trim()
        .parse()
        .map_err(|_| format!("line {n}: `adam_step` is not an integer"))?;
    let m = lines.floats("adam_m", params.len())?;
    let v = lines.floats("adam_v", params.len())?;
    if let Some((n, extra)) = lines.iter.find(|(_, l)| !l.trim().is_empty()) {
        return Err(format!("line {}: unexpected trailing content {extra:?}", n + 1));
    }
    Ok(InverseMap::from_parts(
        inputs,
        hidden,
        outputs,
        Scaler { factors, mode },
        params,
        AdamState { step, m, v },
    ))
}

pub fn save(path: &Path, map: &InverseMap) -> Result<(), Error> {
    std::fs::write(path, to_text(map)).map_err(io_err(path))
}

pub fn load(path: &Path) -> Result<InverseMap, Error> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    from_text(&text).map_err(|detail| Error::Format {
        path: path.to_path_buf(),
        detail,
    })
}
