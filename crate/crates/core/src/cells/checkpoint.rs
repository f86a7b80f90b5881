//! Plain-text checkpoints.
//!
//! ```text
//! scrnn-checkpoint 1
//! config {"joints":4,...}
//! U_eh 12 12
//! 0.1 -0.25 ...
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so a save/load cycle
//! reproduces every parameter bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{ModelConfig, ParamKey, ParameterSet};
use crate::datamodel::write_atomic;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

const MAGIC: &str = "scrnn-checkpoint 1";

pub fn render_checkpoint(config: &ModelConfig, params: &ParameterSet) -> Result<String> {
    params.validate(config)?;
    let mut out = String::new();
    let json = serde_json::to_string(config).map_err(|e| Error::Internal(format!("config encoding: {e}")))?;
    writeln!(out, "{MAGIC}").ok();
    writeln!(out, "config {json}").ok();
    for (key, m) in params.iter() {
        writeln!(out, "{} {} {}", key.name(), m.rows(), m.cols()).ok();
        let line: Vec<String> = m.as_slice().iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(" ")).ok();
    }
    Ok(out)
}

pub fn save_checkpoint(path: impl AsRef<Path>, config: &ModelConfig, params: &ParameterSet) -> Result<()> {
    write_atomic(path, render_checkpoint(config, params)?.as_bytes())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelConfig, ParameterSet)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text, &path.display().to_string())
}

pub fn parse_checkpoint(text: &str, origin: &str) -> Result<(ModelConfig, ParameterSet)> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        column: 1,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(err(1, format!("expected header `{MAGIC}`"))),
    }
    let (n, line) = lines.next().ok_or_else(|| err(2, "missing config line".into()))?;
    let json = line
        .strip_prefix("config ")
        .ok_or_else(|| err(n, "expected `config <json>`".into()))?;
    let config: ModelConfig = serde_json::from_str(json).map_err(|e| err(n, format!("bad config: {e}")))?;
    config.validate()?;

    let mut values = BTreeMap::new();
    while let Some((n, header)) = lines.next() {
        if header.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(err(n, format!("expected `<name> <rows> <cols>`, got `{header}`")));
        }
        let key = ParamKey::from_name(parts[0]).ok_or_else(|| err(n, format!("unknown parameter `{}`", parts[0])))?;
        let rows: usize = parts[1]
            .parse()
            .map_err(|_| err(n, format!("bad row count `{}`", parts[1])))?;
        let cols: usize = parts[2]
            .parse()
            .map_err(|_| err(n, format!("bad column count `{}`", parts[2])))?;
        let (vn, body) = lines
            .next()
            .ok_or_else(|| err(n + 1, format!("missing values for `{}`", key.name())))?;
        let data = body
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().map_err(|_| err(vn, format!("bad number `{tok}`"))))
            .collect::<Result<Vec<_>>>()?;
        let m = Matrix::from_vec(rows, cols, data).map_err(|e| err(vn, e.to_string()))?;
        if values.insert(key, m).is_some() {
            return Err(err(n, format!("duplicate parameter `{}`", key.name())));
        }
    }
    let params = ParameterSet::from_map(values);
    params.validate(&config)?;
    Ok((config, params))
}
