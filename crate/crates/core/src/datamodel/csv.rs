//! Plain CSV skeleton files: one frame per line, `3K` comma-separated values,
//! joint-major (`k1x,k1y,k1z,k2x,...`).

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::datamodel::{SkeletonSequence, DEFAULT_FRAME_INTERVAL_MS};
use crate::error::{Error, Result};

/// Reads a skeleton file, keeping only the selected joints (1-based ids, in
/// selection order) when a selection is given.
pub fn load_csv(path: impl AsRef<Path>, selection: Option<&[usize]>) -> Result<SkeletonSequence> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, &path.display().to_string(), selection, DEFAULT_FRAME_INTERVAL_MS)
}

pub fn parse_csv(
    text: &str,
    origin: &str,
    selection: Option<&[usize]>,
    frame_interval_ms: f64,
) -> Result<SkeletonSequence> {
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        column,
        message,
    };

    let mut frames: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for (c, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line_no, c + 1, format!("`{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, c + 1, format!("`{cell}` is not finite")));
            }
            row.push(v);
        }
        match width {
            None => {
                if row.len() % 3 != 0 {
                    return Err(parse_err(
                        line_no,
                        row.len(),
                        format!("{} values is not a multiple of 3", row.len()),
                    ));
                }
                width = Some(row.len());
            }
            Some(w) if w != row.len() => {
                return Err(parse_err(
                    line_no,
                    row.len().min(w) + 1,
                    format!("ragged row: {} values, expected {w}", row.len()),
                ));
            }
            Some(_) => {}
        }
        frames.push(row);
    }
    let width = width.ok_or_else(|| Error::Data(format!("{origin}: no frames")))?;
    let file_joints = width / 3;

    let (joints, frames) = match selection {
        None => (file_joints, frames),
        Some(sel) => {
            if sel.is_empty() {
                return Err(Error::Config {
                    key: "joint_selection".into(),
                    message: "selection is empty".into(),
                });
            }
            if let Some(bad) = sel.iter().find(|&&k| k == 0 || k > file_joints) {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: 0,
                    column: 3 * bad,
                    message: format!("selected joint {bad} outside the file's joints 1..={file_joints}"),
                });
            }
            let picked = frames
                .into_iter()
                .map(|f| sel.iter().flat_map(|&k| f[3 * (k - 1)..3 * k].to_vec()).collect())
                .collect();
            (sel.len(), picked)
        }
    };
    SkeletonSequence::new(joints, frames, frame_interval_ms)
}

/// Writes a sequence with 17 significant digits, which reads back bitwise.
pub fn save_csv(seq: &SkeletonSequence, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for frame in seq.frames() {
        for (i, v) in frame.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").expect("writing to a String");
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes through a temporary sibling file and renames it into place, so a
/// failed write never leaves a partial file at `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Argument(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
