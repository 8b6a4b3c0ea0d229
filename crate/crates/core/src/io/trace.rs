use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lab::SweepRow;
use crate::trainer::{EpochRecord, RunTrace};

pub const TRACE_HEADER: &str = "epoch,loss_total,loss_cl,loss_c,loss_d,train_acc,val_acc,test_acc,attn_T,attn_F,attn_C";
pub const SWEEP_HEADER: &str = "level,edges_added,heterophily,test_acc,test_macro_f1";

/// Trace CSV text, fixed six-decimal formatting.
pub fn render_trace(records: &[EpochRecord]) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for r in records {
        let _ = write!(out, "{}", r.epoch);
        let values = [
            r.loss_total,
            r.loss_cl,
            r.loss_c,
            r.loss_d,
            r.train_acc,
            r.val_acc,
            r.test_acc,
            r.attn[0],
            r.attn[1],
            r.attn[2],
        ];
        for v in values {
            let _ = write!(out, ",{v:.6}");
        }
        out.push('\n');
    }
    out
}

pub fn emit_trace(trace: &RunTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_trace(&trace.records)).map_err(|e| Error::io(path, e))
}

/// Inverse of [`render_trace`] up to the printed precision.
pub fn parse_trace(text: &str, path: &Path) -> Result<Vec<EpochRecord>> {
    let mut lines = text.lines().enumerate();
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    match lines.next() {
        Some((_, h)) if h == TRACE_HEADER => {}
        _ => return Err(err(1, "missing or unexpected trace header".into())),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let fields: Vec<&str> = l.split(',').collect();
            if fields.len() != 11 {
                return Err(err(i + 1, format!("expected 11 columns, found {}", fields.len())));
            }
            let epoch = fields[0]
                .parse()
                .map_err(|e| err(i + 1, format!("bad epoch: {e}")))?;
            let mut v = [0.0; 10];
            for (slot, f) in v.iter_mut().zip(&fields[1..]) {
                *slot = f.parse().map_err(|e| err(i + 1, format!("bad value `{f}`: {e}")))?;
            }
            Ok(EpochRecord {
                epoch,
                loss_total: v[0],
                loss_cl: v[1],
                loss_c: v[2],
                loss_d: v[3],
                train_acc: v[4],
                val_acc: v[5],
                test_acc: v[6],
                attn: [v[7], v[8], v[9]],
            })
        })
        .collect()
}

pub fn render_sweep(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:.6},{},{:.6},{:.6},{:.6}",
            r.level, r.edges_added, r.heterophily, r.test_acc, r.test_macro_f1
        );
    }
    out
}

pub fn emit_sweep(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_sweep(rows)).map_err(|e| Error::io(path, e))
}

/// Pretty-printed JSON of any serializable value.
pub fn write_json<T: serde::Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
