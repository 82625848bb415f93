//! File writers. Every file starts with the resolved configuration: a `#`
//! comment block for CSV, a `meta` object for JSON.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use maxent_core::grid::strided_indices;
use maxent_core::Field;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(CliError::io(path))?))
}

pub fn write_csv<F>(path: &Path, cfg: &RunConfig, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let mut w = create(path)?;
    let result = (|| {
        writeln!(w, "# maxent {VERSION}")?;
        for (k, v) in cfg.to_pairs() {
            writeln!(w, "# {k}={v}")?;
        }
        body(&mut w)?;
        w.flush()
    })();
    result.map_err(CliError::io(path))
}

pub fn meta(cfg: &RunConfig) -> Value {
    json!({ "version": VERSION, "config": cfg })
}

/// Writes `{"meta": ..., <payload fields>}`.
pub fn write_json(path: &Path, cfg: &RunConfig, payload: Value) -> Result<(), CliError> {
    let mut doc = Map::new();
    doc.insert("meta".into(), meta(cfg));
    match payload {
        Value::Object(fields) => doc.extend(fields),
        other => {
            doc.insert("data".into(), other);
        }
    }
    let mut w = create(path)?;
    let result = (|| {
        serde_json::to_writer_pretty(&mut w, &Value::Object(doc))?;
        writeln!(w)?;
        w.flush()
    })();
    result.map_err(CliError::io(path))
}

/// `{"t": [...], "x": [...], "values": [[...]]}` on the strided sub-grid.
pub fn strided_field(field: &Field, stride: usize) -> Value {
    let g = field.grid();
    let ms: Vec<usize> = strided_indices(g.levels(), stride).collect();
    let ns: Vec<usize> = strided_indices(g.nodes(), stride).collect();
    json!({
        "t": ms.iter().map(|&m| g.t(m)).collect::<Vec<_>>(),
        "x": ns.iter().map(|&n| g.x(n)).collect::<Vec<_>>(),
        "values": ms.iter().map(|&m| ns.iter().map(|&n| field.get(m, n)).collect::<Vec<_>>()).collect::<Vec<_>>(),
    })
}

/// `<stem>.summary.json` next to `path`.
pub fn sidecar(path: &Path) -> std::path::PathBuf {
    path.with_extension("summary.json")
}
