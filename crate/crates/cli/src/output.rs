//! Deterministic output files: summary JSON (17-digit floats, fixed key
//! order, timestamps isolated in the trailing `meta` object), JSON-lines
//! iteration traces, and CSV plot data.

use crate::error::CliError;
use fdlab_core::jsonfmt::{escape_str, f64_repr};
use fdlab_core::minimizer::{MinimizationTrace, TerminationReason};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Ordered JSON object builder (two-space indentation, one field per line).
pub struct JsonObject {
    indent: usize,
    fields: Vec<(String, String)>,
}

impl JsonObject {
    pub fn new(indent: usize) -> JsonObject {
        JsonObject {
            indent,
            fields: Vec::new(),
        }
    }

    pub fn raw(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.fields.push((key.to_string(), value.into()));
        self
    }

    pub fn str(&mut self, key: &str, value: &str) -> &mut Self {
        self.raw(key, escape_str(value))
    }

    pub fn f64(&mut self, key: &str, value: f64) -> &mut Self {
        self.raw(key, f64_repr(value))
    }

    pub fn uint(&mut self, key: &str, value: usize) -> &mut Self {
        self.raw(key, value.to_string())
    }

    pub fn bool(&mut self, key: &str, value: bool) -> &mut Self {
        self.raw(key, if value { "true" } else { "false" })
    }

    pub fn finish(&self) -> String {
        let pad = " ".repeat(self.indent);
        let pad2 = " ".repeat(self.indent + 2);
        let mut out = String::from("{\n");
        for (i, (key, value)) in self.fields.iter().enumerate() {
            out.push_str(&pad2);
            out.push_str(&escape_str(key));
            out.push_str(": ");
            out.push_str(value);
            if i + 1 < self.fields.len() {
                out.push(',');
            }
            out.push('\n');
        }
        out.push_str(&pad);
        out.push('}');
        out
    }
}

pub fn f64_array(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|v| f64_repr(*v)).collect();
    format!("[{}]", items.join(", "))
}

/// Trailing metadata object; the timestamp is the only nondeterministic
/// field in any summary, and worker-thread count is deliberately not
/// recorded so reruns compare byte-identical.
pub fn meta_object() -> String {
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    let mut meta = JsonObject::new(2);
    meta.str("tool", "fdlab")
        .str("version", env!("CARGO_PKG_VERSION"))
        .uint("timestamp_unix_ms", timestamp as usize);
    meta.finish()
}

pub struct OutDir {
    pub path: PathBuf,
}

impl OutDir {
    pub fn create(path: &Path) -> Result<OutDir, CliError> {
        std::fs::create_dir_all(path)
            .map_err(|e| CliError::runtime(format!("cannot create output dir {}: {e}", path.display())))?;
        Ok(OutDir {
            path: path.to_path_buf(),
        })
    }

    pub fn write(&self, name: &str, content: &str) -> Result<PathBuf, CliError> {
        let full = self.path.join(name);
        std::fs::write(&full, content)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", full.display())))?;
        Ok(full)
    }

    pub fn writer(&self, name: &str) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
        let full = self.path.join(name);
        let file = std::fs::File::create(&full)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", full.display())))?;
        Ok(std::io::BufWriter::new(file))
    }
}

pub fn termination_name(t: &TerminationReason) -> &'static str {
    match t {
        TerminationReason::Converged => "converged",
        TerminationReason::IterationCap => "iteration-cap",
        TerminationReason::LineSearchFailure => "line-search-failure",
    }
}

/// One JSON record per accepted iterate.
pub fn write_trace_jsonl(out: &OutDir, name: &str, trace: &MinimizationTrace) -> Result<(), CliError> {
    let mut w = out.writer(name)?;
    for rec in &trace.records {
        writeln!(
            w,
            "{{\"iter\": {}, \"energy\": {}, \"augmented\": {}, \"grad_inf\": {}, \"step\": {}, \"backtracks\": {}, \"min_det\": {}, \"max_km\": {}, \"barrier_eps\": {}}}",
            rec.iteration,
            f64_repr(rec.energy),
            f64_repr(rec.augmented),
            f64_repr(rec.grad_inf),
            f64_repr(rec.step),
            rec.backtracks,
            f64_repr(rec.min_det),
            f64_repr(rec.max_km_ratio),
            f64_repr(rec.barrier_eps),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Iteration curves with a header row.
pub fn write_trace_csv(out: &OutDir, name: &str, trace: &MinimizationTrace) -> Result<(), CliError> {
    let mut w = out.writer(name)?;
    writeln!(w, "iter,energy,augmented,grad_inf,step,min_det,max_km,barrier_eps")?;
    for rec in &trace.records {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            rec.iteration,
            rec.energy,
            rec.augmented,
            rec.grad_inf,
            rec.step,
            rec.min_det,
            rec.max_km_ratio,
            rec.barrier_eps,
        )?;
    }
    w.flush()?;
    Ok(())
}
