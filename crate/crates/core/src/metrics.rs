//! Per-round metrics and their CSV wire format.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

pub const CSV_HEADER: &str = "round,train_loss,grad_norm_sq,bytes_up,bytes_down,update_nnz";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundMetrics {
    pub round: u64,
    pub train_loss: f64,
    pub grad_norm_sq: f64,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub update_nnz: u64,
}

/// Floats are printed in scientific notation with 9 significant digits so
/// metrics files are byte-stable across runs.
pub fn format_float(x: f64) -> String {
    format!("{x:.8e}")
}

impl RoundMetrics {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.round,
            format_float(self.train_loss),
            format_float(self.grad_norm_sq),
            self.bytes_up,
            self.bytes_down,
            self.update_nnz
        )
    }
}

/// Renders the full metrics document: header plus one line per round, LF line
/// endings throughout.
pub fn render_csv(rounds: &[RoundMetrics]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for m in rounds {
        out.push_str(&m.csv_line());
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, rounds: &[RoundMetrics]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(render_csv(rounds).as_bytes())?;
    Ok(())
}
