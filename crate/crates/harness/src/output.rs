//! Plot-ready metrics output: CSV (fixed header) or JSON (config echo plus
//! rows), chosen by the output path extension.

use std::io::Write;
use std::path::Path;

use crate::error::{HarnessError, Result};
use crate::experiment::MetricsRow;

pub const CSV_HEADER: &str =
    "method,k,alpha,rule,params,coverage,mean_width,clipped_rate,mean_max_p,wall_time_s,trials,test_groups";

pub fn rows_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let max_p = if row.mean_max_p.is_nan() { String::new() } else { row.mean_max_p.to_string() };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.method,
            row.k,
            row.alpha,
            row.rule,
            row.params,
            row.coverage,
            row.mean_width,
            row.clipped_rate,
            max_p,
            row.wall_time_s,
            row.trials,
            row.test_groups
        ));
    }
    out
}

pub fn rows_to_json(config_echo: &str, rows: &[MetricsRow]) -> Result<String> {
    let value = serde_json::json!({
        "config": config_echo,
        "rows": rows,
    });
    serde_json::to_string_pretty(&value)
        .map_err(|e| HarnessError::Data(format!("json encoding: {e}")))
}

/// Writes rows as CSV or JSON depending on the path extension (`.json` means
/// JSON; anything else is CSV).
pub fn write_rows(path: &Path, config_echo: &str, rows: &[MetricsRow]) -> Result<()> {
    let text = if path.extension().and_then(|e| e.to_str()) == Some("json") {
        rows_to_json(config_echo, rows)?
    } else {
        rows_to_csv(rows)
    };
    let mut file = std::fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}
