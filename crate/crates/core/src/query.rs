//! Query files: one JSON object per line,
//! `{"query_time": real, "embedding": [d reals], "label": optional string}`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::frame::QueryEmbedding;

/// Parses a `.jsonl` query file. Blank lines are skipped.
pub fn read_queries<R: BufRead>(reader: R) -> Result<Vec<QueryEmbedding>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let q: QueryEmbedding = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidConfig(format!("query file line {}: {e}", lineno + 1)))?;
        out.push(q);
    }
    Ok(out)
}

pub fn write_queries<W: Write>(mut writer: W, queries: &[QueryEmbedding]) -> Result<()> {
    for q in queries {
        serde_json::to_writer(&mut writer, q)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
