use std::fs;
use std::path::Path;

use crate::error::{CliError, Result};

/// Splits newline-delimited UTF-8 text into raw element bytes. Lines are not
/// trimmed; a single trailing newline does not add an empty element.
pub fn parse_elements(text: &[u8]) -> Result<Vec<Vec<u8>>> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let body = text.strip_suffix(b"\n").unwrap_or(text);
    body.split(|&b| b == b'\n')
        .enumerate()
        .map(|(i, line)| {
            std::str::from_utf8(line)
                .map(|_| line.to_vec())
                .map_err(|e| CliError::Usage(format!("line {}: invalid UTF-8: {e}", i + 1)))
        })
        .collect()
}

pub fn read_elements(path: &Path) -> Result<Vec<Vec<u8>>> {
    let text =
        fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    parse_elements(&text)
}
