//! Ledger files: one canonical JSON block per line, LF terminated.

use std::path::Path;

use edgechain_core::canonical::to_canonical;
use edgechain_core::ledger::{verify_chain, Block, ChainStatus};
use edgechain_core::Ledger;

#[derive(Debug, thiserror::Error)]
pub enum LedgerFileError {
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Result of checking a ledger file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FileStatus {
    Valid { blocks: usize },
    /// First line that does not parse, is not in canonical form, or fails
    /// hash or linkage verification.
    FirstBad { index: u64, reason: String },
}

pub fn encode(blocks: &[Block]) -> String {
    let mut out = String::new();
    for b in blocks {
        out.push_str(&to_canonical(b));
        out.push('\n');
    }
    out
}

pub fn write(ledger: &Ledger, path: impl AsRef<Path>) -> Result<(), LedgerFileError> {
    let path = path.as_ref();
    std::fs::write(path, encode(ledger.blocks())).map_err(|source| LedgerFileError::Io { path: path.display().to_string(), source })
}

/// Parses and verifies ledger text. Returns the blocks parsed before the
/// first bad line along with the status.
pub fn decode(bytes: &[u8]) -> (Vec<Block>, FileStatus) {
    let mut blocks = Vec::new();
    let body = match bytes.strip_suffix(b"\n") {
        Some(b) => b,
        None if bytes.is_empty() => bytes,
        None => return (blocks, bad(0, "missing final newline")),
    };
    if !bytes.is_empty() {
        for (i, line) in body.split(|&c| c == b'\n').enumerate() {
            let i = i as u64;
            let Ok(text) = std::str::from_utf8(line) else { return (blocks, bad(i, "not UTF-8")) };
            let block: Block = match serde_json::from_str(text) {
                Ok(b) => b,
                Err(e) => return (blocks, bad(i, &format!("unparseable block: {e}"))),
            };
            if to_canonical(&block) != text {
                return (blocks, bad(i, "block is not in canonical form"));
            }
            blocks.push(block);
        }
    }
    match verify_chain(&blocks) {
        ChainStatus::Valid => {
            let n = blocks.len();
            (blocks, FileStatus::Valid { blocks: n })
        }
        ChainStatus::FirstBad(i) => (blocks, bad(i, "hash or linkage mismatch")),
    }
}

fn bad(index: u64, reason: &str) -> FileStatus {
    FileStatus::FirstBad { index, reason: reason.into() }
}

pub fn read(path: impl AsRef<Path>) -> Result<(Vec<Block>, FileStatus), LedgerFileError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| LedgerFileError::Io { path: path.display().to_string(), source })?;
    Ok(decode(&bytes))
}
