//! Append-only chain log: one canonical-JSON block per line.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::hash::{canonical_json, Digest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxRecord {
    pub tx_hash: Digest,
    pub msg: serde_json::Value,
    pub ok: bool,
    pub gas_total: u64,
    /// What this node voted for the transaction.
    pub vote_digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub height: u64,
    pub txs: Vec<TxRecord>,
    pub app_hash: Digest,
    /// Consensus result per transaction; `None` when undecided or when the
    /// log was produced without consensus (single node).
    pub agreed_digests: Vec<Option<Digest>>,
}

impl BlockRecord {
    pub fn to_line(&self) -> Vec<u8> {
        let mut line = canonical_json(self);
        line.push(b'\n');
        line
    }
}

pub fn write_log<W: Write>(mut w: W, blocks: &[BlockRecord]) -> io::Result<()> {
    for block in blocks {
        w.write_all(&block.to_line())?;
    }
    Ok(())
}

pub fn append_block<W: Write>(mut w: W, block: &BlockRecord) -> io::Result<()> {
    w.write_all(&block.to_line())
}

pub fn read_log<R: BufRead>(r: R) -> io::Result<Vec<BlockRecord>> {
    let mut blocks = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        blocks.push(serde_json::from_str(&line).map_err(io::Error::other)?);
    }
    Ok(blocks)
}
