//! Model file: a magic line, one JSON metadata line, then the count tables as
//! little-endian binary records sorted by key so equal models give equal bytes.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use super::scorer::{validate_params, CountModel, Counts};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

pub const MAGIC: &str = "GEMREC-SCORER-1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    order: usize,
    alpha: f64,
    vocab: Vocabulary,
    contexts: usize,
}

pub fn write_model(model: &CountModel, mut w: impl Write) -> Result<()> {
    let header = Header { order: model.order, alpha: model.alpha, vocab: model.vocab, contexts: model.tables.len() };
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    let mut keys: Vec<&u128> = model.tables.keys().collect();
    keys.sort_unstable();
    for key in keys {
        let c = &model.tables[key];
        w.write_all(&key.to_le_bytes())?;
        w.write_all(&c.total.to_le_bytes())?;
        w.write_all(&(c.next.len() as u32).to_le_bytes())?;
        for &(tok, n) in &c.next {
            w.write_all(&tok.to_le_bytes())?;
            w.write_all(&n.to_le_bytes())?;
        }
    }
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| Error::ModelFormat(format!("truncated table: {e}")))?;
    Ok(buf)
}

pub fn read_model(mut r: impl BufRead) -> Result<CountModel> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(Error::ModelFormat(format!("bad magic line {:?}", line.trim_end())));
    }
    line.clear();
    r.read_line(&mut line)?;
    let header: Header = serde_json::from_str(&line).map_err(|e| Error::ModelFormat(format!("bad header: {e}")))?;
    validate_params(header.order, header.alpha)?;
    let vocab = Vocabulary::new(header.vocab.depth, header.vocab.codebook_size, header.vocab.disamb_size)?;
    let mut tables = std::collections::HashMap::with_capacity(header.contexts);
    for _ in 0..header.contexts {
        let key = u128::from_le_bytes(take(&mut r)?);
        let total = u64::from_le_bytes(take(&mut r)?);
        let n = u32::from_le_bytes(take(&mut r)?) as usize;
        let mut next = Vec::with_capacity(n);
        for _ in 0..n {
            let tok = u32::from_le_bytes(take(&mut r)?);
            let c = u32::from_le_bytes(take(&mut r)?);
            if tok as usize >= vocab.size() {
                return Err(Error::ModelFormat(format!("token {tok} outside vocabulary")));
            }
            next.push((tok, c));
        }
        if next.iter().map(|&(_, c)| c as u64).sum::<u64>() != total {
            return Err(Error::ModelFormat("context total does not match its counts".into()));
        }
        tables.insert(key, Counts { total, next });
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::ModelFormat("trailing bytes after tables".into()));
    }
    Ok(CountModel { vocab, order: header.order, alpha: header.alpha, tables })
}
