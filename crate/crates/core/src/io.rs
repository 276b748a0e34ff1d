// Versioned binary container shared by dataset and checkpoint files:
//
//   magic (4 bytes) | version u32 LE | header length u64 LE | header JSON
//   | f64 LE payload
//
// The header JSON is written with sorted keys.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) const CONTAINER_VERSION: u32 = 1;

pub(crate) fn write_container<W: Write>(
    mut w: W,
    magic: &[u8; 4],
    header: &serde_json::Value,
    payload: impl IntoIterator<Item = f64>,
) -> Result<()> {
    let header = serde_json::to_vec(header)?;
    w.write_all(magic)?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    let mut buf = Vec::new();
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub(crate) fn read_container<R: Read>(mut r: R, magic: &[u8; 4]) -> Result<(serde_json::Value, Vec<f64>)> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head)
        .map_err(|_| Error::Format("file is too short for a container header".into()))?;
    if &head[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&head[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != CONTAINER_VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let len = u64::from_le_bytes(head[8..16].try_into().unwrap()) as usize;
    let mut header = vec![0u8; len];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("truncated container header".into()))?;
    let header: serde_json::Value = serde_json::from_slice(&header)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if rest.len() % 8 != 0 {
        return Err(Error::Format("payload is not a whole number of f64 values".into()));
    }
    let payload = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, payload))
}
