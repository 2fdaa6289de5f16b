//! Versioned checkpoint files: JSON metadata header plus raw named f32
//! parameter sections. The embedding table is a separate artifact with its
//! own format; checkpoints carry only writer-independent parameters.

use super::net::{ConditioningMode, NetConfig, Recognizer};
use crate::charset::Charset;
use crate::error::{Error, Result};
use crate::wsb::InitSpec;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"WSCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub net: NetConfig,
    pub mode: ConditioningMode,
    pub ed: usize,
    pub charset: String,
    pub charset_hash: u64,
    pub config_hash: u64,
    pub iteration: u64,
}

pub fn save_checkpoint(
    path: &Path,
    net: &Recognizer,
    config_hash: u64,
    iteration: u64,
) -> Result<()> {
    let meta = CheckpointMeta {
        net: net.cfg.clone(),
        mode: net.mode,
        ed: net.ed,
        charset: net.charset.as_string(),
        charset_hash: net.charset.hash(),
        config_hash,
        iteration,
    };
    let header = serde_json::to_vec(&meta).map_err(|e| Error::Invalid(e.to_string()))?;
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(MAGIC).map_err(|e| Error::io(path, e))?;
    w.write_u32::<LittleEndian>(VERSION)
        .map_err(|e| Error::io(path, e))?;
    w.write_u32::<LittleEndian>(header.len() as u32)
        .map_err(|e| Error::io(path, e))?;
    w.write_all(&header).map_err(|e| Error::io(path, e))?;
    w.write_u32::<LittleEndian>(net.store.len() as u32)
        .map_err(|e| Error::io(path, e))?;
    for (_, name, value) in net.store.iter() {
        let name_bytes = name.as_bytes();
        w.write_u16::<LittleEndian>(name_bytes.len() as u16)
            .map_err(|e| Error::io(path, e))?;
        w.write_all(name_bytes).map_err(|e| Error::io(path, e))?;
        w.write_u64::<LittleEndian>(value.len() as u64)
            .map_err(|e| Error::io(path, e))?;
        for &v in value.iter() {
            w.write_f32::<LittleEndian>(v).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Recognizer, CheckpointMeta)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != MAGIC {
        return Err(Error::Format {
            what: "checkpoint",
            path: path.to_path_buf(),
            detail: "bad magic".into(),
        });
    }
    let version = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))?;
    if version != VERSION {
        return Err(Error::Format {
            what: "checkpoint",
            path: path.to_path_buf(),
            detail: format!("unsupported version {version}"),
        });
    }
    let hlen = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    let mut header = vec![0u8; hlen];
    r.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
    let meta: CheckpointMeta = serde_json::from_slice(&header).map_err(|e| Error::Format {
        what: "checkpoint",
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;

    let charset = Charset::from_str_chars(&meta.charset)?;
    if charset.hash() != meta.charset_hash {
        return Err(Error::ArtifactMismatch(
            "checkpoint charset hash does not match its charset".into(),
        ));
    }
    let mut net = Recognizer::build(
        meta.net.clone(),
        meta.mode,
        meta.ed,
        charset,
        0,
        InitSpec::default(),
    )?;

    let n = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    if n != net.store.len() {
        return Err(Error::Format {
            what: "checkpoint",
            path: path.to_path_buf(),
            detail: format!("expected {} parameters, found {n}", net.store.len()),
        });
    }
    for _ in 0..n {
        let nlen = r.read_u16::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        let mut name = vec![0u8; nlen];
        r.read_exact(&mut name).map_err(|e| Error::io(path, e))?;
        let name = String::from_utf8(name).map_err(|e| Error::Format {
            what: "checkpoint",
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let numel = r.read_u64::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        let id = net.store.id_by_name(&name).ok_or_else(|| Error::Format {
            what: "checkpoint",
            path: path.to_path_buf(),
            detail: format!("unknown parameter {name}"),
        })?;
        if net.store.get(id).len() != numel {
            return Err(Error::Format {
                what: "checkpoint",
                path: path.to_path_buf(),
                detail: format!("size mismatch for parameter {name}"),
            });
        }
        let dst = net.store.get_mut(id);
        for v in dst.iter_mut() {
            *v = r.read_f32::<LittleEndian>().map_err(|e| Error::io(path, e))?;
        }
    }
    Ok((net, meta))
}
