//! Binary model checkpoints.
//!
//! Layout: magic `FKCP`, format version, a JSON metadata blob (config hash,
//! standardizer, vocabulary, threshold, seed — whatever the caller needs to
//! reload the model), then a directory of named f64 tensors, little-endian.
//! `save` also writes a human-readable `<path>.json` sidecar describing the
//! contents. Writing is canonical: save -> load -> save is byte-identical.

use crate::error::{Error, Result};
use serde_json::json;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"FKCP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value, tensors: Vec<(String, Vec<f64>)>) -> Self {
        Checkpoint { meta, tensors }
    }

    pub fn tensor(&self, name: &str) -> Result<&[f64]> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    }

    pub fn write(&self, out: &mut impl Write) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        // canonical meta bytes: serde_json writes map keys in insertion
        // order, so round-tripping through Value is stable
        let meta = serde_json::to_vec(&self.meta)?;
        out.write_all(&(meta.len() as u64).to_le_bytes())?;
        out.write_all(&meta)?;
        out.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        for (name, values) in &self.tensors {
            let name_bytes = name.as_bytes();
            out.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
            out.write_all(name_bytes)?;
            out.write_all(&(values.len() as u64).to_le_bytes())?;
            for v in values {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read(input: &mut impl Read) -> Result<Checkpoint> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
        }
        let version = read_u32(input)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let meta_len = read_u64(input)? as usize;
        let mut meta_bytes = vec![0u8; meta_len];
        input.read_exact(&mut meta_bytes)?;
        let meta: serde_json::Value = serde_json::from_slice(&meta_bytes)?;
        let count = read_u64(input)? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(input)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            input.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?;
            let len = read_u64(input)? as usize;
            let mut values = Vec::with_capacity(len);
            let mut buf = [0u8; 8];
            for _ in 0..len {
                input.read_exact(&mut buf)?;
                values.push(f64::from_le_bytes(buf));
            }
            tensors.push((name, values));
        }
        Ok(Checkpoint { meta, tensors })
    }

    /// Writes the checkpoint plus a `<path>.json` sidecar listing the
    /// metadata and tensor shapes for human inspection.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut file)?;
        file.flush()?;
        let sidecar = json!({
            "format": "FKCP",
            "version": VERSION,
            "meta": self.meta,
            "tensors": self.tensors.iter().map(|(name, v)| {
                json!({"name": name, "len": v.len()})
            }).collect::<Vec<_>>(),
        });
        let mut sidecar_path = path.as_os_str().to_owned();
        sidecar_path.push(".json");
        std::fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        Checkpoint::read(&mut file)
    }
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(input: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
