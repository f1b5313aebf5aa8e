//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic            4 bytes  "TRIN"
//! schema_version   u32
//! config_hash      8 bytes  (SHA-256 prefix of the canonical config JSON)
//! section_count    u32
//! section table    per section: name_len u16, name bytes,
//!                  payload offset u64 (from file start), payload length u64
//! payloads         concatenated section bodies
//! ```
//!
//! Sections: `config`, `layout`, `transform`, `lineage` (canonical JSON),
//! `params`, `adam_m`, `adam_v` (raw f64 little-endian), `adam_t` (u64).
//! Floats are written as raw bit patterns, so write-then-read round-trips
//! are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::AdamState;

use super::{config_hash, Checkpoint, FrozenTransform, Lineage, ModelConfig, ParamLayout};

const MAGIC: &[u8; 4] = b"TRIN";
const SCHEMA_VERSION: u32 = 1;

fn f64s_to_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn bytes_to_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format("f64 section length not a multiple of 8".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let sections: Vec<(&str, Vec<u8>)> = vec![
            ("config", serde_json::to_vec(&self.config)?),
            ("layout", serde_json::to_vec(&self.layout)?),
            ("transform", serde_json::to_vec(&self.transform)?),
            ("lineage", serde_json::to_vec(&self.lineage)?),
            ("params", f64s_to_bytes(&self.params)),
            ("adam_m", f64s_to_bytes(&self.adam.m)),
            ("adam_v", f64s_to_bytes(&self.adam.v)),
            ("adam_t", self.adam.t.to_le_bytes().to_vec()),
        ];

        let table_len: usize = sections
            .iter()
            .map(|(name, _)| 2 + name.len() + 8 + 8)
            .sum();
        let mut offset = 4 + 4 + 8 + 4 + table_len;

        w.write_all(MAGIC)?;
        w.write_all(&SCHEMA_VERSION.to_le_bytes())?;
        let hash_hex = config_hash(&self.config);
        let mut hash_bytes = [0u8; 8];
        for (i, chunk) in hash_hex.as_bytes().chunks_exact(2).take(8).enumerate() {
            hash_bytes[i] = u8::from_str_radix(std::str::from_utf8(chunk).expect("hex"), 16)
                .expect("config hash is hex");
        }
        w.write_all(&hash_bytes)?;
        w.write_all(&(sections.len() as u32).to_le_bytes())?;
        for (name, payload) in &sections {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(offset as u64).to_le_bytes())?;
            w.write_all(&(payload.len() as u64).to_le_bytes())?;
            offset += payload.len();
        }
        for (_, payload) in &sections {
            w.write_all(payload)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Checkpoint> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let need = |n: usize, at: usize| -> Result<()> {
            if bytes.len() < at + n {
                Err(Error::Format(format!("truncated checkpoint at byte {at}")))
            } else {
                Ok(())
            }
        };
        need(16, 0)?;
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format("bad magic; not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint schema_version {version}, expected {SCHEMA_VERSION}"
            )));
        }
        let stored_hash: [u8; 8] = bytes[8..16].try_into().expect("8 bytes");
        let section_count = {
            need(4, 16)?;
            u32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes")) as usize
        };
        let mut cursor = 20;
        let mut table = Vec::with_capacity(section_count);
        for _ in 0..section_count {
            need(2, cursor)?;
            let name_len = u16::from_le_bytes(bytes[cursor..cursor + 2].try_into().expect("2")) as usize;
            cursor += 2;
            need(name_len + 16, cursor)?;
            let name = std::str::from_utf8(&bytes[cursor..cursor + name_len])
                .map_err(|_| Error::Format("section name not UTF-8".into()))?
                .to_string();
            cursor += name_len;
            let offset = u64::from_le_bytes(bytes[cursor..cursor + 8].try_into().expect("8")) as usize;
            let len = u64::from_le_bytes(bytes[cursor + 8..cursor + 16].try_into().expect("8")) as usize;
            cursor += 16;
            table.push((name, offset, len));
        }
        let section = |name: &str| -> Result<&[u8]> {
            let (_, offset, len) = table
                .iter()
                .find(|(n, _, _)| n == name)
                .ok_or_else(|| Error::Format(format!("missing section {name:?}")))?;
            if bytes.len() < offset + len {
                return Err(Error::Format(format!("section {name:?} extends past end of file")));
            }
            Ok(&bytes[*offset..*offset + *len])
        };

        let config: ModelConfig = serde_json::from_slice(section("config")?)?;
        let layout: ParamLayout = serde_json::from_slice(section("layout")?)?;
        let transform: FrozenTransform = serde_json::from_slice(section("transform")?)?;
        let lineage: Lineage = serde_json::from_slice(section("lineage")?)?;
        let params = bytes_to_f64s(section("params")?)?;
        let m = bytes_to_f64s(section("adam_m")?)?;
        let v = bytes_to_f64s(section("adam_v")?)?;
        let t_bytes = section("adam_t")?;
        if t_bytes.len() != 8 {
            return Err(Error::Format("adam_t section must be 8 bytes".into()));
        }
        let t = u64::from_le_bytes(t_bytes.try_into().expect("8 bytes"));

        // Cross-checks: the container must be self-consistent.
        let expected_hash_hex = config_hash(&config);
        let mut expected_hash = [0u8; 8];
        for (i, chunk) in expected_hash_hex.as_bytes().chunks_exact(2).take(8).enumerate() {
            expected_hash[i] =
                u8::from_str_radix(std::str::from_utf8(chunk).expect("hex"), 16).expect("hex");
        }
        if stored_hash != expected_hash {
            return Err(Error::Format(
                "stored config hash does not match the embedded config".into(),
            ));
        }
        if params.len() != layout.total {
            return Err(Error::Format(format!(
                "params section has {} values, layout expects {}",
                params.len(),
                layout.total
            )));
        }
        if m.len() != layout.total || v.len() != layout.total {
            return Err(Error::Format("optimizer state size does not match layout".into()));
        }
        Ok(Checkpoint {
            config,
            layout,
            params,
            adam: AdamState { m, v, t },
            transform,
            lineage,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let file = File::open(path)?;
        Checkpoint::read_from(BufReader::new(file))
    }
}
