//! `EMB1` binary container.
//!
//! ```text
//! magic     4 bytes   "EMB1"
//! version   u32 LE    1
//! dimension u32 LE    D
//! count     u32 LE    N
//! N records:
//!   id_len  u16 LE
//!   id      id_len bytes, UTF-8
//!   values  D x f32 LE
//! ```
//!
//! Values are stored as `f32` and widened to `f64` on load.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::model::{ConceptSet, Embedding, Role};

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const VERSION: u32 = 1;
const HEADER_LEN: u64 = 16;

/// Parses an `EMB1` image. Record numbers in errors are 1-based; record 0
/// is the header.
pub fn read_concept_binary(
    bytes: &[u8],
    path: &Path,
    name: &str,
    role: Role,
) -> Result<ConceptSet> {
    if bytes.len() < MAGIC.len() || bytes[..4] != MAGIC {
        let mut found = [0u8; 4];
        let n = bytes.len().min(4);
        found[..n].copy_from_slice(&bytes[..n]);
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found,
        });
    }
    let truncated = |record: usize, offset: u64| Error::TruncatedRecord {
        path: path.to_path_buf(),
        record,
        offset,
    };
    if (bytes.len() as u64) < HEADER_LEN {
        return Err(truncated(0, 0));
    }
    let mut cur = Cursor::new(bytes);
    cur.set_position(4);
    let version = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| truncated(0, 4))?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    let dimension = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| truncated(0, 8))? as usize;
    let count = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| truncated(0, 12))? as usize;
    if dimension == 0 {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            offset: 8,
            message: "dimension must be at least 1".into(),
        });
    }

    let mut members = Vec::with_capacity(count.min(1 << 16));
    let mut values = vec![0f32; dimension];
    for record in 1..=count {
        let offset = cur.position();
        let id_len = cur
            .read_u16::<LittleEndian>()
            .map_err(|_| truncated(record, offset))? as usize;
        let mut id = vec![0u8; id_len];
        cur.read_exact(&mut id)
            .map_err(|_| truncated(record, offset))?;
        let id = String::from_utf8(id).map_err(|_| Error::Malformed {
            path: path.to_path_buf(),
            offset: offset + 2,
            message: format!("record {record} id is not valid UTF-8"),
        })?;
        cur.read_f32_into::<LittleEndian>(&mut values)
            .map_err(|_| truncated(record, offset))?;
        let vector = values.iter().map(|&v| f64::from(v)).collect();
        members.push(Embedding::new(id, vector)?);
    }
    let end = cur.position();
    if end != bytes.len() as u64 {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            offset: end,
            message: format!(
                "{} trailing bytes after record {count}",
                bytes.len() as u64 - end
            ),
        });
    }
    ConceptSet::new(name, role, members)
}

pub fn load_concept_binary(
    path: &Path,
    name: &str,
    role: Role,
    normalize: bool,
) -> Result<ConceptSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let set = read_concept_binary(&bytes, path, name, role)?;
    if normalize {
        set.normalized()
    } else {
        Ok(set)
    }
}

/// Serializes `set`, narrowing each component to `f32`.
pub fn write_concept_binary<W: Write>(set: &ConceptSet, mut out: W) -> std::io::Result<()> {
    let invalid = |msg: String| std::io::Error::new(std::io::ErrorKind::InvalidInput, msg);
    let dimension =
        u32::try_from(set.dimension()).map_err(|_| invalid("dimension exceeds u32".into()))?;
    let count = u32::try_from(set.len()).map_err(|_| invalid("record count exceeds u32".into()))?;
    out.write_all(&MAGIC)?;
    out.write_u32::<LittleEndian>(VERSION)?;
    out.write_u32::<LittleEndian>(dimension)?;
    out.write_u32::<LittleEndian>(count)?;
    for m in set.members() {
        let id = m.id().as_bytes();
        let len = u16::try_from(id.len())
            .map_err(|_| invalid(format!("id `{}` longer than 65535 bytes", m.id())))?;
        out.write_u16::<LittleEndian>(len)?;
        out.write_all(id)?;
        for &v in m.vector() {
            out.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    Ok(())
}

pub fn save_concept_binary(set: &ConceptSet, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_concept_binary(set, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ConceptSet {
        let members = vec![
            Embedding::new("a", vec![0.5, -1.25, 3.0]).unwrap(),
            Embedding::new("bé", vec![1.0, 0.0, 0.0]).unwrap(),
        ];
        ConceptSet::new("S", Role::AttributeA, members).unwrap()
    }

    fn encode(set: &ConceptSet) -> Vec<u8> {
        let mut buf = Vec::new();
        write_concept_binary(set, &mut buf).unwrap();
        buf
    }

    fn decode(bytes: &[u8]) -> Result<ConceptSet> {
        read_concept_binary(bytes, Path::new("mem.emb"), "S", Role::AttributeA)
    }

    #[test]
    fn layout() {
        let bytes = encode(&sample());
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..18], &1u16.to_le_bytes());
        assert_eq!(bytes[18], b'a');
        assert_eq!(&bytes[19..23], &0.5f32.to_le_bytes());
        // header + (2 + 1 + 12) + (2 + 3 + 12)
        assert_eq!(bytes.len(), 16 + 15 + 17);
    }

    #[test]
    fn roundtrip() {
        let set = sample();
        assert_eq!(decode(&encode(&set)).unwrap(), set);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(&sample());
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::BadMagic { found, .. }) if &found == b"XMB1"));
        assert!(matches!(decode(b"EM"), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn unsupported_version() {
        let mut bytes = encode(&sample());
        bytes[4] = 2;
        assert!(matches!(
            decode(&bytes),
            Err(Error::UnsupportedVersion { version: 2, .. })
        ));
    }

    #[test]
    fn truncated_final_record() {
        let bytes = encode(&sample());
        let cut = &bytes[..bytes.len() - 3];
        // Second record starts after the header and the first record.
        assert!(matches!(
            decode(cut),
            Err(Error::TruncatedRecord {
                record: 2,
                offset: 31,
                ..
            })
        ));
        assert!(matches!(
            decode(&bytes[..10]),
            Err(Error::TruncatedRecord { record: 0, .. })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode(&sample());
        bytes.push(0);
        assert!(matches!(
            decode(&bytes),
            Err(Error::Malformed { offset: 48, .. })
        ));
    }

    #[test]
    fn zero_record_is_rejected_with_id() {
        let set = ConceptSet::new(
            "S",
            Role::AttributeA,
            vec![Embedding::new("tiny", vec![1e-50, 0.0, 0.0]).unwrap()],
        )
        .unwrap();
        // 1e-50 underflows to 0 in f32.
        assert!(
            matches!(decode(&encode(&set)), Err(Error::ZeroVector { id: Some(id) }) if id == "tiny")
        );
    }
}
