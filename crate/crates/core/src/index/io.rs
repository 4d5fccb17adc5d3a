//! Binary index files, little-endian throughout:
//! `"SPIX" | version u32 | v u64 | doc_count u64 | doc table | block count u32 |
//! blocks | has_lengths u8 | [doc lengths u32...]`.
//! A block is `term u32 | len u32 | len varint doc-id deltas | len f32 weights`.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::inverted::InvertedIndex;
use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8; 4] = b"SPIX";
pub const INDEX_VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::BadIndexFile(msg.into())
}

fn write_varint(w: &mut Vec<u8>, mut x: u32) {
    while x >= 0x80 {
        w.push((x as u8 & 0x7f) | 0x80);
        x >>= 7;
    }
    w.push(x as u8);
}

fn read_varint(r: &mut Cursor<&[u8]>) -> Result<u32> {
    let mut out: u64 = 0;
    for shift in (0..35).step_by(7) {
        let b = r.read_u8().map_err(|_| bad("truncated varint"))?;
        out |= ((b & 0x7f) as u64) << shift;
        if b & 0x80 == 0 {
            return u32::try_from(out).map_err(|_| bad("varint overflow"));
        }
    }
    Err(bad("varint too long"))
}

pub fn encode_index(idx: &InvertedIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(INDEX_MAGIC);
    out.write_u32::<LE>(INDEX_VERSION).unwrap();
    out.write_u64::<LE>(idx.v as u64).unwrap();
    out.write_u64::<LE>(idx.doc_ids.len() as u64).unwrap();
    for id in &idx.doc_ids {
        out.write_u32::<LE>(id.len() as u32).unwrap();
        out.extend_from_slice(id.as_bytes());
    }
    let blocks: Vec<(usize, &Vec<(u32, f32)>)> =
        idx.postings.iter().enumerate().filter(|(_, p)| !p.is_empty()).collect();
    out.write_u32::<LE>(blocks.len() as u32).unwrap();
    for (t, list) in blocks {
        out.write_u32::<LE>(t as u32).unwrap();
        out.write_u32::<LE>(list.len() as u32).unwrap();
        let mut prev = 0u32;
        for (i, &(doc, _)) in list.iter().enumerate() {
            write_varint(&mut out, if i == 0 { doc } else { doc - prev });
            prev = doc;
        }
        for &(_, w) in list {
            out.write_f32::<LE>(w).unwrap();
        }
    }
    match &idx.doc_lengths {
        Some(lengths) => {
            out.push(1);
            for &l in lengths {
                out.write_u32::<LE>(l).unwrap();
            }
        }
        None => out.push(0),
    }
    out
}

pub fn decode_index(bytes: &[u8]) -> Result<InvertedIndex> {
    let mut r = Cursor::new(bytes);
    let trunc = |_| bad("truncated file");
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(trunc)?;
    if &magic != INDEX_MAGIC {
        return Err(bad("wrong magic"));
    }
    let version = r.read_u32::<LE>().map_err(trunc)?;
    if version != INDEX_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let v = r.read_u64::<LE>().map_err(trunc)? as usize;
    let n = r.read_u64::<LE>().map_err(trunc)?;
    let remaining = |r: &Cursor<&[u8]>| bytes.len() as u64 - r.position();
    // every doc entry takes at least 4 bytes
    if n > remaining(&r) / 4 || v as u64 > u32::MAX as u64 + 1 {
        return Err(bad("header sizes exceed file length"));
    }
    let mut doc_ids = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let len = r.read_u32::<LE>().map_err(trunc)? as u64;
        if len > remaining(&r) {
            return Err(bad("truncated file"));
        }
        let mut buf = vec![0u8; len as usize];
        r.read_exact(&mut buf).map_err(trunc)?;
        doc_ids.push(String::from_utf8(buf).map_err(|_| bad("doc id is not utf-8"))?);
    }
    let mut postings = vec![Vec::new(); v];
    let n_blocks = r.read_u32::<LE>().map_err(trunc)?;
    let mut last_term: Option<u32> = None;
    for _ in 0..n_blocks {
        let t = r.read_u32::<LE>().map_err(trunc)?;
        if (t as usize) >= v || last_term.is_some_and(|p| t <= p) {
            return Err(bad(format!("posting block for term {t} out of order or range")));
        }
        last_term = Some(t);
        let len = r.read_u32::<LE>().map_err(trunc)? as u64;
        // at least one varint byte and four weight bytes per posting
        if len == 0 || len > remaining(&r) / 5 {
            return Err(bad("posting block length"));
        }
        let mut docs = Vec::with_capacity(len as usize);
        let mut prev = 0u32;
        for i in 0..len {
            let delta = read_varint(&mut r)?;
            let doc = if i == 0 {
                delta
            } else {
                if delta == 0 {
                    return Err(bad("doc ids not increasing"));
                }
                prev.checked_add(delta).ok_or_else(|| bad("doc id overflow"))?
            };
            if doc as u64 >= n {
                return Err(bad(format!("doc id {doc} out of range")));
            }
            docs.push(doc);
            prev = doc;
        }
        let list = &mut postings[t as usize];
        for doc in docs {
            let w = r.read_f32::<LE>().map_err(trunc)?;
            list.push((doc, w));
        }
    }
    let doc_lengths = match r.read_u8().map_err(trunc)? {
        0 => None,
        1 => {
            let mut lengths = Vec::with_capacity(n as usize);
            for _ in 0..n {
                lengths.push(r.read_u32::<LE>().map_err(trunc)?);
            }
            Some(lengths)
        }
        other => return Err(bad(format!("bad stats flag {other}"))),
    };
    if remaining(&r) != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(InvertedIndex {
        v,
        postings,
        doc_ids,
        doc_lengths,
    })
}

pub fn save_index(idx: &InvertedIndex, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_index(idx))?;
    f.flush()?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<InvertedIndex> {
    decode_index(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::build_index;
    use crate::model::SparseVector;

    fn fixture() -> InvertedIndex {
        let docs = vec![
            ("A".to_string(), SparseVector::new(vec![(0, 1.0)]).unwrap()),
            ("B".to_string(), SparseVector::new(vec![(0, 2.0), (1, 3.0)]).unwrap()),
            ("C".to_string(), SparseVector::new(vec![(5, 0.1234567)]).unwrap()),
        ];
        build_index(docs, 8).unwrap()
    }

    #[test]
    fn varint_round_trip() {
        for x in [0u32, 1, 127, 128, 300, 16_383, 16_384, u32::MAX] {
            let mut buf = Vec::new();
            write_varint(&mut buf, x);
            assert_eq!(read_varint(&mut Cursor::new(&buf[..])).unwrap(), x);
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.idx");
        let idx = fixture();
        save_index(&idx, &path).unwrap();
        let back = load_index(&path).unwrap();
        assert_eq!(back, idx);
        for t in 0..8 {
            let a: Vec<u32> = idx.postings(t).iter().map(|p| p.1.to_bits()).collect();
            let b: Vec<u32> = back.postings(t).iter().map(|p| p.1.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_index(&fixture());
        assert_eq!(&bytes[..4], b"SPIX");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 8);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = encode_index(&fixture());
        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(matches!(decode_index(&wrong_magic), Err(Error::BadIndexFile(_))));
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(matches!(decode_index(&wrong_version), Err(Error::BadIndexFile(_))));
        for cut in 0..bytes.len() {
            assert!(matches!(decode_index(&bytes[..cut]), Err(Error::BadIndexFile(_))), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_index(&extra).is_err());
        assert!(Error::BadIndexFile("x".into()).to_string().contains("bad index file"));
    }
}
