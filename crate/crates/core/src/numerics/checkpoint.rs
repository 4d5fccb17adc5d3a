//! Little-endian tensor checkpoints.
//!
//! Layout: magic `SPTM`, format version `u32`, then one record per tensor:
//! name length `u32`, name bytes (UTF-8), rows `u64`, cols `u64`, `rows*cols`
//! `f64` values. Records run to end of file.

use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::Matrix;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SPTM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_tensors<W: Write>(mut w: W, tensors: &[(String, &Matrix)]) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    for (name, m) in tensors {
        w.write_u32::<LittleEndian>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        w.write_u64::<LittleEndian>(m.rows() as u64)?;
        w.write_u64::<LittleEndian>(m.cols() as u64)?;
        for &x in m.data() {
            w.write_f64::<LittleEndian>(x)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<(String, Matrix)>> {
    let bad = |msg: &str| Error::BadCheckpoint(msg.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("missing magic"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| bad("missing version"))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::BadCheckpoint(format!("unsupported version {version}")));
    }
    let mut out = Vec::new();
    loop {
        let name_len = match r.read_u32::<LittleEndian>() {
            Ok(n) => n as usize,
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        };
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(|_| bad("truncated tensor name"))?;
        let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8"))?;
        let rows = r.read_u64::<LittleEndian>().map_err(|_| bad("truncated shape"))? as usize;
        let cols = r.read_u64::<LittleEndian>().map_err(|_| bad("truncated shape"))? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n <= (1 << 34))
            .ok_or_else(|| bad("implausible tensor shape"))?;
        let mut data = vec![0.0; n];
        r.read_f64_into::<LittleEndian>(&mut data)
            .map_err(|_| Error::BadCheckpoint(format!("truncated data for `{name}`")))?;
        out.push((name, Matrix::from_vec(rows, cols, data)?));
    }
    Ok(out)
}

pub fn save_tensors(path: impl AsRef<Path>, tensors: &[(String, &Matrix)]) -> Result<()> {
    write_tensors(BufWriter::new(fs::File::create(path)?), tensors)
}

pub fn load_tensors(path: impl AsRef<Path>) -> Result<Vec<(String, Matrix)>> {
    read_tensors(BufReader::new(fs::File::open(path)?))
}
