//! File formats: VFLD1 field dumps, MASK1 compact-set masks, CSV tables,
//! and plain key = value manifests. All binary payloads are little-endian
//! and bit-exact across platforms.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid, Rank, RealField};
use crate::potential::CompactMask;

const VFLD_MAGIC: &[u8; 5] = b"VFLD1";
const MASK_MAGIC: &[u8; 5] = b"MASK1";

/// Write a field dump: magic "VFLD1", u32 dim, u32 N, f64 L, u8 rank code,
/// then component-major C-order f64 samples, all little-endian.
pub fn save_field(path: &Path, field: &RealField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(VFLD_MAGIC)?;
    w.write_all(&3u32.to_le_bytes())?;
    w.write_all(&(field.grid().n() as u32).to_le_bytes())?;
    w.write_all(&field.grid().length().to_le_bytes())?;
    w.write_all(&[field.rank().code()])?;
    for v in field.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a VFLD1 dump, validating magic, dimension, resolution, and rank.
pub fn load_field(path: &Path) -> Result<RealField> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    read_exact_at(&mut r, &mut magic, 0)?;
    if &magic != VFLD_MAGIC {
        return Err(Error::FormatError {
            offset: 0,
            reason: format!("bad magic {:?} (expected VFLD1)", magic),
        });
    }
    let mut u32buf = [0u8; 4];
    read_exact_at(&mut r, &mut u32buf, 5)?;
    let dim = u32::from_le_bytes(u32buf);
    if dim != 3 {
        return Err(Error::FormatError {
            offset: 5,
            reason: format!("unsupported dimension {dim}"),
        });
    }
    read_exact_at(&mut r, &mut u32buf, 9)?;
    let n = u32::from_le_bytes(u32buf) as usize;
    let mut f64buf = [0u8; 8];
    read_exact_at(&mut r, &mut f64buf, 13)?;
    let length = f64::from_le_bytes(f64buf);
    let mut rank_code = [0u8; 1];
    read_exact_at(&mut r, &mut rank_code, 21)?;
    let rank = Rank::from_code(rank_code[0]).ok_or_else(|| Error::FormatError {
        offset: 21,
        reason: format!("unknown rank code {}", rank_code[0]),
    })?;
    let grid = Grid::new(n, length)
        .map_err(|e| Error::FormatError {
            offset: 9,
            reason: format!("invalid grid header: {e}"),
        })?;
    let count = rank.components() * grid.node_count();
    let mut data = Vec::with_capacity(count);
    for idx in 0..count {
        let offset = 22 + 8 * idx as u64;
        read_exact_at(&mut r, &mut f64buf, offset)?;
        data.push(f64::from_le_bytes(f64buf));
    }
    RealField::from_data(&grid, rank, data)
}

fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: u64) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::FormatError {
        offset,
        reason: "truncated file".to_string(),
    })
}

/// Write a compact mask: magic "MASK1", u32 N, then N^3 bits packed
/// little-endian (bit i of byte j covers node 8j + i).
pub fn save_mask(path: &Path, mask: &CompactMask) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MASK_MAGIC)?;
    w.write_all(&(mask.grid().n() as u32).to_le_bytes())?;
    let bits = mask.membership();
    let mut byte = 0u8;
    for (i, b) in bits.iter().enumerate() {
        if *b {
            byte |= 1 << (i % 8);
        }
        if i % 8 == 7 {
            w.write_all(&[byte])?;
            byte = 0;
        }
    }
    if bits.len() % 8 != 0 {
        w.write_all(&[byte])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a MASK1 mask onto a grid of box length `length`.
pub fn load_mask(path: &Path, length: f64) -> Result<CompactMask> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    read_exact_at(&mut r, &mut magic, 0)?;
    if &magic != MASK_MAGIC {
        return Err(Error::FormatError {
            offset: 0,
            reason: format!("bad magic {:?} (expected MASK1)", magic),
        });
    }
    let mut u32buf = [0u8; 4];
    read_exact_at(&mut r, &mut u32buf, 5)?;
    let n = u32::from_le_bytes(u32buf) as usize;
    let grid = Grid::new(n, length).map_err(|e| Error::FormatError {
        offset: 5,
        reason: format!("invalid mask header: {e}"),
    })?;
    let count = grid.node_count();
    let nbytes = count.div_ceil(8);
    let mut bytes = vec![0u8; nbytes];
    read_exact_at(&mut r, &mut bytes, 9)?;
    let membership = (0..count)
        .map(|i| bytes[i / 8] & (1 << (i % 8)) != 0)
        .collect();
    CompactMask::new(&grid, membership)
}

/// A CSV table accumulated in memory and written atomically.
#[derive(Clone, Debug)]
pub struct CsvTable {
    pub name: String,
    pub header: String,
    pub rows: Vec<String>,
}

impl CsvTable {
    pub fn new(name: &str, header: &str) -> CsvTable {
        CsvTable {
            name: name.to_string(),
            header: header.to_string(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: String) {
        self.rows.push(row);
    }

    pub fn contents(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(&self.header);
        s.push('\n');
        for row in &self.rows {
            s.push_str(row);
            s.push('\n');
        }
        s
    }

    pub fn write_to(&self, dir: &Path) -> Result<std::path::PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        std::fs::write(&path, self.contents())?;
        Ok(path)
    }
}

/// Format a float for CSV output (shortest round-trippable form).
pub fn fmt_float(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles;

    #[test]
    fn field_roundtrip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(8, 2.0).unwrap();
        let f = profiles::random_solenoidal(&g, 11, 0, 1, 3, 1.0);
        let path = dir.path().join("field.vfld");
        save_field(&path, &f).unwrap();
        let loaded = load_field(&path).unwrap();
        assert_eq!(loaded.rank(), f.rank());
        assert!(loaded.grid().same_as(f.grid()));
        let a: Vec<u64> = f.data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = loaded.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);

        save_field(&path, &loaded).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();
        save_field(&path, &f).unwrap();
        let bytes2 = std::fs::read(&path).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(8, 2.0).unwrap();
        let f = RealField::zeros(&g, Rank::Scalar);
        let path = dir.path().join("field.vfld");
        save_field(&path, &f).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..40]).unwrap();
        match load_field(&path) {
            Err(Error::FormatError { offset, .. }) => assert!(offset >= 22),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.vfld");
        std::fs::write(&path, b"DLFV1somebytes").unwrap();
        match load_field(&path) {
            Err(Error::FormatError { offset: 0, .. }) => {}
            other => panic!("expected magic error, got {other:?}"),
        }
    }

    #[test]
    fn mask_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(8, 2.0).unwrap();
        let mask = CompactMask::ball(&g, profiles::box_center(&g), 0.4);
        let path = dir.path().join("set.mask");
        save_mask(&path, &mask).unwrap();
        let loaded = load_mask(&path, 2.0).unwrap();
        assert_eq!(loaded.membership(), mask.membership());
    }
}
