use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::PointCloud;
use crate::error::{Error, Result};

pub const PCLD_MAGIC: &[u8; 4] = b"PCLD";
pub const PCLD_VERSION: u32 = 1;

/// Little-endian: magic, u32 version, u32 count, then `count * 3` f64.
pub fn write_pcld<W: Write>(w: &mut W, cloud: &PointCloud) -> std::io::Result<()> {
    w.write_all(PCLD_MAGIC)?;
    w.write_all(&PCLD_VERSION.to_le_bytes())?;
    w.write_all(&(cloud.len() as u32).to_le_bytes())?;
    for p in cloud.points() {
        for c in p {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_pcld<R: Read>(r: &mut R) -> std::result::Result<PointCloud, String> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| e.to_string())?;
    if &magic != PCLD_MAGIC {
        return Err(format!("bad magic {magic:?}"));
    }
    let version = read_u32(r)?;
    if version != PCLD_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let m = read_u32(r)? as usize;
    let mut points = Vec::with_capacity(m);
    let mut buf = [0u8; 8];
    for _ in 0..m {
        let mut p = [0.0; 3];
        for c in &mut p {
            r.read_exact(&mut buf).map_err(|e| e.to_string())?;
            *c = f64::from_le_bytes(buf);
        }
        points.push(p);
    }
    PointCloud::new(points).map_err(|e| e.to_string())
}

fn read_u32<R: Read>(r: &mut R) -> std::result::Result<u32, String> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| e.to_string())?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_pcld_file(path: &Path, cloud: &PointCloud) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_pcld(&mut w, cloud).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pcld_file(path: &Path) -> Result<PointCloud> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pcld(&mut BufReader::new(f)).map_err(|reason| Error::format(path, reason))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let cloud = PointCloud::new(vec![[1.0, 2.0, 3.0]]).unwrap();
        let mut buf = Vec::new();
        write_pcld(&mut buf, &cloud).unwrap();
        assert_eq!(&buf[..4], b"PCLD");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(buf.len(), 12 + 24);
        assert_eq!(read_pcld(&mut buf.as_slice()).unwrap(), cloud);
    }

    #[test]
    fn truncated_input_fails() {
        let cloud = PointCloud::new(vec![[1.0, 2.0, 3.0]]).unwrap();
        let mut buf = Vec::new();
        write_pcld(&mut buf, &cloud).unwrap();
        buf.truncate(20);
        assert!(read_pcld(&mut buf.as_slice()).is_err());
    }
}
