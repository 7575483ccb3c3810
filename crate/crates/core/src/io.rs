//! Shared serialization helpers: two-column CSV series and the binary
//! time-tag container.
//!
//! Time-tag files are little-endian: header `{magic "TTAG", version u16,
//! channel u16, count u64}` followed by `count` u64 timestamps in picoseconds.

use std::io::{self, Read, Write};

pub const TTAG_MAGIC: [u8; 4] = *b"TTAG";
pub const TTAG_VERSION: u16 = 1;

/// CSV with the given header line, one `a,b` row per entry, LF endings,
/// dot decimal separator.
pub fn two_column_csv(header: &str, rows: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut out = String::with_capacity(64);
    out.push_str(header);
    out.push('\n');
    for (a, b) in rows {
        out.push_str(&format!("{a},{b}\n"));
    }
    out
}

pub fn write_timetags(w: &mut impl Write, channel: u16, tags_ps: &[u64]) -> io::Result<()> {
    w.write_all(&TTAG_MAGIC)?;
    w.write_all(&TTAG_VERSION.to_le_bytes())?;
    w.write_all(&channel.to_le_bytes())?;
    w.write_all(&(tags_ps.len() as u64).to_le_bytes())?;
    for t in tags_ps {
        w.write_all(&t.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_timetags(r: &mut impl Read) -> io::Result<(u16, Vec<u64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != TTAG_MAGIC {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "bad magic, not a TTAG file",
        ));
    }
    let mut u16buf = [0u8; 2];
    r.read_exact(&mut u16buf)?;
    let version = u16::from_le_bytes(u16buf);
    if version != TTAG_VERSION {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unsupported TTAG version {version}"),
        ));
    }
    r.read_exact(&mut u16buf)?;
    let channel = u16::from_le_bytes(u16buf);
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let count = u64::from_le_bytes(u64buf) as usize;
    let mut tags = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut u64buf)?;
        tags.push(u64::from_le_bytes(u64buf));
    }
    Ok((channel, tags))
}
