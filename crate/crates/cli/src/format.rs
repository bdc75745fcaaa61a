//! The binary container for partitions and point sets.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic           8 bytes  "TSMPART1"
//! dimension       u32
//! per axis:       lower f64, upper f64, points u32
//! config echo     u32 length + UTF-8 bytes
//! region table    u16 count, then per region: code u8, name-length u8, name
//! payload         one u8 code per lattice point, row-major
//! checksum        u64 FNV-1a over the payload bytes
//! ```
//!
//! The region-code table is always explicit; point-set exports use the
//! two-code table `out`/`in`. Files are written to a temporary sibling
//! and renamed into place, so failed runs leave no partial output.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use tsm_core::grid::Grid;
use tsm_core::tsm::RegionLabel;

use crate::config::fnv1a64;
use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"TSMPART1";

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionFile {
    pub grid: Arc<Grid>,
    pub config_echo: String,
    /// code -> name table, in file order.
    pub regions: Vec<(u8, String)>,
    /// One code per lattice point, row-major.
    pub labels: Vec<u8>,
}

impl PartitionFile {
    pub fn region_name(&self, code: u8) -> Option<&str> {
        self.regions
            .iter()
            .find(|(c, _)| *c == code)
            .map(|(_, n)| n.as_str())
    }
}

/// The full fourteen-label table.
pub fn region_table() -> Vec<(u8, String)> {
    RegionLabel::ALL
        .iter()
        .map(|l| (l.code(), l.name().to_string()))
        .collect()
}

/// Two-code table for set exports.
pub fn set_table() -> Vec<(u8, String)> {
    vec![(0, "out".to_string()), (1, "in".to_string())]
}

fn corrupt(msg: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("partition file: {msg}"))
}

pub fn encode(file: &PartitionFile) -> CliResult<Vec<u8>> {
    let grid = &file.grid;
    if file.labels.len() != grid.len() {
        return Err(CliError::Config(format!(
            "payload length {} does not match grid size {}",
            file.labels.len(),
            grid.len()
        )));
    }
    for &code in &file.labels {
        if !file.regions.iter().any(|(c, _)| *c == code) {
            return Err(CliError::Config(format!(
                "label code {code} missing from region table"
            )));
        }
    }
    let mut out: Vec<u8> = Vec::with_capacity(64 + file.labels.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    for i in 0..grid.dim() {
        out.extend_from_slice(&grid.lower()[i].to_le_bytes());
        out.extend_from_slice(&grid.upper()[i].to_le_bytes());
        out.extend_from_slice(&(grid.points_per_axis()[i] as u32).to_le_bytes());
    }
    let echo = file.config_echo.as_bytes();
    out.extend_from_slice(&(echo.len() as u32).to_le_bytes());
    out.extend_from_slice(echo);
    out.extend_from_slice(&(file.regions.len() as u16).to_le_bytes());
    for (code, name) in &file.regions {
        let bytes = name.as_bytes();
        if bytes.len() > u8::MAX as usize {
            return Err(CliError::Config(format!("region name `{name}` too long")));
        }
        out.push(*code);
        out.push(bytes.len() as u8);
        out.extend_from_slice(bytes);
    }
    out.extend_from_slice(&file.labels);
    out.extend_from_slice(&fnv1a64(&file.labels).to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(corrupt("truncated"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> CliResult<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> CliResult<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> CliResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(data: &[u8]) -> CliResult<PartitionFile> {
    let mut cur = Cursor { data, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let dim = cur.u32()? as usize;
    if !(1..=8).contains(&dim) {
        return Err(corrupt(format!("unreasonable dimension {dim}")));
    }
    let mut lower = Vec::with_capacity(dim);
    let mut upper = Vec::with_capacity(dim);
    let mut points = Vec::with_capacity(dim);
    for _ in 0..dim {
        lower.push(cur.f64()?);
        upper.push(cur.f64()?);
        points.push(cur.u32()? as usize);
    }
    let echo_len = cur.u32()? as usize;
    let config_echo = String::from_utf8(cur.take(echo_len)?.to_vec())
        .map_err(|_| corrupt("config echo is not UTF-8"))?;
    let n_regions = cur.u16()? as usize;
    let mut regions = Vec::with_capacity(n_regions);
    for _ in 0..n_regions {
        let code = cur.u8()?;
        let len = cur.u8()? as usize;
        let name = String::from_utf8(cur.take(len)?.to_vec())
            .map_err(|_| corrupt("region name is not UTF-8"))?;
        regions.push((code, name));
    }
    let grid = Grid::new(lower, upper, points).map_err(corrupt)?;
    let labels = cur.take(grid.len())?.to_vec();
    let checksum = cur.u64()?;
    if cur.pos != data.len() {
        return Err(corrupt("trailing bytes"));
    }
    if checksum != fnv1a64(&labels) {
        return Err(corrupt("checksum mismatch in label payload"));
    }
    for &code in &labels {
        if !regions.iter().any(|(c, _)| *c == code) {
            return Err(corrupt(format!("label code {code} not in region table")));
        }
    }
    Ok(PartitionFile {
        grid,
        config_echo,
        regions,
        labels,
    })
}

/// Byte offset of the label payload within the encoded file.
pub fn payload_offset(file: &PartitionFile) -> usize {
    8 + 4
        + file.grid.dim() * 20
        + 4
        + file.config_echo.len()
        + 2
        + file.regions.iter().map(|(_, n)| 2 + n.len()).sum::<usize>()
}

/// Writes via a temporary sibling file plus rename.
pub fn write_file(path: &Path, file: &PartitionFile) -> CliResult<()> {
    let bytes = encode(file)?;
    let tmp = path.with_extension("tmp~");
    {
        let mut f = fs::File::create(&tmp)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", tmp.display())))?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
        .map_err(|e| CliError::Io(format!("renaming into {}: {e}", path.display())))?;
    Ok(())
}

pub fn read_file(path: &Path) -> CliResult<PartitionFile> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| CliError::Io(format!("opening {}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    decode(&bytes)
}
