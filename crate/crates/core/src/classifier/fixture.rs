//! Binary score-map fixtures.
//!
//! A file is a concatenation of records, each laid out little-endian as
//! `"SMAP" | version u32 | frame u32 | k u32 | width u32 | height u32 |
//! scale f32` followed by `k*k*width*height` f32 values, plane-major then
//! row-major.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::grid::ScoreMapGrid;
use super::ScoreMapProvider;
use crate::error::{Error, Result};

pub const SMAP_MAGIC: [u8; 4] = *b"SMAP";
pub const SMAP_VERSION: u32 = 1;
const HEADER_LEN: u64 = 28;

pub fn write_grid<W: Write>(out: &mut W, grid: &ScoreMapGrid) -> io::Result<()> {
    out.write_all(&SMAP_MAGIC)?;
    for v in [
        SMAP_VERSION,
        grid.frame(),
        grid.k() as u32,
        grid.width() as u32,
        grid.height() as u32,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&grid.scale().to_le_bytes())?;
    let mut buf = Vec::with_capacity(grid.values().len() * 4);
    for v in grid.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

#[derive(Debug, Clone, Copy)]
struct Header {
    frame: u32,
    k: usize,
    width: usize,
    height: usize,
    scale: f32,
}

impl Header {
    fn payload_len(&self) -> u64 {
        (self.k * self.k * self.width * self.height) as u64 * 4
    }
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

/// Reads one header; `Ok(None)` at a clean end of input.
fn read_header<R: Read>(input: &mut R) -> Result<Option<Header>> {
    let mut buf = [0u8; HEADER_LEN as usize];
    let mut filled = 0;
    while filled < buf.len() {
        let n = input
            .read(&mut buf[filled..])
            .map_err(|e| Error::Format(format!("reading header: {e}")))?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    if filled == 0 {
        return Ok(None);
    }
    if filled < buf.len() {
        return Err(Error::Format("truncated score-map header".into()));
    }
    if buf[..4] != SMAP_MAGIC {
        return Err(Error::Format("bad score-map magic".into()));
    }
    let version = u32_at(&buf, 4);
    if version != SMAP_VERSION {
        return Err(Error::Format(format!("unsupported score-map version {version}")));
    }
    let scale = f32::from_le_bytes(buf[24..28].try_into().unwrap());
    Ok(Some(Header {
        frame: u32_at(&buf, 8),
        k: u32_at(&buf, 12) as usize,
        width: u32_at(&buf, 16) as usize,
        height: u32_at(&buf, 20) as usize,
        scale,
    }))
}

fn read_payload<R: Read>(input: &mut R, header: &Header) -> Result<ScoreMapGrid> {
    let mut raw = vec![0u8; header.payload_len() as usize];
    input
        .read_exact(&mut raw)
        .map_err(|_| Error::Format(format!("truncated score maps for frame {}", header.frame)))?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ScoreMapGrid::new(
        header.frame,
        header.k,
        header.width,
        header.height,
        header.scale,
        values,
    )
}

/// Reads one record; `Ok(None)` at a clean end of input.
pub fn read_grid<R: Read>(input: &mut R) -> Result<Option<ScoreMapGrid>> {
    match read_header(input)? {
        Some(h) => read_payload(input, &h).map(Some),
        None => Ok(None),
    }
}

pub fn write_score_map_file<'a>(
    path: &Path,
    grids: impl IntoIterator<Item = &'a ScoreMapGrid>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for g in grids {
        write_grid(&mut out, g).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_score_map_file(path: &Path) -> Result<Vec<ScoreMapGrid>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut input = BufReader::new(file);
    let mut grids = Vec::new();
    while let Some(g) = read_grid(&mut input)? {
        grids.push(g);
    }
    Ok(grids)
}

/// File-backed provider. Only headers are scanned on open; each request
/// seeks to and decodes a single record, so memory stays bounded by one
/// frame regardless of sequence length.
#[derive(Debug)]
pub struct FixtureScoreMaps {
    path: PathBuf,
    offsets: BTreeMap<u32, u64>,
}

impl FixtureScoreMaps {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let len = file.metadata().map_err(|e| Error::io(&path, e))?.len();
        let mut input = BufReader::new(file);
        let mut offsets = BTreeMap::new();
        let mut pos = 0u64;
        while let Some(h) = read_header(&mut input)? {
            let next = pos + HEADER_LEN + h.payload_len();
            if next > len {
                return Err(Error::Format(format!(
                    "truncated score maps for frame {}",
                    h.frame
                )));
            }
            if offsets.insert(h.frame, pos).is_some() {
                return Err(Error::Format(format!("duplicate score maps for frame {}", h.frame)));
            }
            input
                .seek(SeekFrom::Start(next))
                .map_err(|e| Error::io(&path, e))?;
            pos = next;
        }
        Ok(Self { path, offsets })
    }

    pub fn frames(&self) -> impl Iterator<Item = u32> + '_ {
        self.offsets.keys().copied()
    }
}

impl ScoreMapProvider for FixtureScoreMaps {
    fn score_maps(&self, frame: u32) -> Result<Arc<ScoreMapGrid>> {
        let offset = *self
            .offsets
            .get(&frame)
            .ok_or_else(|| Error::Input(format!("no score maps for frame {frame}")))?;
        let mut file = File::open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        file.seek(SeekFrom::Start(offset))
            .map_err(|e| Error::io(&self.path, e))?;
        let mut input = BufReader::new(file);
        let grid = read_grid(&mut input)?
            .ok_or_else(|| Error::Format(format!("missing record for frame {frame}")))?;
        Ok(Arc::new(grid))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{synth_score_maps, SynthParams};
    use crate::geometry::BoundingBox;

    fn sample(frame: u32) -> ScoreMapGrid {
        let params = SynthParams {
            k: 3,
            noise_sigma: 0.3,
            seed: 9,
            ..Default::default()
        };
        let obj = BoundingBox::new(10.0, 20.0, 30.0, 60.0).unwrap();
        synth_score_maps(frame, &[obj], (96, 80), &params).unwrap()
    }

    #[test]
    fn header_layout() {
        let g = sample(5);
        let mut buf = Vec::new();
        write_grid(&mut buf, &g).unwrap();
        assert_eq!(&buf[..4], b"SMAP");
        assert_eq!(u32_at(&buf, 4), 1);
        assert_eq!(u32_at(&buf, 8), 5);
        assert_eq!(u32_at(&buf, 12), 3);
        assert_eq!(u32_at(&buf, 16), 12);
        assert_eq!(u32_at(&buf, 20), 10);
        assert_eq!(f32::from_le_bytes(buf[24..28].try_into().unwrap()), 8.0);
        assert_eq!(buf.len(), 28 + 9 * 12 * 10 * 4);
        // first value of plane 0 row 0
        assert_eq!(f32::from_le_bytes(buf[28..32].try_into().unwrap()), g.value(0, 0, 0));
    }

    #[test]
    fn file_round_trip_and_provider() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("maps.smap");
        let grids: Vec<_> = (1..=4).map(sample).collect();
        write_score_map_file(&path, &grids).unwrap();
        assert_eq!(read_score_map_file(&path).unwrap(), grids);

        let provider = FixtureScoreMaps::open(&path).unwrap();
        assert_eq!(provider.frames().collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert_eq!(*provider.score_maps(3).unwrap(), grids[2]);
        assert!(provider.score_maps(9).is_err());
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let g = sample(1);
        let mut buf = Vec::new();
        write_grid(&mut buf, &g).unwrap();
        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(read_grid(&mut &truncated[..]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_grid(&mut &bad[..]), Err(Error::Format(_))));
        assert!(read_grid(&mut &[][..]).unwrap().is_none());
    }
}
