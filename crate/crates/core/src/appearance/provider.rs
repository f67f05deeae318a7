use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use super::embedding::Embedding;
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::rng;

/// Source of appearance embeddings for detection boxes. Must return the
/// same vector for the same `(frame, box)` within a run.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, frame: u32, bbox: &BoundingBox) -> Result<Embedding>;
}

/// Test stand-in for a trained re-identification network: every identity
/// maps to a fixed random unit vector, perturbed by Gaussian noise.
#[derive(Debug, Clone)]
pub struct OracleEmbeddings {
    dim: usize,
    sigma: f64,
    seed: u64,
    identities: BTreeMap<u32, Vec<(BoundingBox, u64)>>,
    prototypes: HashMap<u64, Vec<f32>>,
}

/// Minimum IoU for a query box to inherit an identity.
const IDENTITY_IOU: f64 = 0.5;

fn gaussian(parts: &[u64], dim: usize) -> Vec<f64> {
    let mut rng = rng::seeded(parts);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn unit_vector(parts: &[u64], dim: usize) -> Vec<f32> {
    let v = gaussian(parts, dim);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / n) as f32).collect()
}

fn box_key(b: &BoundingBox) -> [u64; 4] {
    [b.x0().to_bits(), b.y0().to_bits(), b.w().to_bits(), b.h().to_bits()]
}

impl OracleEmbeddings {
    /// `identities` lists, per frame, the boxes whose identity is known.
    pub fn new(
        identities: BTreeMap<u32, Vec<(BoundingBox, u64)>>,
        dim: usize,
        sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Input(format!("sigma must be non-negative, got {sigma}")));
        }
        if dim == 0 {
            return Err(Error::Input("embedding dimension must be positive".into()));
        }
        let mut prototypes = HashMap::new();
        for list in identities.values() {
            for &(_, id) in list {
                prototypes
                    .entry(id)
                    .or_insert_with(|| unit_vector(&[seed, 0x1D, id], dim));
            }
        }
        Ok(Self {
            dim,
            sigma,
            seed,
            identities,
            prototypes,
        })
    }

    /// Identity of the best-overlapping known box in `frame`.
    pub fn identity_of(&self, frame: u32, bbox: &BoundingBox) -> Option<u64> {
        let list = self.identities.get(&frame)?;
        let mut best: Option<(f64, u64)> = None;
        for (b, id) in list {
            let v = iou(b, bbox);
            if v >= IDENTITY_IOU && best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, *id));
            }
        }
        best.map(|(_, id)| id)
    }
}

impl EmbeddingProvider for OracleEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, frame: u32, bbox: &BoundingBox) -> Result<Embedding> {
        let key = box_key(bbox);
        let Some(id) = self.identity_of(frame, bbox) else {
            let parts = [self.seed, 0xF0, frame as u64, key[0], key[1], key[2], key[3]];
            return Embedding::new(unit_vector(&parts, self.dim));
        };
        let proto = &self.prototypes[&id];
        if self.sigma == 0.0 {
            return Embedding::new(proto.clone());
        }
        let parts = [self.seed, 0xA5, frame as u64, id, key[0], key[1], key[2], key[3]];
        let noise = gaussian(&parts, self.dim);
        Embedding::new(
            proto
                .iter()
                .zip(noise)
                .map(|(&p, n)| p + (self.sigma * n) as f32)
                .collect(),
        )
    }
}

pub const REID_MAGIC: [u8; 4] = *b"REID";
pub const REID_VERSION: u32 = 1;
/// Stored boxes within this many pixels (per coordinate) of a query match.
pub const MATCH_TOLERANCE_PX: f64 = 1.0;

/// One stored embedding in a fixture file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub frame: u32,
    pub bbox: BoundingBox,
    pub embedding: Embedding,
}

/// Writes `"REID" | version u32 | dim u32 | count u64` then per record
/// `frame u32 | x0 f32 | y0 f32 | w f32 | h f32 | dim x f32`, little-endian.
pub fn write_embedding_file(path: &Path, dim: usize, records: &[EmbeddingRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut buf = Vec::with_capacity(20);
    buf.extend_from_slice(&REID_MAGIC);
    buf.extend_from_slice(&REID_VERSION.to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    out.write_all(&buf).map_err(|e| Error::io(path, e))?;
    for r in records {
        if r.embedding.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: r.embedding.dim(),
            });
        }
        buf.clear();
        buf.extend_from_slice(&r.frame.to_le_bytes());
        for v in [r.bbox.x0(), r.bbox.y0(), r.bbox.w(), r.bbox.h()] {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        for v in r.embedding.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn f32s(raw: &[u8]) -> impl Iterator<Item = f32> + '_ {
    raw.chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
}

pub fn read_embedding_file(path: &Path) -> Result<(usize, Vec<EmbeddingRecord>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut input = BufReader::new(file);
    let mut header = [0u8; 20];
    input
        .read_exact(&mut header)
        .map_err(|_| Error::Format("truncated embedding header".into()))?;
    if header[..4] != REID_MAGIC {
        return Err(Error::Format("bad embedding magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != REID_VERSION {
        return Err(Error::Format(format!("unsupported embedding version {version}")));
    }
    let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(header[12..20].try_into().unwrap());
    let mut raw = vec![0u8; 20 + dim * 4];
    let mut records = Vec::new();
    for i in 0..count {
        input
            .read_exact(&mut raw)
            .map_err(|_| Error::Format(format!("truncated embedding record {i}")))?;
        let frame = u32::from_le_bytes(raw[..4].try_into().unwrap());
        let coords: Vec<f32> = f32s(&raw[4..20]).collect();
        let bbox = BoundingBox::new(
            coords[0] as f64,
            coords[1] as f64,
            coords[2] as f64,
            coords[3] as f64,
        )
        .map_err(|e| Error::Format(format!("record {i}: {e}")))?;
        let embedding = Embedding::new(f32s(&raw[20..]).collect())
            .map_err(|e| Error::Format(format!("record {i}: {e}")))?;
        records.push(EmbeddingRecord {
            frame,
            bbox,
            embedding,
        });
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format("trailing bytes after embedding records".into()));
    }
    Ok((dim, records))
}

/// Precomputed embeddings looked up by frame and nearest stored box.
#[derive(Debug, Clone)]
pub struct FileEmbeddings {
    dim: usize,
    by_frame: HashMap<u32, Vec<(BoundingBox, Embedding)>>,
}

impl FileEmbeddings {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let (dim, records) = read_embedding_file(path.as_ref())?;
        Ok(Self::from_records(dim, records))
    }

    pub fn from_records(dim: usize, records: Vec<EmbeddingRecord>) -> Self {
        let mut by_frame: HashMap<u32, Vec<(BoundingBox, Embedding)>> = HashMap::new();
        for r in records {
            by_frame.entry(r.frame).or_default().push((r.bbox, r.embedding));
        }
        Self { dim, by_frame }
    }
}

impl EmbeddingProvider for FileEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, frame: u32, bbox: &BoundingBox) -> Result<Embedding> {
        let missing = || Error::MissingFeature {
            frame,
            bbox: bbox.to_string(),
        };
        let list = self.by_frame.get(&frame).ok_or_else(missing)?;
        list.iter()
            .map(|(b, e)| (b.max_coord_diff(bbox), e))
            .filter(|(d, _)| *d <= MATCH_TOLERANCE_PX)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, e)| e.clone())
            .ok_or_else(missing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::appearance::embedding_distance;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn two_ids() -> BTreeMap<u32, Vec<(BoundingBox, u64)>> {
        let mut m = BTreeMap::new();
        for f in 1..=3 {
            m.insert(
                f,
                vec![
                    (bb(10.0 + f as f64, 10.0, 30.0, 80.0), 1),
                    (bb(200.0, 50.0 + f as f64, 30.0, 80.0), 2),
                ],
            );
        }
        m
    }

    #[test]
    fn noiseless_oracle() {
        let p = OracleEmbeddings::new(two_ids(), 64, 0.0, 7).unwrap();
        let a1 = p.embed(1, &bb(11.0, 10.0, 30.0, 80.0)).unwrap();
        let a3 = p.embed(3, &bb(13.0, 10.0, 30.0, 80.0)).unwrap();
        assert_eq!(embedding_distance(&a1, &a3).unwrap(), 0.0);
        let b1 = p.embed(1, &bb(200.0, 51.0, 30.0, 80.0)).unwrap();
        let b2 = p.embed(2, &bb(200.0, 52.0, 30.0, 80.0)).unwrap();
        let d1 = embedding_distance(&a1, &b1).unwrap();
        assert_eq!(d1, embedding_distance(&a3, &b2).unwrap());
        assert!(d1 > 0.5);
        assert!((a1.norm() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn oracle_is_seeded() {
        let q = bb(11.0, 10.0, 30.0, 80.0);
        let a = OracleEmbeddings::new(two_ids(), 32, 0.1, 1).unwrap();
        let b = OracleEmbeddings::new(two_ids(), 32, 0.1, 1).unwrap();
        let c = OracleEmbeddings::new(two_ids(), 32, 0.1, 2).unwrap();
        assert_eq!(a.embed(1, &q).unwrap(), b.embed(1, &q).unwrap());
        assert_eq!(a.embed(1, &q).unwrap(), a.embed(1, &q).unwrap());
        assert_ne!(a.embed(1, &q).unwrap(), c.embed(1, &q).unwrap());
        // unknown boxes get their own vectors
        let stray = bb(500.0, 500.0, 10.0, 10.0);
        assert_eq!(a.identity_of(1, &stray), None);
        assert_eq!(a.embed(1, &stray).unwrap(), b.embed(1, &stray).unwrap());
        assert!(a.embed(1, &stray).unwrap() != a.embed(1, &q).unwrap());
    }

    #[test]
    fn fixture_round_trip_and_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reid.bin");
        let e = Embedding::new(vec![0.25, -1.0, 3.5]).unwrap();
        let records = vec![
            EmbeddingRecord {
                frame: 1,
                bbox: bb(10.0, 20.0, 30.0, 40.0),
                embedding: e.clone(),
            },
            EmbeddingRecord {
                frame: 2,
                bbox: bb(12.0, 20.0, 30.0, 40.0),
                embedding: Embedding::new(vec![1.0, 2.0, 3.0]).unwrap(),
            },
        ];
        write_embedding_file(&path, 3, &records).unwrap();
        let raw = std::fs::read(&path).unwrap();
        assert_eq!(&raw[..4], b"REID");
        assert_eq!(raw.len(), 20 + 2 * (20 + 12));
        let (dim, back) = read_embedding_file(&path).unwrap();
        assert_eq!(dim, 3);
        assert_eq!(back, records);

        let p = FileEmbeddings::open(&path).unwrap();
        assert_eq!(p.embed(1, &bb(10.0, 20.0, 30.0, 40.0)).unwrap(), e);
        assert_eq!(p.embed(1, &bb(10.5, 19.5, 30.0, 40.5)).unwrap(), e);
        assert!(matches!(p.embed(1, &bb(12.0, 20.0, 30.0, 40.0)), Err(Error::MissingFeature { .. })));
        assert!(matches!(p.embed(7, &bb(10.0, 20.0, 30.0, 40.0)), Err(Error::MissingFeature { .. })));
    }

    #[test]
    fn corrupt_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"REID\x01\x00\x00\x00\x02\x00\x00\x00\x05\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(FileEmbeddings::open(&path), Err(Error::Format(_))));
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(FileEmbeddings::open(&path), Err(Error::Format(_))));
    }
}
