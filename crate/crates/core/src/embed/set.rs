use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::EmbedError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[serde(alias = "Political")]
    Political,
    #[serde(alias = "Background")]
    Background,
    #[serde(alias = "Other")]
    Other,
    #[serde(alias = "WholePage", alias = "wholepage")]
    WholePage,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Political => "political",
            DatasetKind::Background => "background",
            DatasetKind::Other => "other",
            DatasetKind::WholePage => "whole_page",
        }
    }
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown dataset kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "trained_w2v")]
    TrainedW2V,
    #[serde(rename = "trained_d2v")]
    TrainedD2V,
    #[serde(rename = "external")]
    External,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::TrainedW2V => "trained_w2v",
            Provenance::TrainedD2V => "trained_d2v",
            Provenance::External => "external",
        }
    }
}

pub const NORM_TOLERANCE: f64 = 1e-6;

/// Vectors keyed by id, all of one dimension, kept in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
    normalized: bool,
    pub provenance: Provenance,
    pub dataset_kind: DatasetKind,
}

pub fn norm<T: Copy + Into<f64>>(v: &[T]) -> f64 {
    v.iter().map(|&x| {
        let x: f64 = x.into();
        x * x
    })
    .sum::<f64>()
    .sqrt()
}

/// Cosine similarity computed in `f64`; 0 when either vector is zero.
pub fn cosine<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y): (f64, f64) = (x.into(), y.into());
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    ab / (aa.sqrt() * bb.sqrt())
}

impl EmbeddingSet {
    pub fn new(dim: usize, dataset_kind: DatasetKind, provenance: Provenance) -> Self {
        EmbeddingSet { dim, ids: Vec::new(), index: HashMap::new(), data: Vec::new(), normalized: true, provenance, dataset_kind }
    }

    pub fn push(&mut self, id: String, v: Vec<f32>) -> Result<(), EmbedError> {
        if v.len() != self.dim {
            return Err(EmbedError::DimMismatch { id, expected: self.dim, found: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite(id));
        }
        if self.index.contains_key(&id) {
            return Err(EmbedError::DuplicateId(id));
        }
        self.normalized &= (norm(&v) - 1.0).abs() <= NORM_TOLERANCE;
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(&v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// True iff every vector has unit norm within tolerance. An empty set
    /// counts as normalized.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), self.row(i)))
    }

    /// Scales every vector to unit length.
    pub fn normalize(&mut self) -> Result<(), EmbedError> {
        for i in 0..self.ids.len() {
            let n = norm(self.row(i));
            if n == 0.0 {
                return Err(EmbedError::ZeroVector(self.ids[i].clone()));
            }
            for x in &mut self.data[i * self.dim..(i + 1) * self.dim] {
                *x = (*x as f64 / n) as f32;
            }
        }
        self.normalized = true;
        Ok(())
    }

    /// Copy restricted to the ids accepted by `keep`, order preserved.
    pub fn filter(&self, mut keep: impl FnMut(&str) -> bool) -> EmbeddingSet {
        let mut out = EmbeddingSet::new(self.dim, self.dataset_kind, self.provenance);
        for (id, v) in self.iter() {
            if keep(id) {
                out.push(id.to_string(), v.to_vec()).expect("source set is valid");
            }
        }
        out.normalized = self.normalized;
        out
    }
}

pub const PEMB_MAGIC: &[u8; 4] = b"PEMB";
pub const PEMB_VERSION: u32 = 1;

/// Writes the binary form: magic, version, dim, count, then per record a
/// u16 id length, the id bytes and `dim` little-endian f32s.
pub fn write_pemb<W: Write>(set: &EmbeddingSet, w: &mut W) -> Result<(), EmbedError> {
    let io = |e: std::io::Error| EmbedError::Io(e.to_string());
    w.write_all(PEMB_MAGIC).map_err(io)?;
    w.write_all(&PEMB_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(set.dim as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(set.len() as u64).to_le_bytes()).map_err(io)?;
    for (id, v) in set.iter() {
        let len = u16::try_from(id.len()).map_err(|_| EmbedError::Format { offset: 0, message: format!("id {id:?} longer than 65535 bytes") })?;
        w.write_all(&len.to_le_bytes()).map_err(io)?;
        w.write_all(id.as_bytes()).map_err(io)?;
        for x in v {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], EmbedError> {
        if self.buf.len() - self.pos < n {
            return Err(EmbedError::Format { offset: self.pos, message: format!("truncated while reading {what}") });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, EmbedError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32, EmbedError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, EmbedError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn read_pemb<R: Read>(r: &mut R, kind: DatasetKind, provenance: Provenance) -> Result<EmbeddingSet, EmbedError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| EmbedError::Io(e.to_string()))?;
    parse_pemb(&buf, kind, provenance)
}

pub fn parse_pemb(buf: &[u8], kind: DatasetKind, provenance: Provenance) -> Result<EmbeddingSet, EmbedError> {
    let mut c = Cursor { buf, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != PEMB_MAGIC {
        return Err(EmbedError::BadMagic { expected: "PEMB", found: String::from_utf8_lossy(magic).into_owned() });
    }
    let version = c.u32("version")?;
    if version != PEMB_VERSION {
        return Err(EmbedError::UnsupportedVersion { found: version, supported: PEMB_VERSION });
    }
    let dim = c.u32("dim")? as usize;
    let count = c.u64("count")?;
    let mut set = EmbeddingSet::new(dim, kind, provenance);
    for rec in 0..count {
        let start = c.pos;
        let len = c.u16("id length")? as usize;
        let id = std::str::from_utf8(c.take(len, "id")?)
            .map_err(|_| EmbedError::Format { offset: start, message: format!("record {rec}: id is not UTF-8") })?
            .to_string();
        let raw = c.take(dim * 4, "vector")?;
        let v: Vec<f32> = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
        set.push(id, v).map_err(|e| EmbedError::Format { offset: start, message: format!("record {rec}: {e}") })?;
    }
    if c.pos != buf.len() {
        return Err(EmbedError::Format { offset: c.pos, message: format!("{} trailing bytes", buf.len() - c.pos) });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> EmbeddingSet {
        let mut s = EmbeddingSet::new(3, DatasetKind::Political, Provenance::External);
        s.push("a".into(), vec![1.0, 2.0, 2.0]).unwrap();
        s.push("b".into(), vec![0.0, -3.0, 4.0]).unwrap();
        s
    }

    #[test]
    fn push_validates() {
        let mut s = sample();
        assert!(matches!(s.push("c".into(), vec![1.0]), Err(EmbedError::DimMismatch { .. })));
        assert!(matches!(s.push("a".into(), vec![1.0, 0.0, 0.0]), Err(EmbedError::DuplicateId(_))));
        assert!(matches!(s.push("n".into(), vec![f32::NAN, 0.0, 0.0]), Err(EmbedError::NonFinite(_))));
        let mut z = EmbeddingSet::new(2, DatasetKind::Other, Provenance::External);
        z.push("z".into(), vec![0.0, 0.0]).unwrap();
        assert!(matches!(z.normalize(), Err(EmbedError::ZeroVector(_))));
    }

    #[test]
    fn normalization() {
        let mut s = sample();
        assert!(!s.is_normalized());
        s.normalize().unwrap();
        assert!(s.is_normalized());
        for (_, v) in s.iter() {
            assert!((norm(v) - 1.0).abs() <= NORM_TOLERANCE);
            assert!((cosine(v, v) - 1.0).abs() <= 1e-6);
        }
        assert_eq!(s.get("a").unwrap(), &[1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn pemb_layout_is_exact() {
        let mut buf = Vec::new();
        write_pemb(&sample(), &mut buf).unwrap();
        let mut expect = b"PEMB".to_vec();
        expect.extend(1u32.to_le_bytes());
        expect.extend(3u32.to_le_bytes());
        expect.extend(2u64.to_le_bytes());
        expect.extend(1u16.to_le_bytes());
        expect.push(b'a');
        for x in [1.0f32, 2.0, 2.0] {
            expect.extend(x.to_le_bytes());
        }
        assert_eq!(&buf[..expect.len()], &expect[..]);
        assert_eq!(buf.len(), 20 + 2 * (2 + 1 + 12));
    }

    #[test]
    fn pemb_errors() {
        let mut buf = Vec::new();
        write_pemb(&sample(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(parse_pemb(&bad, DatasetKind::Political, Provenance::External), Err(EmbedError::BadMagic { .. })));
        let mut future = buf.clone();
        future[4] = 9;
        assert!(matches!(
            parse_pemb(&future, DatasetKind::Political, Provenance::External),
            Err(EmbedError::UnsupportedVersion { found: 9, .. })
        ));
        assert!(matches!(
            parse_pemb(&buf[..buf.len() - 1], DatasetKind::Political, Provenance::External),
            Err(EmbedError::Format { .. })
        ));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(parse_pemb(&extra, DatasetKind::Political, Provenance::External), Err(EmbedError::Format { .. })));
    }

    #[test]
    fn kind_names() {
        assert_eq!("political".parse::<DatasetKind>().unwrap(), DatasetKind::Political);
        assert_eq!("WholePage".parse::<DatasetKind>().unwrap(), DatasetKind::WholePage);
        assert!("nope".parse::<DatasetKind>().is_err());
        assert_eq!(serde_json::to_string(&Provenance::TrainedD2V).unwrap(), format!("\"{}\"", Provenance::TrainedD2V.as_str()));
    }

    proptest! {
        #[test]
        fn pemb_round_trip(rows in proptest::collection::vec(("[a-z]{1,6}", proptest::collection::vec(-1e3f32..1e3, 4)), 0..20)) {
            let mut s = EmbeddingSet::new(4, DatasetKind::Background, Provenance::TrainedD2V);
            for (id, v) in rows {
                let _ = s.push(id, v);
            }
            let mut buf = Vec::new();
            write_pemb(&s, &mut buf).unwrap();
            let back = parse_pemb(&buf, DatasetKind::Background, Provenance::TrainedD2V).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
