//! Binary pipeline files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic "HIRULPIP" | version u32 | section count u32
//! count × (tag [u8; 4], offset u64, length u64)
//! section payloads
//! CRC-32 u32 over every preceding byte
//! ```
//!
//! Sections: `CONF` (key=value text), `NORM`, `PCA `, `LSTM` (absent for
//! variants without reconstruction), `OLS `, `CURV`. Floats are stored as raw
//! bits so a round trip is exact.

use std::path::Path;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::health::HiCurve;
use crate::lstm::LstmEdModel;
use crate::matrix::Matrix;
use crate::numerics::{NormStats, OlsModel, PcaModel};
use crate::pipeline::Pipeline;

pub const MAGIC: &[u8; 8] = b"HIRULPIP";
pub const FORMAT_VERSION: u32 = 1;

const HEADER_LEN: usize = 16;
const ENTRY_LEN: usize = 20;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn len(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64s(&mut self, v: &[f64]) {
        self.len(v.len());
        for x in v {
            self.0.extend_from_slice(&x.to_bits().to_le_bytes());
        }
    }

    fn bytes(&mut self, b: &[u8]) {
        self.len(b.len());
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], section: &'static str) -> Self {
        Self { buf, pos: 0, section }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!("section {} is truncated", self.section))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        let remaining = (self.buf.len() - self.pos) as u64;
        // every length prefixes at least one byte per element
        if v > remaining {
            return Err(Error::Format(format!("section {}: length {v} exceeds section size", self.section)));
        }
        Ok(v as usize)
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect())
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len()?;
        self.take(n)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!("section {} has trailing bytes", self.section)));
        }
        Ok(())
    }
}

fn encode_norm(n: &NormStats) -> Vec<u8> {
    let mut w = Writer::default();
    w.f64s(&n.mean);
    w.f64s(&n.std);
    w.len(n.dropped.len());
    for &d in &n.dropped {
        w.len(d);
    }
    w.0
}

fn decode_norm(buf: &[u8]) -> Result<NormStats> {
    let mut r = Reader::new(buf, "NORM");
    let mean = r.f64s()?;
    let std = r.f64s()?;
    let k = r.len()?;
    let dropped = (0..k).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    if mean.len() != std.len() || dropped.iter().any(|&d| d >= mean.len()) {
        return Err(Error::Format("section NORM is inconsistent".into()));
    }
    Ok(NormStats { mean, std, dropped })
}

fn encode_matrix(w: &mut Writer, m: &Matrix) {
    w.len(m.rows());
    w.len(m.cols());
    w.f64s(m.as_slice());
}

fn decode_matrix(r: &mut Reader) -> Result<Matrix> {
    let rows = r.u64()? as usize;
    let cols = r.u64()? as usize;
    let data = r.f64s()?;
    if rows.checked_mul(cols) != Some(data.len()) {
        return Err(Error::Format(format!("section {}: matrix shape mismatch", r.section)));
    }
    Matrix::from_vec(rows, cols, data).map_err(|e| Error::Format(format!("section {}: {e}", r.section)))
}

fn encode_pca(p: &PcaModel) -> Vec<u8> {
    let mut w = Writer::default();
    encode_matrix(&mut w, &p.components);
    w.f64s(&p.variances);
    w.0
}

fn decode_pca(buf: &[u8]) -> Result<PcaModel> {
    let mut r = Reader::new(buf, "PCA");
    let components = decode_matrix(&mut r)?;
    let variances = r.f64s()?;
    r.finish()?;
    if variances.len() != components.rows() {
        return Err(Error::Format("section PCA is inconsistent".into()));
    }
    Ok(PcaModel { components, variances })
}

fn encode_lstm(m: &LstmEdModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.u32(m.input_dim as u32);
    w.u32(m.hidden_units as u32);
    w.u32(m.window_len as u32);
    w.u32(FORMAT_VERSION);
    for block in m.param_slices() {
        w.f64s(block);
    }
    w.0
}

fn decode_lstm(buf: &[u8]) -> Result<LstmEdModel> {
    let mut r = Reader::new(buf, "LSTM");
    let p = r.u32()? as usize;
    let c = r.u32()? as usize;
    let l = r.u32()? as usize;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if p == 0 || c == 0 || l == 0 {
        return Err(Error::Format("section LSTM has a zero dimension".into()));
    }
    // bound the allocation by what the section can actually hold
    let needed = 8 * (4 * c * (p + c) + 4 * c) as u128 * 2 + 8 * (c * p + p) as u128;
    if needed > buf.len() as u128 {
        return Err(Error::Format("section LSTM is truncated".into()));
    }
    let mut model = LstmEdModel::zeros(p, c, l);
    for block in model.param_slices_mut() {
        let vals = r.f64s()?;
        if vals.len() != block.len() {
            return Err(Error::Format("section LSTM: parameter block size mismatch".into()));
        }
        block.copy_from_slice(&vals);
    }
    r.finish()?;
    Ok(model)
}

fn encode_ols(m: &OlsModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.f64s(&m.theta);
    w.u64(m.theta0.to_bits());
    w.0
}

fn decode_ols(buf: &[u8]) -> Result<OlsModel> {
    let mut r = Reader::new(buf, "OLS");
    let theta = r.f64s()?;
    let theta0 = f64::from_bits(r.u64()?);
    r.finish()?;
    Ok(OlsModel { theta, theta0 })
}

fn encode_curves(curves: &[(String, HiCurve)]) -> Vec<u8> {
    let mut w = Writer::default();
    w.len(curves.len());
    for (id, c) in curves {
        w.bytes(id.as_bytes());
        w.f64s(&c.values);
    }
    w.0
}

fn decode_curves(buf: &[u8]) -> Result<Vec<(String, HiCurve)>> {
    let mut r = Reader::new(buf, "CURV");
    let n = r.len()?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let id = std::str::from_utf8(r.bytes()?)
            .map_err(|_| Error::Format("section CURV: instance id is not UTF-8".into()))?
            .to_string();
        out.push((id, HiCurve::new(r.f64s()?)));
    }
    r.finish()?;
    Ok(out)
}

pub fn pipeline_to_bytes(p: &Pipeline) -> Vec<u8> {
    let mut sections: Vec<(&[u8; 4], Vec<u8>)> = vec![
        (b"CONF", p.config.to_text().into_bytes()),
        (b"NORM", encode_norm(&p.norm)),
        (b"PCA ", encode_pca(&p.pca)),
    ];
    if let Some(lstm) = &p.lstm {
        sections.push((b"LSTM", encode_lstm(lstm)));
    }
    sections.push((b"OLS ", encode_ols(&p.hi_model)));
    sections.push((b"CURV", encode_curves(&p.train_curves)));

    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u32(sections.len() as u32);
    let mut offset = (HEADER_LEN + ENTRY_LEN * sections.len()) as u64;
    for (tag, payload) in &sections {
        w.0.extend_from_slice(*tag);
        w.u64(offset);
        w.u64(payload.len() as u64);
        offset += payload.len() as u64;
    }
    for (_, payload) in &sections {
        w.0.extend_from_slice(payload);
    }
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

pub fn pipeline_from_bytes(buf: &[u8]) -> Result<Pipeline> {
    if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("not a pipeline file (bad magic)".into()));
    }
    if buf.len() < HEADER_LEN {
        return Err(Error::Format(format!("truncated header ({} bytes)", buf.len())));
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let count = u32::from_le_bytes(buf[12..16].try_into().expect("4 bytes")) as usize;
    let table_end = HEADER_LEN + ENTRY_LEN * count;
    if buf.len() < table_end + 4 {
        return Err(Error::Format(format!(
            "truncated: section table needs {} bytes, file has {}",
            table_end + 4,
            buf.len()
        )));
    }
    let mut table = Vec::with_capacity(count);
    for i in 0..count {
        let e = &buf[HEADER_LEN + ENTRY_LEN * i..HEADER_LEN + ENTRY_LEN * (i + 1)];
        let tag: [u8; 4] = e[..4].try_into().expect("4 bytes");
        let offset = u64::from_le_bytes(e[4..12].try_into().expect("8 bytes"));
        let len = u64::from_le_bytes(e[12..20].try_into().expect("8 bytes"));
        table.push((tag, offset, len));
    }
    let payload_end = table
        .iter()
        .map(|&(_, o, l)| o.saturating_add(l))
        .max()
        .unwrap_or(table_end as u64)
        .max(table_end as u64);
    if payload_end.saturating_add(4) > buf.len() as u64 {
        return Err(Error::Format(format!(
            "truncated: sections end at byte {payload_end}, file has {} bytes",
            buf.len()
        )));
    }
    let body = &buf[..buf.len() - 4];
    let stored = u32::from_le_bytes(buf[buf.len() - 4..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    if payload_end != body.len() as u64 {
        return Err(Error::Format("trailing bytes after sections".into()));
    }

    let section = |tag: &[u8; 4]| -> Option<&[u8]> {
        table
            .iter()
            .find(|(t, _, _)| t == tag)
            .map(|&(_, o, l)| &body[o as usize..(o + l) as usize])
    };
    let required = |tag: &[u8; 4]| {
        section(tag).ok_or_else(|| {
            Error::Format(format!("missing section {}", String::from_utf8_lossy(tag).trim_end()))
        })
    };

    let conf_text = std::str::from_utf8(required(b"CONF")?)
        .map_err(|_| Error::Format("section CONF is not UTF-8".into()))?;
    let config = RunConfig::from_text(conf_text).map_err(|e| Error::Format(format!("section CONF: {e}")))?;
    let norm = decode_norm(required(b"NORM")?)?;
    let pca = decode_pca(required(b"PCA ")?)?;
    let lstm = section(b"LSTM").map(decode_lstm).transpose()?;
    let hi_model = decode_ols(required(b"OLS ")?)?;
    let train_curves = decode_curves(required(b"CURV")?)?;

    if pca.input_dim() != norm.retained_count() || hi_model.theta.len() != pca.p() {
        return Err(Error::Format("sections NORM, PCA and OLS disagree on dimensions".into()));
    }
    if let Some(m) = &lstm {
        if m.input_dim != pca.p() {
            return Err(Error::Format("sections PCA and LSTM disagree on dimensions".into()));
        }
    }
    Ok(Pipeline {
        config,
        norm,
        pca,
        lstm,
        hi_model,
        train_curves,
    })
}

pub fn save_pipeline(path: impl AsRef<Path>, p: &Pipeline) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, pipeline_to_bytes(p)).map_err(|e| Error::io(path, e))
}

pub fn load_pipeline(path: impl AsRef<Path>) -> Result<Pipeline> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    pipeline_from_bytes(&buf)
}
