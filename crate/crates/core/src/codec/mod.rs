//! The `.dare` container: hard masks as packed bits, run-length coded and
//! Huffman coded; surviving coefficients and dense parameters as `f32`.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "DARE" | u16 version | u32 header_len | header JSON | u32 header_crc
//!        | u64 payload_len | payload | u32 payload_crc
//! ```
//!
//! See `docs/FORMAT.md` for the payload sections.

pub mod huffman;
pub mod rle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CodecError, Error, Result};
use crate::field::{FieldParams, ParamKind};
use crate::grid::Grid;
use crate::masking::INIT_LOGIT;
use crate::model::{Emptiness, Model, ModelConfig};
use crate::optim::TrainState;
use crate::render::Mlp;

pub use huffman::{huffman_decode, huffman_encode, Bitstream, HuffmanTable};
pub use rle::{rle_decode, rle_encode, RleRun};

pub const MAGIC: &[u8; 4] = b"DARE";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FieldLayout {
    ranks: [usize; 3],
    out_dim: usize,
    masks: bool,
    /// Shapes of every non-mask grid in `FieldParams::grids` order.
    shapes: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    density: FieldLayout,
    appearance: FieldLayout,
    mlp: Vec<(usize, usize)>,
    emptiness: Option<usize>,
}

fn layout(p: &FieldParams) -> FieldLayout {
    FieldLayout {
        ranks: p.ranks(),
        out_dim: p.out_dim(),
        masks: p.has_masks(),
        shapes: p.grids().into_iter().filter(|(k, _)| *k != ParamKind::Mask).map(|(_, g)| g.shape()).collect(),
    }
}

fn pack_bits(bits: impl Iterator<Item = bool>) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, b) in bits.enumerate() {
        if i % 8 == 0 {
            out.push(0);
        }
        if b {
            *out.last_mut().unwrap() |= 0x80 >> (i % 8);
        }
    }
    out
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f64) {
        self.0.extend_from_slice(&(v as f32).to_le_bytes());
    }

    /// A bit stream: packed, run-length coded, then Huffman coded.
    fn bits(&mut self, bits: impl Iterator<Item = bool>) -> Result<()> {
        let packed = pack_bits(bits);
        let rb = rle::runs_to_bytes(&rle_encode(&packed));
        let (table, bs) = huffman_encode(&rb)?;
        self.u32(rb.len() as u32);
        self.u16(table.lengths.len() as u16);
        for (s, l) in &table.lengths {
            self.u8(*s);
            self.u8(*l);
        }
        self.u64(bs.bits as u64);
        self.0.extend_from_slice(&bs.bytes);
        Ok(())
    }

    fn dense(&mut self, g: &Grid) {
        g.as_slice().iter().for_each(|v| self.f32(*v));
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], CodecError> {
        if self.data.len() - self.pos < n {
            return Err(CodecError::Corrupt { section: self.section, detail: "unexpected end of data".into() });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> std::result::Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> std::result::Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> std::result::Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> std::result::Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> std::result::Result<f64, CodecError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64)
    }

    fn bits(&mut self, n: usize) -> std::result::Result<Vec<bool>, CodecError> {
        let section = self.section;
        let n_rle = self.u32()? as usize;
        let n_sym = self.u16()? as usize;
        let mut lengths = Vec::with_capacity(n_sym);
        for _ in 0..n_sym {
            lengths.push((self.u8()?, self.u8()?));
        }
        let n_bits = usize::try_from(self.u64()?).map_err(|_| CodecError::Corrupt { section, detail: "bit count".into() })?;
        let bytes = self.take(n_bits.div_ceil(8))?.to_vec();
        let rb = huffman_decode(&HuffmanTable { lengths }, &Bitstream { bytes, bits: n_bits }, n_rle)?;
        let packed = rle_decode(&rle::runs_from_bytes(&rb)?)?;
        if packed.len() != n.div_ceil(8) {
            return Err(CodecError::Corrupt {
                section,
                detail: format!("{} mask bytes, expected {}", packed.len(), n.div_ceil(8)),
            });
        }
        Ok((0..n).map(|i| packed[i / 8] & (0x80 >> (i % 8)) != 0).collect())
    }

    fn dense(&mut self, g: &mut Grid) -> std::result::Result<(), CodecError> {
        for v in g.as_mut_slice() {
            *v = self.f32()?;
        }
        Ok(())
    }
}

/// Coefficient grids paired with their masks, in mask-set order.
fn masked_pairs(p: &FieldParams) -> Vec<(&Grid, Option<&Grid>)> {
    let coeffs = p.spatial.iter().chain(&p.temporal).flatten().flatten();
    if p.has_masks() {
        coeffs.zip(p.masks.grids()).map(|(w, m)| (w, Some(m))).collect()
    } else {
        coeffs.map(|w| (w, None)).collect()
    }
}

fn write_field(w: &mut Writer, p: &FieldParams) -> Result<()> {
    for (g, m) in masked_pairs(p) {
        match m {
            Some(m) => {
                w.bits(m.as_slice().iter().map(|l| *l > 0.0))?;
                for (v, l) in g.as_slice().iter().zip(m.as_slice()) {
                    if *l > 0.0 {
                        w.f32(*v);
                    }
                }
            }
            None => w.dense(g),
        }
    }
    p.vectors.iter().flatten().for_each(|g| w.dense(g));
    w.dense(&p.head);
    Ok(())
}

fn read_field(r: &mut Reader, p: &mut FieldParams) -> std::result::Result<(), CodecError> {
    let has_masks = p.has_masks();
    let mut masks: Vec<&mut Grid> = p.masks.grids_mut().collect();
    let coeffs = p.spatial.iter_mut().chain(p.temporal.iter_mut()).flatten().flatten();
    for (i, g) in coeffs.enumerate() {
        if has_masks {
            let bits = r.bits(g.len())?;
            for ((v, l), on) in g.as_mut_slice().iter_mut().zip(masks[i].as_mut_slice()).zip(bits) {
                *l = if on { INIT_LOGIT } else { -INIT_LOGIT };
                *v = if on { r.f32()? } else { 0.0 };
            }
        } else {
            r.dense(g)?;
        }
    }
    for g in p.vectors.iter_mut().flatten() {
        r.dense(g)?;
    }
    r.dense(&mut p.head)
}

/// Serializes a model. Mask logits keep only their sign; everything else is
/// rounded to `f32`.
pub fn encode_model(model: &Model) -> Result<Vec<u8>> {
    let header = Header {
        config: model.cfg.clone(),
        density: layout(&model.density.params),
        appearance: layout(&model.appearance.params),
        mlp: model.mlp.grids().iter().map(|g| g.shape()).collect(),
        emptiness: model.emptiness.as_ref().map(|e| e.res),
    };
    let mut pw = Writer(Vec::new());
    write_field(&mut pw, &model.density.params)?;
    write_field(&mut pw, &model.appearance.params)?;
    model.mlp.grids().into_iter().for_each(|g| pw.dense(g));
    if let Some(e) = &model.emptiness {
        pw.bits(e.occupied.iter().copied())?;
    }
    let payload = pw.0;

    let hjson = serde_json::to_vec(&header)?;
    let mut w = Writer(Vec::with_capacity(payload.len() + hjson.len() + 32));
    w.0.extend_from_slice(MAGIC);
    w.u16(FORMAT_VERSION);
    w.u32(hjson.len() as u32);
    w.0.extend_from_slice(&hjson);
    w.u32(crc32fast::hash(&hjson));
    w.u64(payload.len() as u64);
    w.0.extend_from_slice(&payload);
    w.u32(crc32fast::hash(&payload));
    Ok(w.0)
}

/// Rebuilds an inference-ready model. Nothing is returned unless every
/// section verifies.
pub fn decode_model(data: &[u8]) -> Result<Model> {
    let mut r = Reader { data, pos: 0, section: "header" };
    let magic = r.take(4).map_err(|_| CodecError::TruncatedHeader)?;
    if magic != MAGIC {
        return Err(CodecError::BadMagic.into());
    }
    let version = r.u16().map_err(|_| CodecError::TruncatedHeader)?;
    if version != FORMAT_VERSION {
        return Err(CodecError::Version(version).into());
    }
    let hlen = r.u32().map_err(|_| CodecError::TruncatedHeader)? as usize;
    let hjson = r.take(hlen).map_err(|_| CodecError::Crc { section: "header" })?;
    let hcrc = r.u32().map_err(|_| CodecError::Crc { section: "header" })?;
    if crc32fast::hash(hjson) != hcrc {
        return Err(CodecError::Crc { section: "header" }.into());
    }
    let header: Header = serde_json::from_slice(hjson)
        .map_err(|e| CodecError::Corrupt { section: "header", detail: e.to_string() })?;
    // A short file cannot be checked, so it fails the payload CRC.
    let plen = r.u64().map_err(|_| CodecError::Crc { section: "payload" })?;
    let plen = usize::try_from(plen).map_err(|_| CodecError::Crc { section: "payload" })?;
    let payload = r.take(plen).map_err(|_| CodecError::Crc { section: "payload" })?;
    let pcrc = r.u32().map_err(|_| CodecError::Crc { section: "payload" })?;
    if crc32fast::hash(payload) != pcrc || r.pos != data.len() {
        return Err(CodecError::Crc { section: "payload" }.into());
    }

    let bad_header = |detail: String| Error::from(CodecError::Corrupt { section: "header", detail });
    let skeleton = |l: &FieldLayout, name: &str| -> Result<FieldParams> {
        let mut cfg = header.config.field.clone();
        cfg.masks = l.masks;
        let p = FieldParams::init(&cfg, l.ranks, l.out_dim, 0.0, &mut ChaCha8Rng::seed_from_u64(0))
            .map_err(|e| bad_header(format!("{name} field: {e}")))?;
        if layout(&p) != *l {
            return Err(bad_header(format!("{name} grid shapes do not match the configuration")));
        }
        Ok(p)
    };
    let mut density = skeleton(&header.density, "density")?;
    let mut appearance = skeleton(&header.appearance, "appearance")?;
    let f = &header.config.field;
    let mut mlp = Mlp::new(f.feature_dim + 3, header.config.mlp_hidden, &mut ChaCha8Rng::seed_from_u64(0));
    if mlp.grids().iter().map(|g| g.shape()).collect::<Vec<_>>() != header.mlp {
        return Err(bad_header("color network shapes do not match the configuration".into()));
    }

    let mut r = Reader { data: payload, pos: 0, section: "density" };
    read_field(&mut r, &mut density)?;
    r.section = "appearance";
    read_field(&mut r, &mut appearance)?;
    r.section = "mlp";
    for g in mlp.grids_mut() {
        r.dense(g)?;
    }
    r.section = "emptiness";
    let emptiness = match header.emptiness {
        Some(res) => Some(Emptiness { res, occupied: r.bits(res * res * res)? }),
        None => None,
    };
    if r.pos != payload.len() {
        return Err(CodecError::Corrupt { section: "payload", detail: "trailing bytes".into() }.into());
    }
    Model::from_parts(header.config, density, appearance, mlp, emptiness)
}

pub fn encode_field(state: &TrainState) -> Result<Vec<u8>> {
    encode_model(&state.model)
}

pub fn decode_field(data: &[u8]) -> Result<Model> {
    decode_model(data)
}

/// Bytes of the coefficient grids stored densely as `f32`, for size
/// comparisons.
pub fn dense_coefficient_bytes(model: &Model) -> usize {
    [&model.density.params, &model.appearance.params]
        .iter()
        .flat_map(|p| p.grids())
        .filter(|(k, _)| matches!(k, ParamKind::SpatialCoeff | ParamKind::TemporalCoeff))
        .map(|(_, g)| 4 * g.len())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Mode, RepKind};
    use crate::model::tests::tiny_config;
    use crate::render::Ray;
    use rand::Rng;

    fn masked_model(rep: RepKind, mode: Mode, off: f64, seed: u64) -> Model {
        let mut cfg = tiny_config(rep, mode);
        cfg.field.masks = true;
        let mut m = Model::new(cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for (_, k, g) in m.grids_mut() {
            if k == ParamKind::Mask {
                for v in g.as_mut_slice() {
                    *v = if rng.gen::<f64>() < off { -rng.gen_range(0.1..3.0) } else { rng.gen_range(0.1..3.0) };
                }
            }
        }
        m.refresh().unwrap();
        m
    }

    fn probe_rays() -> Vec<Ray> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..64)
            .map(|_| {
                let o = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), -3.0];
                Ray { origin: o, dir: crate::render::camera::normalize([rng.gen_range(-0.1..0.1), 0.1, 1.0]), near: 0.1, far: 6.0, t: rng.gen() }
            })
            .collect()
    }

    #[test]
    fn round_trip_matches_the_compressed_equivalent() {
        for (rep, mode) in [(RepKind::Dare, Mode::Dynamic4d), (RepKind::Dwt, Mode::Static3d), (RepKind::Dense, Mode::Dynamic4d)] {
            let mut m = masked_model(rep, mode, 0.6, 1);
            m.emptiness = Some(m.compute_emptiness(4, 1e-9, 2).unwrap());
            let bytes = encode_model(&m).unwrap();
            let back = decode_model(&bytes).unwrap();
            let want = m.compressed_equivalent().unwrap();
            assert_eq!(back.checkpoint(), want.checkpoint());
            let rays = probe_rays();
            let (a, b) = (back.render_rays(&rays).unwrap(), want.render_rays(&rays).unwrap());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.color.map(f64::to_bits), y.color.map(f64::to_bits));
            }
            // Hard masks survive exactly.
            for (g, h) in m.density.params.masks.grids().zip(back.density.params.masks.grids()) {
                assert!(g.as_slice().iter().zip(h.as_slice()).all(|(a, b)| (*a > 0.0) == (*b > 0.0)));
            }
        }
    }

    #[test]
    fn unmasked_model_round_trips() {
        let m = Model::new(tiny_config(RepKind::Dare, Mode::Dynamic4d), 4).unwrap();
        let back = decode_model(&encode_model(&m).unwrap()).unwrap();
        assert_eq!(back.checkpoint(), m.compressed_equivalent().unwrap().checkpoint());
    }

    #[test]
    fn size_shrinks_with_sparsity() {
        let sizes: Vec<usize> =
            [0.0, 0.5, 0.9, 0.99, 1.0].iter().map(|&off| encode_model(&masked_model(RepKind::Dare, Mode::Dynamic4d, off, 2)).unwrap().len()).collect();
        assert!(sizes.windows(2).all(|w| w[1] <= w[0]), "{sizes:?}");
        // Fully on: dense coefficients plus a small overhead.
        let m = masked_model(RepKind::Dare, Mode::Dynamic4d, 0.0, 2);
        let dense = dense_coefficient_bytes(&m);
        assert!(sizes[0] > dense && sizes[0] < dense + dense / 2 + 8192, "{} vs {dense}", sizes[0]);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let m = masked_model(RepKind::Dare, Mode::Dynamic4d, 0.5, 3);
        let bytes = encode_model(&m).unwrap();
        let err = |b: &[u8]| match decode_model(b) {
            Err(Error::Codec(e)) => e,
            other => panic!("expected a codec error, got {:?}", other.map(|_| ())),
        };
        assert_eq!(err(&bytes[..bytes.len() - 10]), CodecError::Crc { section: "payload" });
        assert_eq!(err(&bytes[..bytes.len() / 2]), CodecError::Crc { section: "payload" });
        assert_eq!(err(&bytes[..3]), CodecError::TruncatedHeader);
        let mut b = bytes.clone();
        b[0] = b'X';
        assert_eq!(err(&b), CodecError::BadMagic);
        let mut b = bytes.clone();
        b[4] = 9;
        assert_eq!(err(&b), CodecError::Version(9));
        let mut b = bytes.clone();
        b[12] ^= 1;
        assert_eq!(err(&b), CodecError::Crc { section: "header" });
        let mut b = bytes.clone();
        let last = b.len() - 20;
        b[last] ^= 0x40;
        assert_eq!(err(&b), CodecError::Crc { section: "payload" });
    }
}
