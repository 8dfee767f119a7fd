//! Versioned binary model files.
//!
//! Byte map (integers and reals little-endian):
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 8 | magic `BOABMDL\0` |
//! | 8 | 4 | layout version (`u32`, currently 1) |
//! | 12 | 1 | head mode: 0 multi-head, 1 embed-conditioned |
//! | 13 | 4 | `K` (`u32`) |
//! | 17 | 4 | embedding width `d_e` (`u32`) |
//! | 21 | 4 | network count (`u32`): Φ first, then the heads |
//!
//! Each network: `u32` layer count, then per layer `u32` inputs, `u32`
//! outputs, `u8` activation tag, `inputs·outputs` weights (`f64`, row-major,
//! `W` stored `inputs × outputs`) and `outputs` biases (`f64`). The file ends
//! with the `K × d_e` embedding table (`f64`, row-major).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{Activation, Dense, Matrix, MlpParams};
use crate::model::{HeadMode, ModelParams};

pub const MAGIC: &[u8; 8] = b"BOABMDL\0";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_reals(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode(model: &ModelParams) -> Result<Vec<u8>> {
    model.check()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match model.head_mode {
        HeadMode::MultiHead => 0,
        HeadMode::EmbedConditioned => 1,
    });
    put_u32(&mut out, model.table.rows())?;
    put_u32(&mut out, model.table.cols())?;
    put_u32(&mut out, 1 + model.heads.len())?;
    for net in std::iter::once(&model.phi).chain(&model.heads) {
        put_u32(&mut out, net.layers.len())?;
        for l in &net.layers {
            put_u32(&mut out, l.inputs())?;
            put_u32(&mut out, l.outputs())?;
            out.push(l.activation.tag());
            put_reals(&mut out, l.weight.as_slice());
            put_reals(&mut out, &l.bias);
        }
    }
    put_reals(&mut out, model.table.as_slice());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn bytes(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("model file truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::Format("model file size overflow".into()))?;
        Ok(self
            .bytes(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode(buf: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { buf, pos: 0 };
    if r.bytes(8)? != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported model layout version {version}")));
    }
    let head_mode = match r.u8()? {
        0 => HeadMode::MultiHead,
        1 => HeadMode::EmbedConditioned,
        other => return Err(Error::Format(format!("unknown head mode tag {other}"))),
    };
    let k = r.u32()?;
    let d_e = r.u32()?;
    let nets = r.u32()?;
    if nets < 2 {
        return Err(Error::Format(format!("model file lists {nets} networks")));
    }
    let mut networks = Vec::with_capacity(nets);
    for _ in 0..nets {
        let layers = r.u32()?;
        let mut net = MlpParams { layers: Vec::with_capacity(layers) };
        for _ in 0..layers {
            let (inputs, outputs) = (r.u32()?, r.u32()?);
            let tag = r.u8()?;
            let activation = Activation::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown activation tag {tag}")))?;
            let weight = Matrix::from_vec(inputs, outputs, r.reals(inputs * outputs)?)?;
            let bias = r.reals(outputs)?;
            net.layers.push(Dense { weight, bias, activation });
        }
        networks.push(net);
    }
    let table = Matrix::from_vec(k, d_e, r.reals(k * d_e)?)?;
    if r.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes in model file", buf.len() - r.pos)));
    }
    let mut it = networks.into_iter();
    let phi = it.next().expect("nets >= 2");
    let model = ModelParams {
        phi,
        heads: it.collect(),
        table,
        head_mode,
    };
    model.check()?;
    Ok(model)
}

pub fn save_model(model: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, encode(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::RngStream;
    use crate::model::Architecture;

    fn model(mode: HeadMode) -> ModelParams {
        ModelParams::init(
            &Architecture {
                input_dim: 5,
                k: 3,
                d_z: 4,
                phi_hidden: vec![6, 5],
                head_hidden: vec![3],
                head_mode: mode,
                embedding_dim: 2,
            },
            &mut RngStream::new(8),
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        for mode in [HeadMode::MultiHead, HeadMode::EmbedConditioned] {
            let m = model(mode);
            let bytes = encode(&m).unwrap();
            assert_eq!(&bytes[..8], MAGIC);
            assert_eq!(decode(&bytes).unwrap(), m);
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode(&model(HeadMode::MultiHead)).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(decode(&v2).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
