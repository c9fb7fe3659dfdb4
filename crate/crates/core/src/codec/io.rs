//! Binary model file.
//!
//! ```text
//! "MLSS" | version u32 | arch u8 | k u32 | hidden u32 | out u32
//!        | activation ids u8 u8 | norm_gain f64 | norm_offset f64
//!        | parameters f64… | metadata length u32 | metadata JSON
//! ```
//!
//! All integers and floats little-endian. `k` is the message size for the
//! spreading architectures and the raw input width for generic networks.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Activation, ArchKind, LayerSpec, NetworkModel, TrainingMeta};

pub const MAGIC: [u8; 4] = *b"MLSS";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_model<W: Write>(model: &NetworkModel, mut w: W) -> Result<()> {
    let arch = model.meta.arch;
    let k = match arch {
        ArchKind::OneHot => model.input_dim().trailing_zeros() as usize,
        _ => model.input_dim(),
    };
    let mut buf = Vec::with_capacity(64 + 8 * model.param_count());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(arch.id());
    for d in [k, model.hidden_dim(), model.output_dim()] {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    buf.push(model.hidden.activation.id());
    buf.push(model.output.activation.id());
    buf.extend_from_slice(&model.norm_gain.to_le_bytes());
    buf.extend_from_slice(&model.norm_offset.to_le_bytes());
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let meta = serde_json::to_vec(&model.meta).expect("metadata serializes");
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta);
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() < n {
            return Err(Error::Truncated);
        }
        let (head, tail) = self.data.split_at(n);
        self.data = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn activation(id: u8) -> Result<Activation> {
    Activation::from_id(id).ok_or_else(|| Error::InvalidArch(format!("unknown activation id {id}")))
}

pub fn read_model<R: Read>(mut r: R) -> Result<NetworkModel> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut c = Cursor { data: &data };
    if c.take(4).map_err(|_| Error::BadMagic)? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let arch_id = c.u8()?;
    let arch = ArchKind::from_id(arch_id)
        .ok_or_else(|| Error::InvalidArch(format!("unknown architecture id {arch_id}")))?;
    let k = c.u32()? as usize;
    let hidden_dim = c.u32()? as usize;
    let out_dim = c.u32()? as usize;
    let input_dim = match arch {
        ArchKind::OneHot if k < 32 => 1usize << k,
        ArchKind::OneHot => return Err(Error::InvalidArch(format!("one-hot k = {k}"))),
        _ => k,
    };
    let hidden = LayerSpec::new(input_dim, hidden_dim, activation(c.u8()?)?)?;
    let output = LayerSpec::new(hidden_dim, out_dim, activation(c.u8()?)?)?;
    let norm_gain = c.f64()?;
    let norm_offset = c.f64()?;
    let n_params = input_dim * hidden_dim + hidden_dim + hidden_dim * out_dim + out_dim;
    let raw = c.take(8 * n_params)?;
    let params: Vec<f64> = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    if let Some(i) = params.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFiniteWeight(i));
    }
    if !(norm_gain.is_finite() && norm_gain > 0.0 && norm_offset.is_finite()) {
        return Err(Error::NonFiniteWeight(n_params));
    }
    let meta_len = c.u32()? as usize;
    let meta: TrainingMeta = serde_json::from_slice(c.take(meta_len)?)
        .map_err(|e| Error::Config(format!("model metadata: {e}")))?;
    if meta.arch != arch {
        return Err(Error::Config("metadata architecture disagrees with header".into()));
    }
    let mut model = NetworkModel::zeros(hidden, output, meta)?;
    model.set_params(&params)?;
    model.norm_gain = norm_gain;
    model.norm_offset = norm_offset;
    Ok(model)
}

pub fn save_model(model: &NetworkModel, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkModel> {
    read_model(fs::File::open(path)?)
}
