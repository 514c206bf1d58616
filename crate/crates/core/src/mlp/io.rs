//! Binary model file.
//!
//! ```text
//! "ROMMLP1"                      7 bytes
//! layer count L                  u32 LE
//! dims[0..=L]                    u32 LE each
//! for each layer: W (row-major), then b     f64 LE
//! input scaling min, then max    f64 LE, dims[0] values each
//! output scaling min, then max   f64 LE, dims[L] values each
//! skip matrix (row-major)        f64 LE, dims[L] x (dims[0] + 1)
//! ```
//!
//! Hidden layers are always tanh in this format.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};

use super::network::{Activation, MlpParams};
use super::surrogate::{FeatureScaling, Surrogate};
use crate::error::{Result, RomError};

pub const MODEL_MAGIC: &[u8; 7] = b"ROMMLP1";

pub fn write_model<W: Write>(mut w: W, model: &Surrogate) -> Result<()> {
    let net = &model.network;
    if net.hidden_activation != Activation::Tanh {
        return Err(RomError::contract("only tanh networks can be persisted"));
    }
    w.write_all(MODEL_MAGIC)?;
    w.write_u32::<LittleEndian>(net.num_layers() as u32)?;
    for &d in &net.layer_dims {
        w.write_u32::<LittleEndian>(d as u32)?;
    }
    for (wm, b) in net.weights.iter().zip(&net.biases) {
        for i in 0..wm.nrows() {
            for j in 0..wm.ncols() {
                w.write_f64::<LittleEndian>(wm[(i, j)])?;
            }
        }
        for &v in b.iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    let stats = [&model.input.min, &model.input.max, &model.output.min, &model.output.max];
    for &v in stats.iter().flat_map(|s| s.iter()) {
        w.write_f64::<LittleEndian>(v)?;
    }
    for i in 0..model.skip.nrows() {
        for j in 0..model.skip.ncols() {
            w.write_f64::<LittleEndian>(model.skip[(i, j)])?;
        }
    }
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<Surrogate> {
    let bad = |reason: String| RomError::contract(format!("model file: {reason}"));
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(bad(format!("bad magic {magic:?}")));
    }
    let layers = r.read_u32::<LittleEndian>()? as usize;
    if layers == 0 || layers > 64 {
        return Err(bad(format!("implausible layer count {layers}")));
    }
    let mut dims = Vec::with_capacity(layers + 1);
    for _ in 0..=layers {
        dims.push(r.read_u32::<LittleEndian>()? as usize);
    }
    let mut weights = Vec::with_capacity(layers);
    let mut biases = Vec::with_capacity(layers);
    for d in dims.windows(2) {
        let mut vals = vec![0.0; d[1] * d[0]];
        r.read_f64_into::<LittleEndian>(&mut vals)?;
        weights.push(DMatrix::from_row_slice(d[1], d[0], &vals));
        let mut b = vec![0.0; d[1]];
        r.read_f64_into::<LittleEndian>(&mut b)?;
        biases.push(DVector::from_vec(b));
    }
    let mut read_vec = |len: usize| -> Result<DVector<f64>> {
        let mut v = vec![0.0; len];
        r.read_f64_into::<LittleEndian>(&mut v)?;
        Ok(DVector::from_vec(v))
    };
    let (m, out) = (dims[0], dims[layers]);
    let input = FeatureScaling { min: read_vec(m)?, max: read_vec(m)? };
    let output = FeatureScaling { min: read_vec(out)?, max: read_vec(out)? };
    let skip = read_vec(out * (m + 1))?;
    let skip = DMatrix::from_row_slice(out, m + 1, skip.as_slice());
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(bad("trailing bytes".into()));
    }
    let network = MlpParams::from_layers(weights, biases, Activation::Tanh)?;
    Surrogate::with_skip(network, input, output, skip)
}

pub fn model_to_bytes(model: &Surrogate) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_model(&mut buf, model)?;
    Ok(buf)
}
