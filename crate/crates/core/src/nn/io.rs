//! Flat binary weight format, little endian:
//!
//! ```text
//! magic "ADVN" | version u32 | layer count u32
//! per layer: input u32 | output u32 | activation code u8
//! payload: per layer, W row-major then b, as f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, DenseNetwork, Layer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ADVN";
const VERSION: u32 = 1;

pub fn write_network(net: &DenseNetwork, out: &mut impl Write) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(net.layers().len() as u32).to_le_bytes())?;
    for l in net.layers() {
        out.write_all(&(l.input_dim() as u32).to_le_bytes())?;
        out.write_all(&(l.output_dim() as u32).to_le_bytes())?;
        out.write_all(&[l.act.code()])?;
    }
    for l in net.layers() {
        for v in l.w.iter().chain(l.b.iter()) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64s(input: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    input.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn read_network(input: &mut impl Read) -> Result<DenseNetwork> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a network weight file".into()));
    }
    let version = read_u32(input)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported weight format version {version}")));
    }
    let count = read_u32(input)? as usize;
    if count == 0 || count > 1024 {
        return Err(Error::Format(format!("implausible layer count {count}")));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let i = read_u32(input)? as usize;
        let o = read_u32(input)? as usize;
        let mut code = [0u8; 1];
        input.read_exact(&mut code)?;
        shapes.push((i, o, Activation::from_code(code[0])?));
    }
    let mut layers = Vec::with_capacity(count);
    for (i, o, act) in shapes {
        let w = read_f64s(input, i * o)?;
        let b = read_f64s(input, o)?;
        layers.push(Layer {
            w: Array2::from_shape_vec((o, i), w).expect("shape"),
            b: Array1::from_vec(b),
            act,
        });
    }
    DenseNetwork::new(layers)
}

pub fn save_network(net: &DenseNetwork, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_network(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<DenseNetwork> {
    read_network(&mut BufReader::new(File::open(path)?))
}
