//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "ALFD" | u32 version | u32 net_count | nets... | u32 tensor_count | tensors...
//! net:    name | u32 n_sizes | u32 sizes[..] | u8 activation | per-layer tensors
//! tensor: name | u8 ndim | u32 dims[..] | f32 data (row-major)
//! name:   u16 byte length | utf-8 bytes
//! ```
//!
//! Parameter values are stored as 32-bit floats; a load followed by a save
//! reproduces the file bit-exactly.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, Mlp};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"ALFD";
const VERSION: u32 = 1;

/// Named networks plus named standalone vectors (e.g. action bounds).
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub nets: Vec<(String, Mlp)>,
    pub vectors: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn net(&self, name: &str) -> Result<&Mlp> {
        self.nets
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Checkpoint(format!("missing network '{name}'")))
    }

    pub fn vector(&self, name: &str) -> Result<&[f64]> {
        self.vectors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Checkpoint(format!("missing vector '{name}'")))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(ckpt.nets.len() as u32).to_le_bytes());
    for (name, net) in &ckpt.nets {
        write_name(&mut buf, name);
        let sizes = net.layer_sizes();
        buf.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for &s in sizes {
            buf.extend_from_slice(&(s as u32).to_le_bytes());
        }
        buf.push(net.activation().tag());
        for i in 0..net.weights.len() {
            write_tensor2(&mut buf, &format!("w{i}"), &net.weights[i]);
            write_tensor1(&mut buf, &format!("b{i}"), &net.biases[i]);
            if i < net.ln_gain.len() {
                write_tensor1(&mut buf, &format!("g{i}"), &net.ln_gain[i]);
                write_tensor1(&mut buf, &format!("o{i}"), &net.ln_offset[i]);
            }
        }
    }
    buf.extend_from_slice(&(ckpt.vectors.len() as u32).to_le_bytes());
    for (name, v) in &ckpt.vectors {
        write_name(&mut buf, name);
        buf.push(1);
        buf.extend_from_slice(&(v.len() as u32).to_le_bytes());
        for &x in v {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor::new(data.as_slice());
    let mut magic = [0u8; 4];
    read_exact(&mut cur, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut cur)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let net_count = read_u32(&mut cur)? as usize;
    let mut nets = Vec::with_capacity(net_count);
    for _ in 0..net_count {
        let name = read_name(&mut cur)?;
        let n_sizes = read_u32(&mut cur)? as usize;
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            sizes.push(read_u32(&mut cur)? as usize);
        }
        let mut tag = [0u8; 1];
        read_exact(&mut cur, &mut tag)?;
        let activation = Activation::from_tag(tag[0])?;
        let mut net = Mlp::zeros(&sizes, activation)?;
        for i in 0..net.weights.len() {
            net.weights[i] = read_tensor2(&mut cur, &format!("w{i}"))?;
            net.biases[i] = read_tensor1(&mut cur, &format!("b{i}"))?;
            if i < net.ln_gain.len() {
                net.ln_gain[i] = read_tensor1(&mut cur, &format!("g{i}"))?;
                net.ln_offset[i] = read_tensor1(&mut cur, &format!("o{i}"))?;
            }
        }
        check_shapes(&net, &sizes)?;
        nets.push((name, net));
    }
    let vec_count = read_u32(&mut cur)? as usize;
    let mut vectors = Vec::with_capacity(vec_count);
    for _ in 0..vec_count {
        let name = read_name(&mut cur)?;
        let mut ndim = [0u8; 1];
        read_exact(&mut cur, &mut ndim)?;
        if ndim[0] != 1 {
            return Err(Error::Checkpoint("standalone tensors must be vectors".into()));
        }
        let len = read_u32(&mut cur)? as usize;
        let mut v = Vec::with_capacity(len);
        for _ in 0..len {
            v.push(read_f32(&mut cur)? as f64);
        }
        vectors.push((name, v));
    }
    Ok(Checkpoint { nets, vectors })
}

fn check_shapes(net: &Mlp, sizes: &[usize]) -> Result<()> {
    for (i, w) in net.weights.iter().enumerate() {
        if w.dim() != (sizes[i], sizes[i + 1]) {
            return Err(Error::Checkpoint(format!(
                "weight {i} shape {:?} does not chain with layer sizes",
                w.dim()
            )));
        }
    }
    Ok(())
}

fn write_name(buf: &mut Vec<u8>, name: &str) {
    buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
}

fn write_tensor2(buf: &mut Vec<u8>, name: &str, t: &Array2<f64>) {
    write_name(buf, name);
    buf.push(2);
    buf.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
    buf.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
    for &x in t.iter() {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

fn write_tensor1(buf: &mut Vec<u8>, name: &str, t: &Array1<f64>) {
    write_name(buf, name);
    buf.push(1);
    buf.extend_from_slice(&(t.len() as u32).to_le_bytes());
    for &x in t.iter() {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

fn read_exact(cur: &mut Cursor<&[u8]>, out: &mut [u8]) -> Result<()> {
    cur.read_exact(out)
        .map_err(|_| Error::Checkpoint("truncated file".into()))
}

fn read_u32(cur: &mut Cursor<&[u8]>) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(cur, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32(cur: &mut Cursor<&[u8]>) -> Result<f32> {
    let mut b = [0u8; 4];
    read_exact(cur, &mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn read_name(cur: &mut Cursor<&[u8]>) -> Result<String> {
    let mut b = [0u8; 2];
    read_exact(cur, &mut b)?;
    let len = u16::from_le_bytes(b) as usize;
    let mut s = vec![0u8; len];
    read_exact(cur, &mut s)?;
    String::from_utf8(s).map_err(|_| Error::Checkpoint("invalid utf-8 name".into()))
}

fn read_tensor2(cur: &mut Cursor<&[u8]>, expect: &str) -> Result<Array2<f64>> {
    let name = read_name(cur)?;
    if name != expect {
        return Err(Error::Checkpoint(format!(
            "expected tensor '{expect}', found '{name}'"
        )));
    }
    let mut ndim = [0u8; 1];
    read_exact(cur, &mut ndim)?;
    if ndim[0] != 2 {
        return Err(Error::Checkpoint(format!("tensor '{name}' is not a matrix")));
    }
    let rows = read_u32(cur)? as usize;
    let cols = read_u32(cur)? as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(read_f32(cur)? as f64);
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::Checkpoint(format!("tensor '{name}': {e}")))
}

fn read_tensor1(cur: &mut Cursor<&[u8]>, expect: &str) -> Result<Array1<f64>> {
    let name = read_name(cur)?;
    if name != expect {
        return Err(Error::Checkpoint(format!(
            "expected tensor '{expect}', found '{name}'"
        )));
    }
    let mut ndim = [0u8; 1];
    read_exact(cur, &mut ndim)?;
    if ndim[0] != 1 {
        return Err(Error::Checkpoint(format!("tensor '{name}' is not a vector")));
    }
    let len = read_u32(cur)? as usize;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        data.push(read_f32(cur)? as f64);
    }
    Ok(Array1::from_vec(data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let actor = Mlp::new(&[6, 8, 8, 4], Activation::Tanh, &mut rng).unwrap();
        let critic = Mlp::new(&[8, 8, 1], Activation::Relu, &mut rng).unwrap();
        let ckpt = Checkpoint {
            nets: vec![("actor".into(), actor), ("critic1".into(), critic)],
            vectors: vec![("action_low".into(), vec![-1.0, -1.0])],
        };
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save_checkpoint(&ckpt, &p1).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(loaded.net("actor").unwrap().layer_sizes(), &[6, 8, 8, 4]);
        assert!(loaded.net("missing").is_err());
    }
}
