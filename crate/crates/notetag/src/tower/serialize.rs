//! Versioned little-endian binary format for trained parameters: a magic
//! header followed by named per-tensor shape records.

use super::{Mat, Tower, TowerParams};
use crate::error::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"NTTW";
const VERSION: u32 = 1;

fn write_tensor<W: Write>(w: &mut W, name: &str, dims: &[u32], data: &[f64]) -> Result<()> {
    w.write_u16::<LittleEndian>(name.len() as u16)?;
    w.write_all(name.as_bytes())?;
    w.write_u8(dims.len() as u8)?;
    for d in dims {
        w.write_u32::<LittleEndian>(*d)?;
    }
    for v in data {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

fn read_tensor<R: Read>(r: &mut R) -> Result<(String, Vec<u32>, Vec<f64>)> {
    let name_len = r.read_u16::<LittleEndian>()? as usize;
    let mut name_buf = vec![0u8; name_len];
    r.read_exact(&mut name_buf)?;
    let name = String::from_utf8(name_buf)
        .map_err(|e| Error::InvalidInput(format!("bad tensor name: {e}")))?;
    let ndims = r.read_u8()? as usize;
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        dims.push(r.read_u32::<LittleEndian>()?);
    }
    let len: usize = dims.iter().map(|&d| d as usize).product();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        data.push(r.read_f64::<LittleEndian>()?);
    }
    Ok((name, dims, data))
}

fn mat_dims(m: &Mat) -> Vec<u32> {
    vec![m.rows as u32, m.cols as u32]
}

pub fn save_params(path: &Path, params: &TowerParams) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    let tensors: Vec<(&str, Vec<u32>, &[f64])> = vec![
        ("user.w1", mat_dims(&params.user.w1), &params.user.w1.data),
        ("user.b1", vec![params.user.b1.len() as u32], &params.user.b1),
        ("user.w2", mat_dims(&params.user.w2), &params.user.w2.data),
        ("user.b2", vec![params.user.b2.len() as u32], &params.user.b2),
        ("item.w1", mat_dims(&params.item.w1), &params.item.w1.data),
        ("item.b1", vec![params.item.b1.len() as u32], &params.item.b1),
        ("item.w2", mat_dims(&params.item.w2), &params.item.w2.data),
        ("item.b2", vec![params.item.b2.len() as u32], &params.item.b2),
        ("user_embed", mat_dims(&params.user_embed), &params.user_embed.data),
        ("item_embed", mat_dims(&params.item_embed), &params.item_embed.data),
    ];
    w.write_u16::<LittleEndian>(tensors.len() as u16)?;
    for (name, dims, data) in tensors {
        write_tensor(&mut w, name, &dims, data)?;
    }
    Ok(())
}

pub fn load_params(path: &Path) -> Result<TowerParams> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidInput("not a parameter file (bad magic)".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::InvalidInput(format!("unsupported version {version}")));
    }
    let count = r.read_u16::<LittleEndian>()? as usize;
    let mut mats = std::collections::HashMap::new();
    let mut vecs = std::collections::HashMap::new();
    for _ in 0..count {
        let (name, dims, data) = read_tensor(&mut r)?;
        match dims.len() {
            1 => {
                vecs.insert(name, data);
            }
            2 => {
                mats.insert(
                    name,
                    Mat { rows: dims[0] as usize, cols: dims[1] as usize, data },
                );
            }
            n => return Err(Error::InvalidInput(format!("unsupported rank {n}"))),
        }
    }
    let mut take_mat = |name: &str| -> Result<Mat> {
        mats.remove(name)
            .ok_or_else(|| Error::InvalidInput(format!("missing tensor {name}")))
    };
    let user = Tower {
        w1: take_mat("user.w1")?,
        b1: vecs.remove("user.b1").ok_or_else(|| Error::InvalidInput("missing user.b1".into()))?,
        w2: take_mat("user.w2")?,
        b2: vecs.remove("user.b2").ok_or_else(|| Error::InvalidInput("missing user.b2".into()))?,
    };
    let item = Tower {
        w1: take_mat("item.w1")?,
        b1: vecs.remove("item.b1").ok_or_else(|| Error::InvalidInput("missing item.b1".into()))?,
        w2: take_mat("item.w2")?,
        b2: vecs.remove("item.b2").ok_or_else(|| Error::InvalidInput("missing item.b2".into()))?,
    };
    Ok(TowerParams {
        user,
        item,
        user_embed: take_mat("user_embed")?,
        item_embed: take_mat("item_embed")?,
    })
}
