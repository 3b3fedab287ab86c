//! Model checkpoint format (all integers little-endian `u32`):
//!
//! ```text
//! magic        8 bytes  "STNNCKPT"
//! version      u32      1
//! arch tag     u32      1 = 3L-SSNet, 2 = MiniUNet
//! arch fields  3L-SSNet: w1 w2 k1 k2 k3 skip | MiniUNet: base_width
//! count        u32      number of tensors
//! shape table  per tensor: ndim, then ndim dims
//! blob         every tensor's values as little-endian f64, table order
//! ```
//!
//! Tensors are the trainable parameters in model order followed by
//! `running_mean`, `running_var` of each normalization layer.

use std::path::Path;

use super::model::{Architecture, NetworkModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"STNNCKPT";
const VERSION: u32 = 1;

pub fn encode_checkpoint(model: &NetworkModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_u32(&mut out, VERSION);
    match *model.architecture() {
        Architecture::Ssnet3l {
            widths,
            kernel_sizes,
            skip,
        } => {
            push_u32(&mut out, 1);
            for v in widths.iter().chain(&kernel_sizes) {
                push_u32(&mut out, *v as u32);
            }
            push_u32(&mut out, skip as u32);
        }
        Architecture::MiniUnet { base_width } => {
            push_u32(&mut out, 2);
            push_u32(&mut out, base_width as u32);
        }
    }
    let tensors = state_tensors(model);
    push_u32(&mut out, tensors.len() as u32);
    for (shape, _) in &tensors {
        push_u32(&mut out, shape.len() as u32);
        for &d in shape {
            push_u32(&mut out, d as u32);
        }
    }
    for (_, values) in &tensors {
        for v in *values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn state_tensors(model: &NetworkModel) -> Vec<(Vec<usize>, &[f64])> {
    let mut t: Vec<(Vec<usize>, &[f64])> = model
        .params()
        .into_iter()
        .map(|p| (p.shape.clone(), p.value.as_slice()))
        .collect();
    for bn in model.norms() {
        t.push((vec![bn.channels], &bn.running_mean));
        t.push((vec![bn.channels], &bn.running_var));
    }
    t
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], String> {
        let s = self
            .data
            .get(self.pos..self.pos + n)
            .ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(data: &[u8]) -> std::result::Result<NetworkModel, String> {
    let mut r = Reader { data, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let arch = match r.u32()? {
        1 => {
            let w = [r.u32()?, r.u32()?];
            let k = [r.u32()?, r.u32()?, r.u32()?];
            Architecture::Ssnet3l {
                widths: w,
                kernel_sizes: k,
                skip: r.u32()? != 0,
            }
        }
        2 => Architecture::MiniUnet {
            base_width: r.u32()?,
        },
        tag => return Err(format!("unknown architecture tag {tag}")),
    };
    let mut model = NetworkModel::new(arch, 0).map_err(|e| e.to_string())?;
    let expected: Vec<Vec<usize>> = state_tensors(&model).into_iter().map(|(s, _)| s).collect();
    let count = r.u32()?;
    if count != expected.len() {
        return Err(format!("expected {} tensors, found {count}", expected.len()));
    }
    for (i, want) in expected.iter().enumerate() {
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
        if &shape != want {
            return Err(format!("tensor {i} has shape {shape:?}, expected {want:?}"));
        }
    }
    let mut read_into = |dst: &mut [f64]| -> std::result::Result<(), String> {
        for v in dst.iter_mut() {
            *v = r.f64()?;
        }
        Ok(())
    };
    for p in model.params_mut() {
        read_into(&mut p.value)?;
    }
    for bn in model.norms_mut() {
        read_into(&mut bn.running_mean)?;
        read_into(&mut bn.running_var)?;
    }
    if r.pos != data.len() {
        return Err(format!("{} trailing bytes", data.len() - r.pos));
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &NetworkModel) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkModel> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&data).map_err(|reason| Error::Format {
        path: path.to_owned(),
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Image;
    use crate::network::layers::Mode;
    use crate::network::model::{build_mini_unet, NetworkModel};

    #[test]
    fn round_trip_preserves_predictions() {
        for arch in [
            Architecture::Ssnet3l {
                widths: [3, 2],
                kernel_sizes: [5, 3, 3],
                skip: true,
            },
            Architecture::MiniUnet { base_width: 2 },
        ] {
            let mut m = NetworkModel::new(arch, 9).unwrap();
            let y = Image::from_fn(8, 8, |r, c| ((r * 5 + c) % 9) as f64 / 9.0);
            // populate running statistics
            m.forward(&y, Mode::Train).unwrap();
            let bytes = encode_checkpoint(&m);
            let back = decode_checkpoint(&bytes).unwrap();
            assert_eq!(back.architecture(), m.architecture());
            assert_eq!(m.predict(&y).unwrap(), back.predict(&y).unwrap());
            assert_eq!(encode_checkpoint(&back), bytes);
        }
    }

    #[test]
    fn rejects_corruption() {
        let m = build_mini_unet(1, 0).unwrap();
        let bytes = encode_checkpoint(&m);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }
}
