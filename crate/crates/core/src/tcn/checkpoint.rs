use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::conv::ConvLayer;
use super::model::{ResidualBlock, TcnConfig, TcnModel};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"TCNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Layout (little-endian): magic, u32 version, f64 dropout, u32 block count,
/// u32 layer count, per layer u32 (out, in, kernel, dilation), then per layer
/// the f32 weights (`out x in x kernel`, row-major) followed by the biases.
/// Layers are in declaration order: per block conv1, conv2, [proj]; head.
pub fn write_checkpoint(model: &TcnModel<f32>, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&model.config.dropout.to_le_bytes())?;
    w.write_all(&(model.blocks.len() as u32).to_le_bytes())?;
    let layers = model.layers();
    w.write_all(&(layers.len() as u32).to_le_bytes())?;
    for l in &layers {
        for d in [l.out_channels, l.in_channels, l.kernel_size, l.dilation] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
    }
    for l in &layers {
        for v in l.weight.iter().chain(&l.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn save_checkpoint(model: &TcnModel<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

struct Reader<'a, R> {
    inner: R,
    origin: &'a Path,
}

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::format(self.origin, "truncated checkpoint")
            } else {
                Error::io(self.origin, e)
            }
        })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }
}

/// Parses a checkpoint; `origin` only labels errors.
pub fn read_checkpoint(r: impl Read, origin: &Path) -> Result<TcnModel<f32>> {
    let mut r = Reader { inner: r, origin };
    let bad = |reason: String| Error::format(origin, reason);
    if &r.bytes::<7>()? != CHECKPOINT_MAGIC {
        return Err(bad("not a TCN checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(r.bytes()?);
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let dropout = f64::from_le_bytes(r.bytes()?);
    let n_blocks = r.u32()?;
    let n_layers = r.u32()?;
    if n_blocks == 0 || n_layers > 3 * n_blocks + 1 || n_layers < 2 * n_blocks + 1 {
        return Err(bad(format!("{n_blocks} blocks cannot have {n_layers} layers")));
    }
    let mut dims = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        dims.push([r.u32()?, r.u32()?, r.u32()?, r.u32()?]);
    }
    let mut layers = dims.iter().map(|&[out, inp, k, d]| -> Result<ConvLayer<f32>> {
        if out == 0 || inp == 0 || k == 0 || d == 0 || out * inp * k > 1 << 28 {
            return Err(bad(format!("implausible layer dims {out}x{inp}x{k} d{d}")));
        }
        let mut l = ConvLayer::zeros(inp, out, k, d);
        for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
            *v = r.f32()?;
        }
        Ok(l)
    });

    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let conv1 = layers.next().ok_or_else(|| bad("missing layer".into()))??;
        let conv2 = layers.next().ok_or_else(|| bad("missing layer".into()))??;
        let proj = if conv1.in_channels != conv1.out_channels {
            Some(layers.next().ok_or_else(|| bad("missing projection".into()))??)
        } else {
            None
        };
        blocks.push(ResidualBlock { conv1, conv2, proj });
    }
    let head = layers.next().ok_or_else(|| bad("missing head".into()))??;
    if layers.next().is_some() {
        return Err(bad("unexpected trailing layers".into()));
    }
    drop(layers);
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing).map_err(|e| Error::io(origin, e))? != 0 {
        return Err(bad("unexpected trailing bytes".into()));
    }

    let config = TcnConfig {
        input_channels: blocks[0].conv1.in_channels,
        hidden_channels: blocks[0].conv1.out_channels,
        output_channels: head.out_channels,
        kernel_size: blocks[0].conv1.kernel_size,
        dilations: blocks.iter().map(|b| b.conv1.dilation).collect(),
        dropout,
    };
    config.validate().map_err(|e| bad(e.to_string()))?;
    let model = TcnModel { config, blocks, head };
    // Rebuild from the config and compare shapes so a hand-edited header
    // cannot produce an inconsistent stack.
    let reference = {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        TcnModel::<f32>::new(model.config.clone(), &mut rng)?
    };
    let shape = |m: &TcnModel<f32>| -> Vec<[usize; 4]> {
        m.layers().iter().map(|l| [l.out_channels, l.in_channels, l.kernel_size, l.dilation]).collect()
    };
    if shape(&reference) != shape(&model) {
        return Err(bad("layer dims do not form a valid network".into()));
    }
    Ok(model)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TcnModel<f32>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file), path)
}
