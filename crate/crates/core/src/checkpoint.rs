//! Bit-exact binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "AEBDQNCK"
//! version      u32      currently 1
//! n_layers     u32
//! per layer    u32 n_in, u32 n_out
//! parameters   per layer: n_out*n_in f64 weights (row-major), n_out f64 biases
//! optimizer    f64 learning_rate, f64 rho, f64 epsilon,
//!              then accumulators with the same shape as the parameters
//! config       u32 byte length, then the UTF-8 `key = value` document
//! ```
//!
//! Loading validates the magic, the version, the layer-size header against
//! the embedded configuration, and that the file ends exactly after the
//! configuration. Raw f64 bits round-trip untouched.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::config::{parse_config, Config, ConfigError};
use crate::net::{DenseLayer, QNetwork, RmsProp};

const MAGIC: &[u8; 8] = b"AEBDQNCK";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {VERSION})")]
    Version { found: u32 },
    #[error("layer-size header {header:?} does not match the embedded config layers {config:?}")]
    HeaderMismatch {
        header: Vec<usize>,
        config: Vec<usize>,
    },
    #[error("checkpoint network sizes {found:?} do not match the active config layers {expected:?}")]
    LayerMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("trailing bytes after the checkpoint payload")]
    TrailingData,
    #[error("embedded config is invalid: {0}")]
    Config(#[from] ConfigError),
    #[error("embedded config is not valid UTF-8")]
    Utf8,
    #[error("implausible header field: {0}")]
    BadHeader(&'static str),
}

fn write_f64s(w: &mut impl Write, xs: &[f64]) -> std::io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_f64s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(read_f64(r)?);
    }
    Ok(out)
}

fn write_shaped(w: &mut impl Write, net: &QNetwork) -> std::io::Result<()> {
    for layer in &net.layers {
        write_f64s(w, &layer.w)?;
        write_f64s(w, &layer.b)?;
    }
    Ok(())
}

fn read_shaped(r: &mut impl Read, sizes: &[(usize, usize)]) -> std::io::Result<QNetwork> {
    let mut layers = Vec::with_capacity(sizes.len());
    for &(n_in, n_out) in sizes {
        let w = read_f64s(r, n_in * n_out)?;
        let b = read_f64s(r, n_out)?;
        layers.push(DenseLayer { n_in, n_out, w, b });
    }
    Ok(QNetwork { layers })
}

/// Write the network, optimizer state, and configuration to `path`.
pub fn save_checkpoint(
    net: &QNetwork,
    opt: &RmsProp,
    cfg: &Config,
    path: &Path,
) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(net.layers.len() as u32).to_le_bytes())?;
    for layer in &net.layers {
        w.write_all(&(layer.n_in as u32).to_le_bytes())?;
        w.write_all(&(layer.n_out as u32).to_le_bytes())?;
    }
    write_shaped(&mut w, net)?;
    write_f64s(&mut w, &[opt.learning_rate, opt.rho, opt.epsilon])?;
    write_shaped(&mut w, &opt.acc)?;
    let doc = cfg.to_document();
    w.write_all(&(doc.len() as u32).to_le_bytes())?;
    w.write_all(doc.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Read back a checkpoint. The returned triple reproduces what was saved
/// bit for bit.
pub fn load_checkpoint(path: &Path) -> Result<(QNetwork, RmsProp, Config), CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    let n_layers = read_u32(&mut r)? as usize;
    if n_layers == 0 || n_layers > 1024 {
        return Err(CheckpointError::BadHeader("layer count"));
    }
    let mut sizes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let n_in = read_u32(&mut r)? as usize;
        let n_out = read_u32(&mut r)? as usize;
        if n_in == 0 || n_out == 0 || n_in > 1 << 20 || n_out > 1 << 20 {
            return Err(CheckpointError::BadHeader("layer size"));
        }
        sizes.push((n_in, n_out));
    }
    let net = read_shaped(&mut r, &sizes)?;
    let learning_rate = read_f64(&mut r)?;
    let rho = read_f64(&mut r)?;
    let epsilon = read_f64(&mut r)?;
    let acc = read_shaped(&mut r, &sizes)?;
    let doc_len = read_u32(&mut r)? as usize;
    let mut doc = vec![0u8; doc_len];
    r.read_exact(&mut doc)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(CheckpointError::TrailingData);
    }
    let doc = String::from_utf8(doc).map_err(|_| CheckpointError::Utf8)?;
    let cfg = parse_config(&doc)?;
    let header_sizes: Vec<usize> = std::iter::once(sizes[0].0)
        .chain(sizes.iter().map(|&(_, n_out)| n_out))
        .collect();
    if header_sizes != cfg.layers {
        return Err(CheckpointError::HeaderMismatch {
            header: header_sizes,
            config: cfg.layers.clone(),
        });
    }
    let opt = RmsProp {
        learning_rate,
        rho,
        epsilon,
        acc,
    };
    Ok((net, opt, cfg))
}

/// Reject a checkpoint whose network sizes differ from the active config.
pub fn ensure_layer_match(active: &Config, loaded: &Config) -> Result<(), CheckpointError> {
    if active.layers != loaded.layers {
        return Err(CheckpointError::LayerMismatch {
            expected: active.layers.clone(),
            found: loaded.layers.clone(),
        });
    }
    Ok(())
}
