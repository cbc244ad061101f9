//! Binary checkpoint, all little-endian:
//!
//! ```text
//! "CTVR" | u32 version | u32 input_height | u32 input_width
//! | u32 x 11 integer hyperparameters | f64 x 3 real hyperparameters
//! | u32 tensor count | u64 length per tensor | f64 data of every tensor
//! ```
//!
//! Tensor order is [`CtvrModel::named_tensors`]; the loader rebuilds the
//! architecture from the header and rejects any length that differs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::conv::PoolKind;
use super::model::{CtvrModel, Hyperparameters};
use super::{Activation, CtvrError};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"CTVR";

fn io_err(path: &str) -> impl Fn(std::io::Error) -> CtvrError + '_ {
    move |source| CtvrError::Io {
        path: path.to_string(),
        source,
    }
}

fn u32_of(v: usize, what: &str) -> Result<u32, CtvrError> {
    u32::try_from(v).map_err(|_| CtvrError::Checkpoint(format!("{what} {v} does not fit in u32")))
}

pub fn write_model(model: &CtvrModel, mut w: impl Write) -> Result<(), CtvrError> {
    let h = &model.hyper;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let ints = [
        ("input_height", model.input_height),
        ("input_width", model.input_width),
        ("conv_layers", h.conv_layers),
        ("kernel_size", h.kernel_size),
        ("feature_maps", h.feature_maps),
        ("pool_size", h.pool_size),
        ("pool_kind", (h.pool_kind == PoolKind::Average) as usize),
        ("activation", h.activation.code() as usize),
        ("fcl_neurons", h.fcl_neurons),
        ("hidden_layers", h.hidden_layers),
        ("lstm_neurons", h.lstm_neurons),
        ("memory_depth", h.memory_depth),
        ("batch_size", h.batch_size),
    ];
    for (what, v) in ints {
        buf.extend_from_slice(&u32_of(v, what)?.to_le_bytes());
    }
    for v in [h.conv_dropout, h.lstm_dropout, h.learning_rate] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let tensors = model.named_tensors();
    buf.extend_from_slice(&u32_of(tensors.len(), "tensor count")?.to_le_bytes());
    for (_, t) in &tensors {
        buf.extend_from_slice(&(t.len() as u64).to_le_bytes());
    }
    for (_, t) in &tensors {
        for v in t.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io_err("<checkpoint stream>"))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CtvrError> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| CtvrError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice has length N"))
    }

    fn u32(&mut self) -> Result<u32, CtvrError> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64, CtvrError> {
        self.take::<8>().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64, CtvrError> {
        self.take::<8>().map(f64::from_le_bytes)
    }
}

pub fn read_model(mut r: impl Read) -> Result<CtvrModel, CtvrError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io_err("<checkpoint stream>"))?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if &c.take::<4>()? != MAGIC {
        return Err(CtvrError::Checkpoint("bad magic, not a CTVR checkpoint".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CtvrError::Checkpoint(format!("unsupported format version {version}")));
    }
    let mut ints = [0usize; 13];
    for v in ints.iter_mut() {
        *v = c.u32()? as usize;
    }
    let [input_height, input_width, conv_layers, kernel_size, feature_maps, pool_size, pool_kind, activation, fcl_neurons, hidden_layers, lstm_neurons, memory_depth, batch_size] =
        ints;
    let hyper = Hyperparameters {
        conv_layers,
        kernel_size,
        feature_maps,
        pool_size,
        pool_kind: match pool_kind {
            0 => PoolKind::Max,
            1 => PoolKind::Average,
            k => return Err(CtvrError::Checkpoint(format!("unknown pool kind code {k}"))),
        },
        activation: Activation::from_code(activation as u32)
            .ok_or_else(|| CtvrError::Checkpoint(format!("unknown activation code {activation}")))?,
        fcl_neurons,
        hidden_layers,
        conv_dropout: c.f64()?,
        lstm_neurons,
        lstm_dropout: c.f64()?,
        memory_depth,
        learning_rate: c.f64()?,
        batch_size,
    };
    let mut model = CtvrModel::zeros(hyper, input_height, input_width)?;
    let count = c.u32()? as usize;
    let expected: Vec<usize> = model.named_tensors().iter().map(|(_, t)| t.len()).collect();
    if count != expected.len() {
        return Err(CtvrError::Checkpoint(format!(
            "header declares {count} tensors, architecture has {}",
            expected.len()
        )));
    }
    for (i, &want) in expected.iter().enumerate() {
        let got = c.u64()?;
        if got != want as u64 {
            return Err(CtvrError::Checkpoint(format!("tensor {i} has length {got}, expected {want}")));
        }
    }
    for t in model.tensors_mut() {
        for v in t.iter_mut() {
            *v = c.f64()?;
        }
    }
    if c.pos != bytes.len() {
        return Err(CtvrError::Checkpoint(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(model)
}

pub fn save_model(model: &CtvrModel, path: impl AsRef<Path>) -> Result<(), CtvrError> {
    let p = path.as_ref().display().to_string();
    let mut w = BufWriter::new(File::create(path.as_ref()).map_err(io_err(&p))?);
    write_model(model, &mut w)?;
    w.flush().map_err(io_err(&p))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CtvrModel, CtvrError> {
    let p = path.as_ref().display().to_string();
    read_model(BufReader::new(File::open(path.as_ref()).map_err(io_err(&p))?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> CtvrModel {
        let hyper = Hyperparameters {
            pool_kind: PoolKind::Average,
            activation: Activation::Elu,
            hidden_layers: 1,
            ..Hyperparameters::default()
        };
        CtvrModel::new(hyper, 12, 12, 4).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"CTVR");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), CHECKPOINT_VERSION);
        assert_eq!(read_model(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let mut buf = Vec::new();
        write_model(&model(), &mut buf).unwrap();
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(read_model(bad_magic.as_slice()).is_err());
        assert!(read_model(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_model(extra.as_slice()).is_err());
        let mut version = buf;
        version[4] = 9;
        assert!(read_model(version.as_slice()).is_err());
    }
}
