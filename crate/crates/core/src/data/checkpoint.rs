//! Versioned little-endian checkpoint layout:
//!
//! ```text
//! "CATGCKPT" | version: u32 | body length: u64 | body | FNV-1a 64 of body: u64
//! body = n, L: u32 | step: u64 | epoch: f64 | epoch sum: f64 | epoch count: u64
//!        encoder dims, decoder dims: (count: u32, dims: u64…)
//!        optimizer kind: u8 | lr: f64 | t: u64
//!        rng seed: [u8; 32] | rng stream: u64 | rng word position: u128
//!        arrays: count: u32, then (name length: u16, name, length: u64, f64…)
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{CheckpointError, Result};
use crate::nn::{Layer, MlpParams, OptimizerKind, OptimizerState};
use crate::rng::RngState;
use crate::vae::{steps_per_epoch, Trainer, VaeModel};

const MAGIC: &[u8; 8] = b"CATGCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: VaeModel,
    pub opt: OptimizerState,
    pub rng: RngState,
    pub step: u64,
    /// Completed epochs at save time, fractional for mid-epoch saves.
    pub epoch: f64,
    pub epoch_sum: f64,
    pub epoch_count: u64,
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer, dataset_len: usize, batch_size: usize) -> Self {
        Self {
            model: trainer.model.clone(),
            opt: trainer.opt.clone(),
            rng: RngState::capture(&trainer.rng),
            step: trainer.step,
            epoch: trainer.step as f64 / steps_per_epoch(dataset_len, batch_size) as f64,
            epoch_sum: trainer.epoch_sum,
            epoch_count: trainer.epoch_count,
        }
    }

    pub fn into_trainer(self) -> Trainer {
        Trainer {
            model: self.model,
            opt: self.opt,
            rng: self.rng.restore(),
            step: self.step,
            epoch_sum: self.epoch_sum,
            epoch_count: self.epoch_count,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        let m = &self.model;
        put_u32(&mut body, m.n as u32);
        put_u32(&mut body, m.latents as u32);
        put_u64(&mut body, self.step);
        put_f64(&mut body, self.epoch);
        put_f64(&mut body, self.epoch_sum);
        put_u64(&mut body, self.epoch_count);
        for net in [&m.encoder, &m.decoder] {
            let dims = net.dims();
            put_u32(&mut body, dims.len() as u32);
            dims.iter().for_each(|d| put_u64(&mut body, *d as u64));
        }
        body.push(match self.opt.kind {
            OptimizerKind::Adam => 0,
            OptimizerKind::RAdam => 1,
        });
        put_f64(&mut body, self.opt.lr);
        put_u64(&mut body, self.opt.t);
        body.extend_from_slice(&self.rng.seed);
        put_u64(&mut body, self.rng.stream);
        body.extend_from_slice(&self.rng.word_pos.to_le_bytes());

        let arrays = named_arrays(self);
        put_u32(&mut body, arrays.len() as u32);
        for (name, values) in arrays {
            body.extend_from_slice(&(name.len() as u16).to_le_bytes());
            body.extend_from_slice(name.as_bytes());
            put_u64(&mut body, values.len() as u64);
            values.iter().for_each(|v| put_f64(&mut body, *v));
        }

        let mut out = Vec::with_capacity(body.len() + 28);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u64(&mut out, body.len() as u64);
        out.extend_from_slice(&body);
        put_u64(&mut out, fnv1a(&body));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut head = Cursor { bytes, at: 8 };
        let version = head.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let len = usize::try_from(head.u64()?).map_err(|_| CheckpointError::Truncated)?;
        let end = head.at.checked_add(len).ok_or(CheckpointError::Truncated)?;
        if bytes.len() < end + 8 {
            return Err(CheckpointError::Truncated);
        }
        if bytes.len() > end + 8 {
            return Err(CheckpointError::Corrupt(format!("{} trailing bytes", bytes.len() - end - 8)));
        }
        let body = &bytes[head.at..end];
        let checksum = u64::from_le_bytes(bytes[end..end + 8].try_into().expect("eight bytes"));
        if fnv1a(body) != checksum {
            return Err(CheckpointError::Corrupt("checksum mismatch".into()));
        }
        parse_body(&mut Cursor { bytes: body, at: 0 })
    }
}

fn named_arrays(c: &Checkpoint) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    for (prefix, net) in [("enc", &c.model.encoder), ("dec", &c.model.decoder)] {
        for (i, l) in net.layers.iter().enumerate() {
            out.push((format!("{prefix}.w{i}"), l.w.iter().copied().collect()));
            out.push((format!("{prefix}.b{i}"), l.b.to_vec()));
        }
    }
    for (i, m) in c.opt.m.iter().enumerate() {
        out.push((format!("opt.m{i}"), m.clone()));
    }
    for (i, v) in c.opt.v.iter().enumerate() {
        out.push((format!("opt.v{i}"), v.clone()));
    }
    out
}

fn parse_body(cur: &mut Cursor<'_>) -> Result<Checkpoint, CheckpointError> {
    let n = cur.u32()? as usize;
    let latents = cur.u32()? as usize;
    let step = cur.u64()?;
    let epoch = cur.f64()?;
    let epoch_sum = cur.f64()?;
    let epoch_count = cur.u64()?;
    let mut dims = Vec::new();
    for _ in 0..2 {
        let count = cur.u32()? as usize;
        if !(2..=64).contains(&count) {
            return Err(CheckpointError::Corrupt(format!("{count} layer sizes")));
        }
        dims.push((0..count).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?);
    }
    let kind = match cur.take(1)?[0] {
        0 => OptimizerKind::Adam,
        1 => OptimizerKind::RAdam,
        k => return Err(CheckpointError::Corrupt(format!("optimizer tag {k}"))),
    };
    let lr = cur.f64()?;
    let t = cur.u64()?;
    let seed: [u8; 32] = cur.take(32)?.try_into().expect("32 bytes");
    let stream = cur.u64()?;
    let word_pos = u128::from_le_bytes(cur.take(16)?.try_into().expect("16 bytes"));

    let count = cur.u32()? as usize;
    let mut arrays = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = u16::from_le_bytes(cur.take(2)?.try_into().expect("two bytes")) as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| CheckpointError::Corrupt("array name is not UTF-8".into()))?;
        let len = usize::try_from(cur.u64()?).map_err(|_| CheckpointError::Truncated)?;
        let raw = cur.take(len.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
        let values: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes"))).collect();
        arrays.push((name, values));
    }
    if cur.at != cur.bytes.len() {
        return Err(CheckpointError::Corrupt("unread bytes in body".into()));
    }
    let mut arrays = arrays.into_iter();
    let mut next = |want: &str, len: usize| -> Result<Vec<f64>, CheckpointError> {
        let (name, values) = arrays.next().ok_or_else(|| CheckpointError::Corrupt(format!("missing array {want}")))?;
        if name != want || values.len() != len {
            return Err(CheckpointError::Corrupt(format!("expected {want} of length {len}, found {name} of length {}", values.len())));
        }
        Ok(values)
    };
    let mut nets = Vec::new();
    for (prefix, d) in ["enc", "dec"].iter().zip(&dims) {
        let mut layers = Vec::new();
        for (i, w) in d.windows(2).enumerate() {
            let (fi, fo) = (w[0], w[1]);
            let wv = next(&format!("{prefix}.w{i}"), fi.checked_mul(fo).ok_or(CheckpointError::Truncated)?)?;
            let bv = next(&format!("{prefix}.b{i}"), fo)?;
            layers.push(Layer { w: Array2::from_shape_vec((fi, fo), wv).expect("length checked"), b: Array1::from(bv) });
        }
        nets.push(MlpParams::new(layers).map_err(|e| CheckpointError::Corrupt(e.to_string()))?);
    }
    let decoder = nets.pop().expect("two nets");
    let encoder = nets.pop().expect("two nets");
    let model = VaeModel::from_parts(encoder, decoder, n, latents).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let shapes = model.tensor_lengths();
    let mut opt = OptimizerState::new(kind, lr, &shapes).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    opt.t = t;
    for (i, len) in shapes.iter().enumerate() {
        opt.m[i] = next(&format!("opt.m{i}"), *len)?;
    }
    for (i, len) in shapes.iter().enumerate() {
        opt.v[i] = next(&format!("opt.v{i}"), *len)?;
    }
    if arrays.next().is_some() {
        return Err(CheckpointError::Corrupt("unexpected extra arrays".into()));
    }
    Ok(Checkpoint { model, opt, rng: RngState { seed, stream, word_pos }, step, epoch, epoch_sum, epoch_count })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or(CheckpointError::Truncated)?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_bits(self.u64()?))
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_bits().to_le_bytes());
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3))
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    // write-then-rename so a crash never leaves a half-written file
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, checkpoint.to_bytes())?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Ok(Checkpoint::from_bytes(&std::fs::read(path)?)?)
}
