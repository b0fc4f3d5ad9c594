//! Learnable weights, grouped per submodule.
//!
//! Every group is a struct of named row-major tensors. The whole model can
//! be flattened in a fixed order (hGAT, fGAT, the three streams, fusion),
//! which is the order used by the optimizer, the gradient tape and the
//! checkpoint file.
//!
//! Checkpoint layout, little-endian:
//!
//! ```text
//! magic     8 bytes "AISTCKPT"
//! version   u32     1
//! config    u32 byte length, TOML text of the TrainConfig
//! tensors   u32 count, then per tensor:
//!             u32 byte length + "group.name", u64 rows, u64 cols,
//!             rows*cols x f64
//! ```

use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Dims, TrainConfig};
use crate::error::{Error, Result};

/// Declares a parameter group. Each field lists `(rows, cols, fan_in)` as
/// expressions over the [`Dims`] binding.
macro_rules! param_group {
    ($(#[$meta:meta])* $name:ident, $d:ident => { $($field:ident : ($r:expr, $c:expr, $fan:expr)),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name<S> {
            $(pub $field: Vec<S>,)*
        }

        impl<S: Copy> $name<S> {
            /// `(name, rows, cols, fan_in)` per tensor.
            pub fn shapes($d: &$crate::config::Dims) -> Vec<(&'static str, usize, usize, usize)> {
                vec![$((stringify!($field), $r, $c, $fan)),*]
            }

            pub fn from_fn(
                $d: &$crate::config::Dims,
                mut f: impl FnMut(&'static str, usize, usize, usize) -> Vec<S>,
            ) -> Self {
                Self { $($field: f(stringify!($field), $r, $c, $fan),)* }
            }

            pub fn map<U>(&self, mut f: impl FnMut(S) -> U) -> $name<U> {
                $name { $($field: self.$field.iter().map(|&v| f(v)).collect(),)* }
            }

            pub fn tensors(&self) -> Vec<(&'static str, &[S])> {
                vec![$((stringify!($field), self.$field.as_slice())),*]
            }

            pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Vec<S>)> {
                vec![$((stringify!($field), &mut self.$field)),*]
            }
        }
    };
}
pub(crate) use param_group;

use crate::fgat::FGatParams;
use crate::fusion::FusionParams;
use crate::hgat::HGatParams;
use crate::sab_lstm::SabLstmParams;

pub const GROUP_NAMES: [&str; 6] = ["hgat", "fgat", "sab_recent", "sab_daily", "sab_weekly", "fusion"];

/// Named tensors of one parameter group.
pub type GroupTensors<'a, S> = Vec<(&'static str, &'a [S])>;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S> {
    pub dims: Dims,
    pub hgat: HGatParams<S>,
    pub fgat: FGatParams<S>,
    /// Recent, daily, weekly. Present even when a stream is disabled.
    pub streams: [SabLstmParams<S>; 3],
    pub fusion: FusionParams<S>,
}

impl<S: Copy> ModelParams<S> {
    pub fn from_fn(dims: Dims, mut f: impl FnMut(&'static str, usize, usize, usize) -> Vec<S>) -> Self {
        Self {
            dims,
            hgat: HGatParams::from_fn(&dims, &mut f),
            fgat: FGatParams::from_fn(&dims, &mut f),
            streams: std::array::from_fn(|_| SabLstmParams::from_fn(&dims, &mut f)),
            fusion: FusionParams::from_fn(&dims, &mut f),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(S) -> U) -> ModelParams<U> {
        ModelParams {
            dims: self.dims,
            hgat: self.hgat.map(&mut f),
            fgat: self.fgat.map(&mut f),
            streams: [
                self.streams[0].map(&mut f),
                self.streams[1].map(&mut f),
                self.streams[2].map(&mut f),
            ],
            fusion: self.fusion.map(&mut f),
        }
    }

    /// `(group, tensors)` in flattening order.
    pub fn groups(&self) -> Vec<(&'static str, GroupTensors<'_, S>)> {
        vec![
            (GROUP_NAMES[0], self.hgat.tensors()),
            (GROUP_NAMES[1], self.fgat.tensors()),
            (GROUP_NAMES[2], self.streams[0].tensors()),
            (GROUP_NAMES[3], self.streams[1].tensors()),
            (GROUP_NAMES[4], self.streams[2].tensors()),
            (GROUP_NAMES[5], self.fusion.tensors()),
        ]
    }

    fn groups_mut(&mut self) -> Vec<Vec<(&'static str, &mut Vec<S>)>> {
        let [r, d, w] = &mut self.streams;
        vec![
            self.hgat.tensors_mut(),
            self.fgat.tensors_mut(),
            r.tensors_mut(),
            d.tensors_mut(),
            w.tensors_mut(),
            self.fusion.tensors_mut(),
        ]
    }

    pub fn len(&self) -> usize {
        self.groups()
            .iter()
            .flat_map(|(_, ts)| ts.iter().map(|(_, t)| t.len()))
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.len());
        for (_, tensors) in self.groups() {
            for (_, t) in tensors {
                out.extend_from_slice(t);
            }
        }
        out
    }

    pub fn assign(&mut self, flat: &[S]) {
        assert_eq!(flat.len(), self.len(), "flat parameter length");
        let mut pos = 0;
        for group in self.groups_mut() {
            for (_, t) in group {
                let n = t.len();
                t.copy_from_slice(&flat[pos..pos + n]);
                pos += n;
            }
        }
    }

    /// Flat index range of each group.
    pub fn group_ranges(&self) -> Vec<(&'static str, Range<usize>)> {
        let mut pos = 0;
        self.groups()
            .into_iter()
            .map(|(name, tensors)| {
                let n: usize = tensors.iter().map(|(_, t)| t.len()).sum();
                pos += n;
                (name, pos - n..pos)
            })
            .collect()
    }
}

impl ModelParams<f64> {
    /// Uniform in `±1/sqrt(fan_in)` per tensor, drawn in flattening order.
    pub fn init(dims: Dims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_fn(dims, |_, rows, cols, fan_in| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect()
        })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self::from_fn(dims, |_, rows, cols, _| vec![0.0; rows * cols])
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// Shapes of every tensor for `dims`, as `("group.name", rows, cols)`.
pub fn tensor_shapes(dims: &Dims) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    let mut add = |group: &str, shapes: Vec<(&'static str, usize, usize, usize)>| {
        for (name, r, c, _) in shapes {
            out.push((format!("{group}.{name}"), r, c));
        }
    };
    add(GROUP_NAMES[0], HGatParams::<f64>::shapes(dims));
    add(GROUP_NAMES[1], FGatParams::<f64>::shapes(dims));
    for g in &GROUP_NAMES[2..5] {
        add(g, SabLstmParams::<f64>::shapes(dims));
    }
    add(GROUP_NAMES[5], FusionParams::<f64>::shapes(dims));
    out
}

const MAGIC: &[u8; 8] = b"AISTCKPT";
const VERSION: u32 = 1;

pub fn encode_checkpoint(params: &ModelParams<f64>, config: &TrainConfig) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend(MAGIC);
    out.extend(VERSION.to_le_bytes());
    let text = config.to_toml();
    out.extend((text.len() as u32).to_le_bytes());
    out.extend(text.as_bytes());
    let shapes = tensor_shapes(&params.dims);
    out.extend((shapes.len() as u32).to_le_bytes());
    let flat = params.flatten();
    let mut pos = 0;
    for (name, rows, cols) in shapes {
        out.extend((name.len() as u32).to_le_bytes());
        out.extend(name.as_bytes());
        out.extend((rows as u64).to_le_bytes());
        out.extend((cols as u64).to_le_bytes());
        for v in &flat[pos..pos + rows * cols] {
            out.extend(v.to_le_bytes());
        }
        pos += rows * cols;
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams<f64>, TrainConfig)> {
    let bad = |detail: String| Error::Format {
        what: "checkpoint",
        detail,
    };
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated".into()))?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    if take(8)? != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
    let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap()) as usize;
    if u32_at(take(4)?) != VERSION {
        return Err(bad("unsupported version".into()));
    }
    let len = u32_at(take(4)?) as usize;
    let text = std::str::from_utf8(take(len)?).map_err(|_| bad("config is not UTF-8".into()))?;
    let config = TrainConfig::from_toml(text)?;
    let expected = tensor_shapes(&config.dims());
    let count = u32_at(take(4)?) as usize;
    if count != expected.len() {
        return Err(bad(format!("{count} tensors, expected {}", expected.len())));
    }
    let mut flat = Vec::new();
    for (want, rows, cols) in expected {
        let n = u32_at(take(4)?) as usize;
        let name = std::str::from_utf8(take(n)?).map_err(|_| bad("tensor name is not UTF-8".into()))?;
        let (r, c) = (u64_at(take(8)?), u64_at(take(8)?));
        if name != want || r != rows || c != cols {
            return Err(bad(format!("tensor {name} {r}x{c}, expected {want} {rows}x{cols}")));
        }
        let raw = take(r * c * 8)?;
        flat.extend(raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())));
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes".into()));
    }
    let mut params = ModelParams::zeros(config.dims());
    params.assign(&flat);
    Ok((params, config))
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ModelParams<f64>, config: &TrainConfig) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(params, config)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams<f64>, TrainConfig)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_assign_round_trip() {
        let dims = TrainConfig::desk().dims();
        let p = ModelParams::init(dims, 3);
        let mut q = ModelParams::zeros(dims);
        q.assign(&p.flatten());
        assert_eq!(p, q);
        let ranges = p.group_ranges();
        assert_eq!(ranges.len(), 6);
        assert_eq!(ranges.last().unwrap().1.end, p.len());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let dims = TrainConfig::desk().dims();
        let p = ModelParams::init(dims, 1);
        for (_, tensors) in p.groups() {
            assert!(!tensors.is_empty());
        }
        let shapes = SabLstmParams::<f64>::shapes(&dims);
        let (_, _, _, fan) = shapes[0];
        let bound = 1.0 / (fan as f64).sqrt();
        assert!(p.streams[0].w.iter().all(|v| v.abs() <= bound));
        assert_ne!(ModelParams::init(dims, 1), ModelParams::init(dims, 2));
        assert_eq!(ModelParams::init(dims, 1), ModelParams::init(dims, 1));
    }

    #[test]
    fn checkpoint_is_bit_exact() {
        let cfg = TrainConfig::desk();
        let p = ModelParams::init(cfg.dims(), 9).map(|v| v * 1.000_000_1);
        let bytes = encode_checkpoint(&p, &cfg);
        let (q, c) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(c, cfg);
        let bits = |m: &ModelParams<f64>| m.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p), bits(&q));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn checkpoint_rejects_shape_mismatch() {
        let cfg = TrainConfig::desk();
        let p = ModelParams::init(cfg.dims(), 9);
        let mut other = cfg.clone();
        other.hidden_dim += 1;
        let bytes = encode_checkpoint(&p, &other);
        assert!(decode_checkpoint(&bytes).is_err());
    }
}
