//! Binary tensor cache.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "AISTTNSR"
//! version      u32      1
//! origin       i64      seconds since 1970-01-01T00:00:00 (naive local time)
//! step_hours   u32
//! steps        u64      T_total
//! regions      u64      N
//! region_ids   N x u32  ascending external ids
//! categories   u64      K, then K x (u32 byte length, UTF-8 name)
//! crimes       K*N*T x f64, index (k * N + i) * T + t
//! features     u64      J, then J*N*T x f64, index (j * N + i) * T + t
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a write/read cycle is exact.

use std::io::{Read, Write};
use std::path::Path;

use chrono::DateTime;

use super::{CrimeTensor, FeatureTensor, TimeGrid, FEATURE_COUNT};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"AISTTNSR";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCache {
    pub region_ids: Vec<u32>,
    pub crimes: CrimeTensor,
    pub features: FeatureTensor,
}

pub fn write_cache(path: impl AsRef<Path>, cache: &TensorCache) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    encode(cache, &mut buf);
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<TensorCache> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn encode(cache: &TensorCache, out: &mut Vec<u8>) {
    let c = &cache.crimes;
    out.write_all(MAGIC).unwrap();
    out.extend(VERSION.to_le_bytes());
    out.extend(c.grid.origin.and_utc().timestamp().to_le_bytes());
    out.extend(c.grid.step_hours.to_le_bytes());
    out.extend((c.grid.steps as u64).to_le_bytes());
    out.extend((c.regions as u64).to_le_bytes());
    for id in &cache.region_ids {
        out.extend(id.to_le_bytes());
    }
    out.extend((c.categories.len() as u64).to_le_bytes());
    for name in &c.categories {
        out.extend((name.len() as u32).to_le_bytes());
        out.extend(name.as_bytes());
    }
    for v in &c.values {
        out.extend(v.to_le_bytes());
    }
    out.extend((FEATURE_COUNT as u64).to_le_bytes());
    for v in &cache.features.values {
        out.extend(v.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format {
                what: "tensor cache",
                detail: "truncated".into(),
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.array()?) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| bad("size overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn bad(detail: &str) -> Error {
    Error::Format {
        what: "tensor cache",
        detail: detail.into(),
    }
}

fn decode(bytes: &[u8]) -> Result<TensorCache> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(bad("bad magic"));
    }
    if cur.u32()? != VERSION {
        return Err(bad("unsupported version"));
    }
    let origin_secs = i64::from_le_bytes(cur.array()?);
    let origin = DateTime::from_timestamp(origin_secs, 0)
        .ok_or_else(|| bad("origin out of range"))?
        .naive_utc();
    let step_hours = cur.u32()?;
    let steps = cur.u64()?;
    let regions = cur.u64()?;
    let region_ids = (0..regions).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
    let k = cur.u64()?;
    let mut categories = Vec::with_capacity(k.min(1024));
    for _ in 0..k {
        let len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(len)?).map_err(|_| bad("category name not UTF-8"))?;
        categories.push(name.to_string());
    }
    let crime_values = cur.f64s(k * regions * steps)?;
    if cur.u64()? != FEATURE_COUNT {
        return Err(bad("unexpected feature count"));
    }
    let feature_values = cur.f64s(FEATURE_COUNT * regions * steps)?;
    if cur.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    let grid = TimeGrid {
        origin,
        step_hours,
        steps,
    };
    Ok(TensorCache {
        region_ids,
        crimes: CrimeTensor {
            categories,
            regions,
            grid,
            values: crime_values,
        },
        features: FeatureTensor {
            regions,
            steps,
            values: feature_values,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn sample() -> TensorCache {
        let start = NaiveDate::from_ymd_opt(2019, 3, 1).unwrap();
        let grid = TimeGrid::days(start, start + chrono::Days::new(1), 4).unwrap();
        let mut crimes = CrimeTensor::zeros(vec!["theft".into(), "criminal damage".into()], 2, grid);
        for (n, v) in crimes.values.iter_mut().enumerate() {
            *v = n as f64 * 0.1 + 1e-300;
        }
        let mut features = FeatureTensor::zeros(2, grid.steps);
        features.values[5] = f64::MIN_POSITIVE;
        features.values[7] = -0.0;
        TensorCache {
            region_ids: vec![3, 9],
            crimes,
            features,
        }
    }

    #[test]
    fn write_read_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let c = sample();
        write_cache(&path, &c).unwrap();
        let back = read_cache(&path).unwrap();
        assert_eq!(back.region_ids, c.region_ids);
        assert_eq!(back.crimes.grid, c.crimes.grid);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.crimes.values), bits(&c.crimes.values));
        assert_eq!(bits(&back.features.values), bits(&c.features.values));
    }

    #[test]
    fn truncated_file_rejected() {
        let mut buf = Vec::new();
        encode(&sample(), &mut buf);
        buf.truncate(buf.len() - 3);
        assert!(decode(&buf).is_err());
        assert!(decode(b"NOTMAGIC").is_err());
    }
}
