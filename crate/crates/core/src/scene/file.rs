//! Dataset file.
//!
//! ```text
//! magic    4 bytes "JAMD"
//! version  u32
//! counts   u32 x 8: scenes, n_agents, t_hist, t_future, n_map, n_points, d_s, d_p
//! hz       f32
//! seed     u64
//! scenes   fixed-stride blocks of f32:
//!            kind, pair[0], pair[1], agent types[n_agents],
//!            histories, map (2 blocks), futures
//! crc32    u32 over every preceding byte
//! ```
//!
//! All little-endian. Scene values are stored in memory already rounded to
//! `f32`, so a read reproduces the in-memory dataset bit for bit.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{AgentType, Dataset, DatasetHeader, SceneDims, SceneSample, ScenarioKind, D_P, D_S};

pub const MAGIC: &[u8; 4] = b"JAMD";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 * 4 + 4 + 8;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("not a dataset file (bad magic)")]
    BadMagic,
    #[error("unsupported dataset version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("header field `{field}` says {header} but the payload holds {payload}")]
    HeaderMismatch {
        field: &'static str,
        header: usize,
        payload: usize,
    },
    #[error("header field `{field}` has unsupported value {value}")]
    BadField { field: &'static str, value: usize },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("scene {scene}: invalid {what}")]
    BadScene { scene: usize, what: &'static str },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn stride(d: &SceneDims) -> usize {
    3 + d.n_agents + d.history_len() + d.map_len() + d.future_len()
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let d = &ds.header.dims;
    let mut out = Vec::with_capacity(HEADER_LEN + ds.scenes.len() * stride(d) * 4 + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&ds.header.version.to_le_bytes());
    for c in [ds.scenes.len(), d.n_agents, d.t_hist, d.t_future, d.n_map, d.n_points, D_S, D_P] {
        out.extend_from_slice(&(c as u32).to_le_bytes());
    }
    out.extend_from_slice(&(d.hz as f32).to_le_bytes());
    out.extend_from_slice(&ds.header.seed.to_le_bytes());
    let mut put = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
    for s in &ds.scenes {
        put(s.kind.index() as f64);
        put(s.pair[0] as f64);
        put(s.pair[1] as f64);
        for t in &s.agent_types {
            put(t.index() as f64);
        }
        for v in s.histories.iter().chain(&s.map).chain(&s.futures) {
            put(*v);
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn u32_at(b: &[u8], o: usize) -> u32 {
    u32::from_le_bytes(b[o..o + 4].try_into().unwrap())
}

/// Parses a dataset. Nothing is returned unless the whole file checks out.
pub fn decode_dataset(buf: &[u8]) -> Result<Dataset, DatasetError> {
    if buf.len() < 4 || &buf[..4] != MAGIC {
        return Err(DatasetError::BadMagic);
    }
    if buf.len() < HEADER_LEN + 4 {
        return Err(DatasetError::Truncated {
            expected: HEADER_LEN + 4,
            actual: buf.len(),
        });
    }
    let version = u32_at(buf, 4);
    if version != VERSION {
        return Err(DatasetError::Version {
            found: version,
            expected: VERSION,
        });
    }
    let c: Vec<usize> = (0..8).map(|i| u32_at(buf, 8 + 4 * i) as usize).collect();
    let (n_scenes, d_s, d_p) = (c[0], c[6], c[7]);
    if d_s != D_S {
        return Err(DatasetError::BadField { field: "d_s", value: d_s });
    }
    if d_p != D_P {
        return Err(DatasetError::BadField { field: "d_p", value: d_p });
    }
    let hz = f32::from_le_bytes(buf[40..44].try_into().unwrap()) as f64;
    let seed = u64::from_le_bytes(buf[44..52].try_into().unwrap());
    let dims = SceneDims {
        n_agents: c[1],
        t_hist: c[2],
        t_future: c[3],
        n_map: c[4],
        n_points: c[5],
        hz,
    };
    if dims.n_agents < 2 {
        return Err(DatasetError::BadField {
            field: "n_agents",
            value: dims.n_agents,
        });
    }
    let block = stride(&dims) * 4;
    let payload = buf.len() - HEADER_LEN - 4;
    if payload != n_scenes * block {
        if payload % block == 0 {
            return Err(DatasetError::HeaderMismatch {
                field: "scenes",
                header: n_scenes,
                payload: payload / block,
            });
        }
        return Err(DatasetError::Truncated {
            expected: HEADER_LEN + n_scenes * block + 4,
            actual: buf.len(),
        });
    }
    let body = &buf[..buf.len() - 4];
    let stored = u32_at(buf, buf.len() - 4);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(DatasetError::Checksum { stored, computed });
    }
    let mut scenes = Vec::with_capacity(n_scenes);
    for i in 0..n_scenes {
        let raw = &body[HEADER_LEN + i * block..HEADER_LEN + (i + 1) * block];
        let vals: Vec<f64> = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
        let bad = |what| DatasetError::BadScene { scene: i, what };
        let kind = ScenarioKind::from_index(vals[0] as usize).ok_or(bad("kind"))?;
        let pair = [vals[1] as usize, vals[2] as usize];
        if pair[0] == pair[1] || pair.iter().any(|&p| p >= dims.n_agents) {
            return Err(bad("interacting pair"));
        }
        let na = dims.n_agents;
        let agent_types = vals[3..3 + na]
            .iter()
            .map(|v| AgentType::from_index(*v as usize).ok_or(bad("agent type")))
            .collect::<Result<Vec<_>, _>>()?;
        let mut o = 3 + na;
        let mut take = |n: usize| {
            let s = vals[o..o + n].to_vec();
            o += n;
            s
        };
        let histories = take(dims.history_len());
        let map = take(dims.map_len());
        let futures = take(dims.future_len());
        scenes.push(SceneSample {
            dims,
            kind,
            pair,
            agent_types,
            histories,
            map,
            futures,
        });
    }
    Ok(Dataset {
        header: DatasetHeader {
            version,
            n_scenes,
            dims,
            seed,
        },
        scenes,
    })
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<(), DatasetError> {
    fs::write(path, encode_dataset(ds))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    decode_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_dataset, uniform_mix, DatasetSpec};

    fn small() -> Dataset {
        generate_dataset(&DatasetSpec {
            n_scenes: 10,
            dims: SceneDims::micro(),
            mix: uniform_mix(),
            uturn_rate: 0.2,
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ds = small();
        let bytes = encode_dataset(&ds);
        let back = decode_dataset(&bytes).unwrap();
        assert_eq!(back, ds);
        assert_eq!(encode_dataset(&back), bytes);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jamd");
        write_dataset(&p, &ds).unwrap();
        assert_eq!(read_dataset(&p).unwrap(), ds);
    }

    #[test]
    fn corrupted_checksum_is_rejected() {
        let mut bytes = encode_dataset(&small());
        let n = bytes.len();
        bytes[n - 1] ^= 0x55;
        assert!(matches!(decode_dataset(&bytes), Err(DatasetError::Checksum { .. })));
        let mut bytes = encode_dataset(&small());
        bytes[HEADER_LEN + 17] ^= 0x01;
        assert!(matches!(decode_dataset(&bytes), Err(DatasetError::Checksum { .. })));
    }

    #[test]
    fn header_count_mismatch_names_the_field() {
        let mut bytes = encode_dataset(&small());
        bytes[8..12].copy_from_slice(&11u32.to_le_bytes());
        match decode_dataset(&bytes) {
            Err(DatasetError::HeaderMismatch { field, header, payload }) => {
                assert_eq!((field, header, payload), ("scenes", 11, 10));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncation_and_version() {
        let bytes = encode_dataset(&small());
        assert!(matches!(decode_dataset(&bytes[..bytes.len() - 7]), Err(DatasetError::Truncated { .. })));
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(matches!(decode_dataset(&v), Err(DatasetError::Version { found: 9, .. })));
        assert!(matches!(decode_dataset(b"NOPE"), Err(DatasetError::BadMagic)));
    }
}
