//! Versioned binary checkpoints: magic, version, config hash, time, step
//! count, grid size, field count, then the raw field arrays as
//! little-endian f64.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::state::{FieldState, NUM_FIELDS};

pub const MAGIC: [u8; 8] = *b"DUSTCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found} unsupported (expected {VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("checkpoint written for config hash {found:016x}, current config hashes to {expected:016x}")]
    ConfigMismatch { expected: u64, found: u64 },
    #[error("checkpoint holds {found} fields, expected {NUM_FIELDS}")]
    FieldCount { found: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub step: u64,
    pub state: FieldState,
}

pub fn write_to(mut w: impl Write, ck: &Checkpoint) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&ck.config_hash.to_le_bytes())?;
    w.write_all(&ck.state.t.to_le_bytes())?;
    w.write_all(&ck.step.to_le_bytes())?;
    w.write_all(&(ck.state.n() as u32).to_le_bytes())?;
    w.write_all(&(NUM_FIELDS as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * ck.state.data().len());
    for v in ck.state.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_array<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

/// Reads a checkpoint; `expected_hash` guards against resuming under a
/// different configuration.
pub fn read_from(mut r: impl Read, expected_hash: Option<u64>) -> Result<Checkpoint, CheckpointError> {
    if read_array::<8>(&mut r)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion { found: version });
    }
    let config_hash = u64::from_le_bytes(read_array(&mut r)?);
    if let Some(expected) = expected_hash {
        if expected != config_hash {
            return Err(CheckpointError::ConfigMismatch { expected, found: config_hash });
        }
    }
    let t = f64::from_le_bytes(read_array(&mut r)?);
    let step = u64::from_le_bytes(read_array(&mut r)?);
    let n = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let nfields = u32::from_le_bytes(read_array(&mut r)?);
    if nfields as usize != NUM_FIELDS {
        return Err(CheckpointError::FieldCount { found: nfields });
    }
    let len = NUM_FIELDS * n * n * n;
    let mut bytes = vec![0u8; 8 * len];
    r.read_exact(&mut bytes)?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    let state = FieldState::from_raw(n, t, data).expect("length computed from n");
    Ok(Checkpoint { config_hash, step, state })
}

pub fn save(path: &Path, ck: &Checkpoint) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = io::BufWriter::new(std::fs::File::create(&tmp)?);
        write_to(&mut f, ck)?;
        f.flush()?;
    }
    std::fs::rename(tmp, path)
}

pub fn load(path: &Path, expected_hash: Option<u64>) -> Result<Checkpoint, CheckpointError> {
    read_from(io::BufReader::new(std::fs::File::open(path)?), expected_hash)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(n: usize, seed: u64) -> Checkpoint {
        let m = NUM_FIELDS * n * n * n;
        let data = (0..m).map(|i| ((i as f64 + seed as f64) * 0.731).sin() * 1e-3 + (i % 7) as f64).collect();
        Checkpoint {
            config_hash: 0xdead_beef ^ seed,
            step: 17 + seed,
            state: FieldState::from_raw(n, 1.25, data).unwrap(),
        }
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_to(&mut buf, &sample(2, 0)).unwrap();
        assert_eq!(&buf[..8], b"DUSTCKPT");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), VERSION);
        assert_eq!(f64::from_le_bytes(buf[20..28].try_into().unwrap()), 1.25);
        assert_eq!(buf.len(), 8 + 4 + 8 + 8 + 8 + 4 + 4 + 8 * NUM_FIELDS * 8);
    }

    #[test]
    fn rejects_bad_input() {
        let ck = sample(2, 1);
        let mut buf = Vec::new();
        write_to(&mut buf, &ck).unwrap();
        assert!(matches!(read_from(&buf[..], Some(ck.config_hash + 1)), Err(CheckpointError::ConfigMismatch { .. })));
        assert!(matches!(read_from(&buf[..buf.len() - 3], None), Err(CheckpointError::Io(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_from(&bad[..], None), Err(CheckpointError::BadMagic)));
        let mut bad = buf;
        bad[8] = 9;
        assert!(matches!(read_from(&bad[..], None), Err(CheckpointError::UnsupportedVersion { found: 9 })));
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("ckpt-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("state.ckpt");
        let ck = sample(3, 2);
        save(&path, &ck).unwrap();
        assert_eq!(load(&path, Some(ck.config_hash)).unwrap(), ck);
        std::fs::remove_dir_all(dir).unwrap();
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(seed in 0u64..1000, n in 1usize..4) {
            let ck = sample(n, seed);
            let mut buf = Vec::new();
            write_to(&mut buf, &ck).unwrap();
            let back = read_from(&buf[..], Some(ck.config_hash)).unwrap();
            prop_assert!(back.state.data().iter().zip(ck.state.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back, ck);
        }
    }
}
