//! Checkpoint archive: a small binary container holding a JSON metadata
//! header (architecture, anchors, ablation, counters, RNG states) followed by
//! named little-endian arrays (parameters, optimizer moments, mean styles).

use std::io::{Read as _, Write as _};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::networks::NetConfig;
use crate::{Error, Result, Scalar};

const MAGIC: &[u8; 4] = b"SBND";
const VERSION: u32 = 1;

/// Serializable position of a counter-based RNG stream.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// 128-bit word position split as (high, low).
    pub word_pos: (u64, u64),
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let wp = rng.get_word_pos();
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: ((wp >> 64) as u64, wp as u64),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(((self.word_pos.0 as u128) << 64) | self.word_pos.1 as u128);
        rng
    }
}

/// Metadata stored alongside the arrays.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CheckpointMeta {
    pub dtype: String,
    pub net: NetConfig,
    pub anchors: Vec<String>,
    pub ablation: Vec<String>,
    pub step: u64,
    pub exemplar_steps: u64,
    pub opt_g_steps: u64,
    pub opt_d_steps: u64,
    pub rng_loop: Option<RngState>,
    pub rng_patch: Option<RngState>,
    /// Resolved run configuration in its text form.
    pub config_text: String,
}

/// An in-memory checkpoint: metadata plus ordered named arrays.
pub struct Checkpoint<S: Scalar> {
    pub meta: CheckpointMeta,
    pub arrays: Vec<(String, ArrayD<S>)>,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn array(&self, name: &str) -> Option<&ArrayD<S>> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta_json = serde_json::to_vec(&self.meta)
            .map_err(|e| Error::Checkpoint(format!("metadata serialization failed: {e}")))?;
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        let mut u32buf = [0u8; 4];
        LittleEndian::write_u32(&mut u32buf, VERSION);
        buf.extend_from_slice(&u32buf);
        write_u64(&mut buf, meta_json.len() as u64);
        buf.extend_from_slice(&meta_json);
        write_u64(&mut buf, self.arrays.len() as u64);
        for (name, arr) in &self.arrays {
            write_u64(&mut buf, name.len() as u64);
            buf.extend_from_slice(name.as_bytes());
            write_u64(&mut buf, arr.ndim() as u64);
            for &d in arr.shape() {
                write_u64(&mut buf, d as u64);
            }
            let arr = arr.as_standard_layout();
            for &v in arr.iter() {
                v.write_le(&mut buf);
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&buf).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| Error::io(path, e))?
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let mut r = Cursor {
            bytes: &bytes,
            pos: 0,
            path,
        };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "{} is not a checkpoint (bad magic)",
                path.display()
            )));
        }
        let version = LittleEndian::read_u32(r.take(4)?);
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {VERSION})"
            )));
        }
        let meta_len = r.read_u64()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| Error::Checkpoint(format!("metadata parse failed: {e}")))?;
        if meta.dtype != S::DTYPE {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} values, this build expects {}",
                meta.dtype,
                S::DTYPE
            )));
        }
        let n_arrays = r.read_u64()? as usize;
        let mut arrays = Vec::with_capacity(n_arrays);
        for _ in 0..n_arrays {
            let name_len = r.read_u64()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("array name is not UTF-8".into()))?
                .to_string();
            let ndim = r.read_u64()? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(r.read_u64()? as usize);
            }
            let count: usize = dims.iter().product();
            let raw = r.take(count * S::BYTES)?;
            let mut values = Vec::with_capacity(count);
            for chunk in raw.chunks_exact(S::BYTES) {
                values.push(S::read_le(chunk));
            }
            let arr = ArrayD::from_shape_vec(IxDyn(&dims), values)
                .map_err(|e| Error::Checkpoint(format!("array `{name}` malformed: {e}")))?;
            arrays.push((name, arr));
        }
        Ok(Checkpoint { meta, arrays })
    }
}

fn write_u64(buf: &mut Vec<u8>, v: u64) {
    let mut b = [0u8; 8];
    LittleEndian::write_u64(&mut b, v);
    buf.extend_from_slice(&b);
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} is truncated (wanted {} bytes at offset {})",
                self.path.display(),
                n,
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn read_u64(&mut self) -> Result<u64> {
        Ok(LittleEndian::read_u64(self.take(8)?))
    }
}
