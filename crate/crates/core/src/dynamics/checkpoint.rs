//! Binary checkpoint of a trajectory.
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes | field                                  |
//! |-------|----------------------------------------|
//! | 8     | magic `b"MWALKCKP"`                    |
//! | 4     | format version (`u32`, currently 1)    |
//! | 4     | dimension d (`u32`)                    |
//! | 8     | sites per axis N (`u64`)               |
//! | 1     | model (0 = non-local, 1 = local)       |
//! | 8     | time (`f64`)                           |
//! | 8     | step index (`u64`)                     |
//! | 8     | base seed (`u64`)                      |
//! | 8     | trajectory id (`u64`)                  |
//! | 8     | noise step counter (`u64`)             |
//! | 16    | generator word position (`u128`)       |
//! | 16·V  | amplitudes as (re, im) `f64` pairs     |

use std::io::{Read, Write};

use num_complex::Complex64;

use super::{Model, WaveState};
use crate::error::{Error, Result};
use crate::lattice::LatticeGeometry;
use crate::noise::NoiseStream;

pub const MAGIC: &[u8; 8] = b"MWALKCKP";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 1 + 8 + 8 + 8 + 8 + 8 + 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub geometry: LatticeGeometry,
    pub model: Model,
    pub state: WaveState,
    pub base_seed: u64,
    pub trajectory_id: u64,
    pub noise_steps: u64,
    pub noise_word_pos: u128,
}

impl Checkpoint {
    pub fn capture(
        geometry: LatticeGeometry,
        model: Model,
        state: &WaveState,
        stream: &NoiseStream,
    ) -> Self {
        Self {
            geometry,
            model,
            state: state.clone(),
            base_seed: stream.base_seed(),
            trajectory_id: stream.trajectory_id(),
            noise_steps: stream.step_counter(),
            noise_word_pos: stream.word_pos(),
        }
    }

    pub fn noise_stream(&self) -> NoiseStream {
        NoiseStream::restore(
            self.base_seed,
            self.trajectory_id,
            self.noise_steps,
            self.noise_word_pos,
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 16 * self.state.amplitudes.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.geometry.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.geometry.n() as u64).to_le_bytes());
        out.push(match self.model {
            Model::NonLocal => 0,
            Model::Local => 1,
        });
        out.extend_from_slice(&self.state.time.to_le_bytes());
        out.extend_from_slice(&self.state.step.to_le_bytes());
        out.extend_from_slice(&self.base_seed.to_le_bytes());
        out.extend_from_slice(&self.trajectory_id.to_le_bytes());
        out.extend_from_slice(&self.noise_steps.to_le_bytes());
        out.extend_from_slice(&self.noise_word_pos.to_le_bytes());
        for a in &self.state.amplitudes {
            out.extend_from_slice(&a.re.to_le_bytes());
            out.extend_from_slice(&a.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |detail: &str| Error::format("checkpoint", detail);
        if bytes.len() < HEADER_LEN {
            return Err(bad("truncated header"));
        }
        let mut r = Reader { bytes, pos: 0 };
        if r.take::<8>() != *MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(r.take());
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(r.take()) as usize;
        let n = usize::try_from(u64::from_le_bytes(r.take())).map_err(|_| bad("N too large"))?;
        let model = match r.take::<1>()[0] {
            0 => Model::NonLocal,
            1 => Model::Local,
            m => return Err(bad(&format!("unknown model tag {m}"))),
        };
        let time = f64::from_le_bytes(r.take());
        let step = u64::from_le_bytes(r.take());
        let base_seed = u64::from_le_bytes(r.take());
        let trajectory_id = u64::from_le_bytes(r.take());
        let noise_steps = u64::from_le_bytes(r.take());
        let noise_word_pos = u128::from_le_bytes(r.take());
        let geometry =
            LatticeGeometry::new(dim, n).map_err(|e| bad(&format!("invalid geometry: {e}")))?;
        let v = geometry.volume();
        if bytes.len() != HEADER_LEN + 16 * v {
            return Err(bad(&format!(
                "expected {} amplitude bytes, found {}",
                16 * v,
                bytes.len() - HEADER_LEN
            )));
        }
        let amplitudes = (0..v)
            .map(|_| {
                let re = f64::from_le_bytes(r.take());
                let im = f64::from_le_bytes(r.take());
                Complex64::new(re, im)
            })
            .collect();
        Ok(Self {
            geometry,
            model,
            state: WaveState {
                amplitudes,
                time,
                step,
            },
            base_seed,
            trajectory_id,
            noise_steps,
            noise_word_pos,
        })
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| Error::io("<checkpoint stream>", e))?;
        Self::from_bytes(&buf)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const K: usize>(&mut self) -> [u8; K] {
        let out: [u8; K] = self.bytes[self.pos..self.pos + K].try_into().unwrap();
        self.pos += K;
        out
    }
}
