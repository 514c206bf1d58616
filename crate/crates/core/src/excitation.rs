//! Pseudo-random multi-level excitation signals.
//!
//! Every channel switches independently. A channel draws from its own ChaCha8
//! stream: the key is the little-endian seed in the first eight bytes (the
//! rest zero) and the stream id is the channel index. Each segment consumes two
//! `u64` words, the hold length `min + w0 % (max - min + 1)` followed by the
//! level index `w1 % levels`. Levels are equispaced over `[lo, hi]`, both ends
//! included. The recipe is simple enough to reproduce in any language with a
//! ChaCha8 implementation.

use std::io::Write;
use std::path::Path;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::plant::{Input, NUM_INPUTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrmsConfig {
    pub levels: usize,
    pub bounds: [[f64; 2]; NUM_INPUTS],
    /// Inclusive `[min, max]` hold length in samples.
    pub hold_range_samples: [usize; 2],
    pub horizon_samples: usize,
    pub seed: u64,
}

impl Default for PrmsConfig {
    fn default() -> Self {
        Self {
            levels: 10,
            bounds: [[0.48, 0.66], [0.14, 0.20], [0.8, 1.2]],
            hold_range_samples: [30, 100],
            horizon_samples: 12_000,
            seed: 1,
        }
    }
}

impl PrmsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(RomError::config(format!("PRMS needs at least 2 levels, got {}", self.levels)));
        }
        let [min, max] = self.hold_range_samples;
        if min < 1 || max < min {
            return Err(RomError::config(format!("invalid hold range [{min}, {max}]")));
        }
        for (k, [lo, hi]) in self.bounds.iter().enumerate() {
            if !(lo <= hi) {
                return Err(RomError::config(format!("channel {k}: bounds [{lo}, {hi}] are inverted")));
            }
        }
        Ok(())
    }

    /// The equispaced level grid of one channel.
    pub fn level_grid(&self, channel: usize) -> Vec<f64> {
        let [lo, hi] = self.bounds[channel];
        let last = (self.levels - 1) as f64;
        (0..self.levels)
            .map(|k| if k + 1 == self.levels { hi } else { lo + (hi - lo) * k as f64 / last })
            .collect()
    }
}

fn channel_rng(seed: u64, channel: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(channel as u64);
    rng
}

/// One channel as a list of `(level_index, hold_length)` segments; the last
/// segment is truncated to the horizon.
pub fn channel_segments(config: &PrmsConfig, channel: usize) -> Result<Vec<(usize, usize)>> {
    config.validate()?;
    let [min, max] = config.hold_range_samples;
    let span = (max - min + 1) as u64;
    let mut rng = channel_rng(config.seed, channel);
    let mut segments = Vec::new();
    let mut filled = 0;
    while filled < config.horizon_samples {
        let hold = min + (rng.next_u64() % span) as usize;
        let level = (rng.next_u64() % config.levels as u64) as usize;
        let len = hold.min(config.horizon_samples - filled);
        segments.push((level, len));
        filled += len;
    }
    Ok(segments)
}

pub fn generate_prms(config: &PrmsConfig) -> Result<Vec<Input>> {
    config.validate()?;
    let mut out = vec![Input([0.0; NUM_INPUTS]); config.horizon_samples];
    for channel in 0..NUM_INPUTS {
        let grid = config.level_grid(channel);
        let mut k = 0;
        for (level, len) in channel_segments(config, channel)? {
            for u in &mut out[k..k + len] {
                u.0[channel] = grid[level];
            }
            k += len;
        }
    }
    Ok(out)
}

/// CSV with header `sample_index,F_L,Q_reb,F_G`.
pub fn write_inputs_csv(path: &Path, inputs: &[Input]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "sample_index,F_L,Q_reb,F_G")?;
    for (k, u) in inputs.iter().enumerate() {
        writeln!(w, "{k},{},{},{}", u.0[0], u.0[1], u.0[2])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_inputs_csv(path: &Path) -> Result<Vec<Input>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| RomError::Format {
                path: path.to_path_buf(),
                reason: format!("bad field {i} in row {}", out.len()),
            })
        };
        out.push(Input([parse(1)?, parse(2)?, parse(3)?]));
    }
    Ok(out)
}
