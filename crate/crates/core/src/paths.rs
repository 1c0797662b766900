//! Discretized Brownian paths with per-path deterministic substreams.
//!
//! Path `k` of a run with master seed `s` is generated from its own
//! ChaCha8 stream seeded by `mix(s, k)`, so any subset of paths can be
//! regenerated in any order, on any number of threads, bit for bit.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the substream for `index` under `master_seed`.
pub fn substream_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

pub fn substream(master_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(master_seed, index))
}

/// Box–Muller normal sampler. The second variate of each pair is cached.
#[derive(Debug, Clone)]
pub struct NormalSampler<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> NormalSampler<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] so that ln(u1) is finite.
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(invalid("horizon", format!("must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_k = k * dt`, with the last node pinned to the horizon exactly.
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |k| self.time(k))
    }

    /// Index of the last grid node `<= t`.
    pub fn index_at_or_before(&self, t: f64) -> usize {
        let k = (t / self.dt()).floor().max(0.0) as usize;
        let mut k = k.min(self.steps);
        while k > 0 && self.time(k) > t {
            k -= 1;
        }
        while k < self.steps && self.time(k + 1) <= t {
            k += 1;
        }
        k
    }

    /// Same horizon, twice the steps.
    pub fn refined(&self) -> Self {
        Self {
            horizon: self.horizon,
            steps: 2 * self.steps,
        }
    }
}

/// `(steps + 1) x m` Brownian values, row-major, `W(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    grid: TimeGrid,
    noise_dim: usize,
    values: Vec<f64>,
}

impl BrownianPath {
    pub fn from_values(grid: TimeGrid, noise_dim: usize, values: Vec<f64>) -> Result<Self> {
        if noise_dim == 0 {
            return Err(invalid("m", "noise dimension must be at least 1"));
        }
        if values.len() != (grid.steps() + 1) * noise_dim {
            return Err(crate::error::LabError::DimensionMismatch {
                expected: (grid.steps() + 1) * noise_dim,
                got: values.len(),
            });
        }
        Ok(Self {
            grid,
            noise_dim,
            values,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.noise_dim..(k + 1) * self.noise_dim]
    }

    /// Component `j` at node `k`.
    pub fn component(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.noise_dim + j]
    }

    pub fn increment(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.at(k + 1).iter().zip(self.at(k)).map(|(b, a)| b - a)
    }

    /// Path on the grid with every other node dropped. Requires an even
    /// number of steps.
    pub fn coarsened(&self) -> Result<Self> {
        if self.grid.steps() % 2 != 0 {
            return Err(invalid("steps", "coarsening needs an even step count"));
        }
        let grid = TimeGrid::new(self.grid.horizon(), self.grid.steps() / 2)?;
        let values = (0..=grid.steps())
            .flat_map(|k| self.at(2 * k).iter().copied())
            .collect();
        Self::from_values(grid, self.noise_dim, values)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "t")?;
        for j in 1..=self.noise_dim {
            write!(out, ",w{j}")?;
        }
        writeln!(out)?;
        for (k, t) in self.grid.times().enumerate() {
            write!(out, "{t}")?;
            for w in self.at(k) {
                write!(out, ",{w}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Brownian path number `path_index` for `master_seed`.
pub fn sample_brownian(
    grid: TimeGrid,
    noise_dim: usize,
    master_seed: u64,
    path_index: u64,
) -> Result<BrownianPath> {
    if noise_dim == 0 {
        return Err(invalid("m", "noise dimension must be at least 1"));
    }
    let sd = grid.dt().sqrt();
    let mut normals = NormalSampler::new(substream(master_seed, path_index));
    let mut values = vec![0.0; (grid.steps() + 1) * noise_dim];
    for k in 0..grid.steps() {
        for j in 0..noise_dim {
            values[(k + 1) * noise_dim + j] = values[k * noise_dim + j] + sd * normals.sample();
        }
    }
    BrownianPath::from_values(grid, noise_dim, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_at_zero_and_is_deterministic() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let a = sample_brownian(grid, 3, 7, 11).unwrap();
        let b = sample_brownian(grid, 3, 7, 11).unwrap();
        assert_eq!(a.at(0), &[0.0, 0.0, 0.0]);
        assert_eq!(a, b);
        let c = sample_brownian(grid, 3, 7, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn grid_nodes() {
        let grid = TimeGrid::new(1.0, 2048).unwrap();
        assert_eq!(grid.time(0), 0.0);
        assert_eq!(grid.time(2048), 1.0);
        assert_eq!(grid.index_at_or_before(0.5), 1024);
        assert_eq!(grid.index_at_or_before(0.9), 1843);
        assert!(grid.time(1843) <= 0.9 && grid.time(1844) > 0.9);
        assert!(grid.times().zip(grid.times().skip(1)).all(|(a, b)| b > a));
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn coarsening_keeps_even_nodes() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let w = sample_brownian(grid, 2, 1, 0).unwrap();
        let c = w.coarsened().unwrap();
        assert_eq!(c.grid().steps(), 4);
        assert_eq!(c.at(3), w.at(6));
    }

    #[test]
    fn csv_header() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let w = sample_brownian(grid, 2, 1, 0).unwrap();
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,w1,w2\n0,0,0\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
