//! Distance-binned profiles of site-block norms and their exponential fits.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fit::{log_linear_fit, LogLinearFit};
use crate::lattice::Torus;

/// Bins whose mean lies below this are treated as numerical zero.
pub const NOISE_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub distance: f64,
    pub mean_norm: f64,
    pub std_norm: f64,
    pub count: usize,
}

/// Running sums per integer distance bin.
#[derive(Clone, Debug, Default)]
pub struct DistanceAccumulator {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    count: Vec<usize>,
}

impl DistanceAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bin index of a Euclidean distance (rounded to the nearest integer).
    pub fn bin_of(distance: f64) -> usize {
        distance.round() as usize
    }

    pub fn add(&mut self, distance: f64, value: f64) {
        let b = Self::bin_of(distance);
        if b >= self.count.len() {
            self.sum.resize(b + 1, 0.0);
            self.sum_sq.resize(b + 1, 0.0);
            self.count.resize(b + 1, 0);
        }
        self.sum[b] += value;
        self.sum_sq[b] += value * value;
        self.count[b] += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        let n = self.count.len().max(other.count.len());
        self.sum.resize(n, 0.0);
        self.sum_sq.resize(n, 0.0);
        self.count.resize(n, 0);
        for i in 0..other.count.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
            self.count[i] += other.count[i];
        }
    }

    pub fn bins(&self) -> Vec<ProfileBin> {
        (0..self.count.len())
            .filter(|&i| self.count[i] > 0)
            .map(|i| {
                let c = self.count[i] as f64;
                let mean = self.sum[i] / c;
                let var = if self.count[i] > 1 {
                    ((self.sum_sq[i] - c * mean * mean) / (c - 1.0)).max(0.0)
                } else {
                    0.0
                };
                ProfileBin {
                    distance: i as f64,
                    mean_norm: mean,
                    std_norm: var.sqrt(),
                    count: self.count[i],
                }
            })
            .collect()
    }
}

/// Accumulates `value(x, y)` over all site pairs, binned by torus distance.
pub fn accumulate_pairs(torus: &Torus, acc: &mut DistanceAccumulator, mut value: impl FnMut(usize, usize) -> f64) {
    let v = torus.n_sites();
    let coords: Vec<Vec<i64>> = (0..v).map(|x| torus.coords(x)).collect();
    for x in 0..v {
        for y in 0..v {
            let d2: i64 = coords[x]
                .iter()
                .zip(&coords[y])
                .map(|(a, b)| {
                    let w = torus.wrap(a - b);
                    w * w
                })
                .sum();
            acc.add((d2 as f64).sqrt(), value(x, y));
        }
    }
}

/// Result of fitting `mean ≈ C e^{-rate·r}` on a distance window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `+∞` when nothing above the noise floor remains in the window.
    pub rate: f64,
    pub fit: Option<LogLinearFit>,
    pub window: (f64, f64),
}

impl DecayFit {
    pub fn is_decaying(&self) -> bool {
        self.rate > 0.0
    }
}

/// Fits the bins with `lo ≤ distance ≤ hi` and mean above the noise floor.
pub fn fit_decay(bins: &[ProfileBin], lo: f64, hi: f64) -> Result<DecayFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = bins
        .iter()
        .filter(|b| b.distance >= lo && b.distance <= hi && b.mean_norm > NOISE_FLOOR)
        .map(|b| (b.distance, b.mean_norm))
        .unzip();
    if xs.len() < 2 {
        return Ok(DecayFit { rate: f64::INFINITY, fit: None, window: (lo, hi) });
    }
    let fit = log_linear_fit(&xs, &ys)?;
    Ok(DecayFit { rate: fit.rate, fit: Some(fit), window: (lo, hi) })
}

/// The standard fit window `[2, L/2 - 2]`.
pub fn default_window(torus: &Torus) -> (f64, f64) {
    (2.0, torus.size() as f64 / 2.0 - 2.0)
}

/// CSV with columns `distance, mean_norm, std_norm, count`.
pub fn write_profile_csv<W: Write>(writer: W, bins: &[ProfileBin]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for b in bins {
        w.serialize(b)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulator_statistics() {
        let mut acc = DistanceAccumulator::new();
        acc.add(1.0, 1.0);
        acc.add(1.2, 3.0);
        acc.add(3.0, 5.0);
        let bins = acc.bins();
        assert_eq!(bins.len(), 2);
        assert_eq!(bins[0].distance, 1.0);
        assert_eq!(bins[0].mean_norm, 2.0);
        assert!((bins[0].std_norm - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(bins[1].count, 1);
    }

    #[test]
    fn pair_counts_on_ring() {
        let t = Torus::new(1, 8);
        let mut acc = DistanceAccumulator::new();
        accumulate_pairs(&t, &mut acc, |_, _| 1.0);
        let counts: Vec<usize> = acc.bins().iter().map(|b| b.count).collect();
        assert_eq!(counts, vec![8, 16, 16, 16, 8]);
    }

    #[test]
    fn delta_profile_gives_infinite_rate() {
        let bins = vec![
            ProfileBin { distance: 0.0, mean_norm: 1.0, std_norm: 0.0, count: 1 },
            ProfileBin { distance: 2.0, mean_norm: 0.0, std_norm: 0.0, count: 1 },
            ProfileBin { distance: 3.0, mean_norm: 0.0, std_norm: 0.0, count: 1 },
        ];
        let f = fit_decay(&bins, 2.0, 10.0).unwrap();
        assert!(f.rate.is_infinite() && f.fit.is_none());
    }

    #[test]
    fn csv_header() {
        let mut out = Vec::new();
        write_profile_csv(&mut out, &[ProfileBin { distance: 1.0, mean_norm: 0.5, std_norm: 0.1, count: 4 }]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("distance,mean_norm,std_norm,count\n1.0,0.5,0.1,4"));
    }
}
