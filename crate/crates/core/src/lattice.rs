//! Finite periodic lattices `Z_L^d`.

use serde::{Deserialize, Serialize};

/// The discrete torus `Z_L^d`. Sites are numbered row-major with axis 0
/// varying slowest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Torus {
    dim: usize,
    size: usize,
}

impl Torus {
    pub fn new(dim: usize, size: usize) -> Self {
        assert!(dim >= 1 && size >= 1, "torus needs dim >= 1 and size >= 1");
        Self { dim, size }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Linear size `L`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n_sites(&self) -> usize {
        self.size.pow(self.dim as u32)
    }

    /// Coordinates in `[0, L)^d`.
    pub fn coords(&self, site: usize) -> Vec<i64> {
        let mut c = vec![0i64; self.dim];
        let mut rest = site;
        for axis in (0..self.dim).rev() {
            c[axis] = (rest % self.size) as i64;
            rest /= self.size;
        }
        c
    }

    /// Site index of arbitrary integer coordinates (wrapped onto the torus).
    pub fn index(&self, coords: &[i64]) -> usize {
        let l = self.size as i64;
        coords
            .iter()
            .fold(0usize, |acc, &c| acc * self.size + c.rem_euclid(l) as usize)
    }

    /// Minimal-image representative of a coordinate difference, in `[-L/2, L/2)`.
    pub fn wrap(&self, delta: i64) -> i64 {
        let l = self.size as i64;
        let r = delta.rem_euclid(l);
        if 2 * r >= l {
            r - l
        } else {
            r
        }
    }

    /// Minimal-image displacement `x - y`.
    pub fn displacement(&self, x: usize, y: usize) -> Vec<i64> {
        let cx = self.coords(x);
        let cy = self.coords(y);
        cx.iter().zip(&cy).map(|(a, b)| self.wrap(a - b)).collect()
    }

    /// Euclidean torus distance.
    pub fn distance(&self, x: usize, y: usize) -> f64 {
        self.displacement(x, y)
            .iter()
            .map(|&v| (v * v) as f64)
            .sum::<f64>()
            .sqrt()
    }

    /// Sup-norm torus distance.
    pub fn cube_distance(&self, x: usize, y: usize) -> i64 {
        self.displacement(x, y).iter().map(|v| v.abs()).max().unwrap_or(0)
    }

    /// Sites within sup-norm distance `radius` of `center`, in increasing index order.
    pub fn cube_around(&self, center: usize, radius: usize) -> Vec<usize> {
        (0..self.n_sites())
            .filter(|&x| self.cube_distance(x, center) <= radius as i64)
            .collect()
    }

    /// The site closest to the geometric centre of `[0, L)^d`.
    pub fn central_site(&self) -> usize {
        let half = (self.size / 2) as i64;
        self.index(&vec![half; self.dim])
    }

    /// A cube of sites around the central site containing (roughly) the given
    /// fraction of the volume.
    pub fn central_region(&self, fraction: f64) -> Vec<usize> {
        let fraction = fraction.clamp(0.0, 1.0);
        if fraction >= 1.0 {
            return (0..self.n_sites()).collect();
        }
        let side = (fraction.powf(1.0 / self.dim as f64) * self.size as f64).round().max(1.0) as i64;
        let c = self.coords(self.central_site());
        let lo: Vec<i64> = c.iter().map(|&ci| ci - side / 2).collect();
        (0..self.n_sites())
            .filter(|&x| {
                let cx = self.coords(x);
                cx.iter()
                    .zip(&lo)
                    .all(|(&xi, &li)| (xi - li).rem_euclid(self.size as i64) < side)
            })
            .collect()
    }
}
