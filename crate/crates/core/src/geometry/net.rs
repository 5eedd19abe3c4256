use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::halfspace::{dist, Point};

/// `cos 30deg`: the covering threshold of a direction net.
pub const COS_30: f64 = 0.866_025_403_784_438_6;

/// Unit vectors `v_1..v_N` such that every unit vector is within 30 degrees
/// of one of them.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionNet {
    n: usize,
    vectors: Vec<Point>,
}

impl DirectionNet {
    /// `{-1, +1}` on the line, six directions at 60 degree spacing in the plane.
    pub fn build(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Self { n, vectors: vec![[1.0, 0.0], [-1.0, 0.0]] }),
            2 => Ok(Self::circle(6)),
            _ => Err(Error::UnsupportedDimension(n)),
        }
    }

    /// `k` equally spaced planar directions starting at angle zero.
    pub fn circle(k: usize) -> Self {
        let vectors = (0..k)
            .map(|m| {
                let a = std::f64::consts::TAU * m as f64 / k as f64;
                [a.cos(), a.sin()]
            })
            .collect();
        Self { n: 2, vectors }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Point] {
        &self.vectors
    }

    pub fn vector(&self, m: usize) -> Point {
        self.vectors[m]
    }

    /// Unit vector `v` belongs to `S_m` iff `v . v_m >= sqrt(3)/2`.
    pub fn in_direction_set(&self, v: &Point, m: usize) -> bool {
        dot(v, &self.vectors[m]) >= COS_30 - 1e-12
    }

    /// `y` in the sector `R_m(x, t)`.
    pub fn in_sector(&self, x: &Point, t: f64, m: usize, y: &Point) -> bool {
        let r = dist(x, y);
        if r == 0.0 {
            return true;
        }
        r < t && self.in_direction_set(&[(y[0] - x[0]) / r, (y[1] - x[1]) / r], m)
    }

    /// `min_v max_m v . v_m` over a deterministic sample of the sphere.
    pub fn worst_alignment(&self, samples: usize) -> f64 {
        sphere_sample(self.n, samples)
            .iter()
            .map(|v| self.vectors.iter().map(|w| dot(v, w)).fold(f64::NEG_INFINITY, f64::max))
            .fold(f64::INFINITY, f64::min)
    }

    /// The covering property, checked on `samples` directions.
    pub fn covers(&self, samples: usize) -> bool {
        self.vectors.iter().all(|v| (dot(v, v) - 1.0).abs() < 1e-12)
            && self.worst_alignment(samples) >= COS_30 - 1e-12
    }

    /// A uniformly random point of `R_m(x, t)`.
    pub fn sample_sector<R: Rng + ?Sized>(&self, rng: &mut R, x: &Point, t: f64, m: usize) -> Point {
        let v = self.vectors[m];
        if self.n == 1 {
            let r = t * rng.random::<f64>();
            return [x[0] + r * v[0], 0.0];
        }
        let half = std::f64::consts::PI / 6.0;
        let base = v[1].atan2(v[0]);
        let a = base + half * (2.0 * rng.random::<f64>() - 1.0);
        let r = t * rng.random::<f64>().sqrt();
        [x[0] + r * a.cos(), x[1] + r * a.sin()]
    }
}

fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Evenly spaced directions; both points of `S^0` when `n = 1`.
fn sphere_sample(n: usize, samples: usize) -> Vec<Point> {
    if n == 1 {
        return vec![[1.0, 0.0], [-1.0, 0.0]];
    }
    (0..samples.max(1))
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / samples as f64;
            [a.cos(), a.sin()]
        })
        .collect()
}

/// `|R_m(x, t)| / |B(x, t)|`.
pub fn sector_constant(n: usize) -> Result<f64> {
    match n {
        1 => Ok(0.5),
        2 => Ok(1.0 / 6.0),
        _ => Err(Error::UnsupportedDimension(n)),
    }
}

/// Monte Carlo estimate of the sector fraction of the unit ball, with its
/// binomial standard error.
pub fn sector_fraction_mc<R: Rng + ?Sized>(net: &DirectionNet, samples: usize, rng: &mut R) -> (f64, f64) {
    let origin = [0.0, 0.0];
    let mut hits = 0usize;
    for _ in 0..samples {
        let p = loop {
            let p = if net.n == 1 {
                [2.0 * rng.random::<f64>() - 1.0, 0.0]
            } else {
                [2.0 * rng.random::<f64>() - 1.0, 2.0 * rng.random::<f64>() - 1.0]
            };
            if dot(&p, &p) < 1.0 {
                break p;
            }
        };
        if net.in_sector(&origin, 1.0, 0, &p) {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    (p, (p * (1.0 - p) / samples as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn line_net() {
        let net = DirectionNet::build(1).unwrap();
        assert_eq!(net.len(), 2);
        assert!(net.covers(10));
        assert_eq!(net.worst_alignment(10), 1.0);
    }

    #[test]
    fn hexagonal_net_is_tight() {
        let net = DirectionNet::build(2).unwrap();
        assert_eq!(net.len(), 6);
        assert!(net.covers(3600));
        // The worst direction sits exactly between two net vectors.
        assert!((net.worst_alignment(3600) - COS_30).abs() < 1e-12);
    }

    #[test]
    fn five_directions_fail() {
        let net = DirectionNet::circle(5);
        let worst = net.worst_alignment(3600);
        assert!((worst - (36f64).to_radians().cos()).abs() < 1e-9);
        assert!(!net.covers(3600));
    }

    #[test]
    fn unsupported_dimension() {
        assert!(DirectionNet::build(3).is_err());
        assert!(sector_constant(3).is_err());
    }

    #[test]
    fn sector_fraction_matches_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2] {
            let net = DirectionNet::build(n).unwrap();
            let (p, se) = sector_fraction_mc(&net, 200_000, &mut rng);
            let c = sector_constant(n).unwrap();
            assert!((p - c).abs() < 3.0 * se, "n={n}: {p} vs {c} (se {se})");
        }
    }

    #[test]
    fn sampled_sector_points_belong() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DirectionNet::build(2).unwrap();
        let x = [0.3, -0.2];
        for m in 0..net.len() {
            for _ in 0..1000 {
                let y = net.sample_sector(&mut rng, &x, 0.7, m);
                assert!(net.in_sector(&x, 0.7, m, &y));
            }
        }
    }
}
