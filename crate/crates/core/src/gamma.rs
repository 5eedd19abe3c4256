//! Gaussian random measure on the grid cells.
//!
//! `W(C)` is a centered Gaussian with variance `mu(C)`, independent across
//! cells. For a cell-constant `f` the integral `sum_C W(C) f(C)` is a
//! centered Gaussian vector in `R^d` with covariance `sum_C mu(C) f(C) f(C)^T`,
//! so every gamma norm is a function of that `d x d` matrix: its trace in
//! the Euclidean case, a Monte Carlo average of `|A g|^2` with `A A^T = Cov`
//! otherwise.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::halfspace::{BaseGrid, GridFunction, NormTag, NormedSpace};

pub const DEFAULT_SAMPLES: usize = 20_000;
const CHUNK: usize = 4096;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(a: u64, b: u64) -> u64 {
    splitmix(a ^ splitmix(b))
}

fn unit_open(u: u64) -> f64 {
    ((u >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn box_muller(u1: u64, u2: u64) -> (f64, f64) {
    let r = (-2.0 * unit_open(u1).ln()).sqrt();
    let a = std::f64::consts::TAU * unit_open(u2);
    (r * a.cos(), r * a.sin())
}

/// Fills `out` with independent standard normals.
pub fn fill_normals<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let (a, b) = box_muller(rng.next_u64(), rng.next_u64());
        pair[0] = a;
        pair[1] = b;
    }
    if let [last] = chunks.into_remainder() {
        *last = box_muller(rng.next_u64(), rng.next_u64()).0;
    }
}

/// Counter-based Gaussian source. `(seed, stream)` selects a ChaCha key;
/// chunks and draws select ChaCha streams, and a cell selects a word
/// position, so any sample can be regenerated independently of the order
/// of evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaussianSampler {
    pub seed: u64,
    pub stream: u64,
}

impl GaussianSampler {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Independent child stream.
    pub fn substream(&self, id: u64) -> Self {
        Self { seed: self.seed, stream: mix(self.stream, id.wrapping_add(1)) }
    }

    fn keyed(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(self.seed, self.stream))
    }

    /// Generator for the `chunk`-th block of a Monte Carlo loop.
    pub fn chunk_rng(&self, chunk: u64) -> ChaCha8Rng {
        let mut rng = self.keyed();
        rng.set_stream(chunk);
        rng
    }

    /// `g_C` of the `draw`-th realization of the random measure.
    pub fn cell_normal(&self, draw: u64, cell: usize) -> f64 {
        let mut rng = self.keyed();
        rng.set_stream(draw);
        rng.set_word_pos(cell as u128 * 4);
        box_muller(rng.next_u64(), rng.next_u64()).0
    }
}

/// `sum_{C in region} sqrt(mu(C)) g_C f(C)` for one realization.
pub fn stochastic_integral_sample(f: &GridFunction, region: &[usize], sampler: &GaussianSampler, draw: u64) -> Vec<f64> {
    let grid = f.grid();
    let mut out = vec![0.0; f.dim()];
    for &c in region {
        let w = grid.measure(c).sqrt() * sampler.cell_normal(draw, c);
        for (o, v) in out.iter_mut().zip(f.value(c)) {
            *o += w * v;
        }
    }
    out
}

/// Symmetric `d x d` covariance, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Covariance {
    d: usize,
    m: Vec<f64>,
}

impl Covariance {
    pub fn zeros(d: usize) -> Self {
        Self { d, m: vec![0.0; d * d] }
    }

    pub fn from_flat(d: usize, m: Vec<f64>) -> Self {
        assert_eq!(m.len(), d * d);
        Self { d, m }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.m
    }

    /// `self += w v v^T`.
    pub fn add_outer(&mut self, v: &[f64], w: f64) {
        for i in 0..self.d {
            let wi = w * v[i];
            for j in 0..self.d {
                self.m[i * self.d + j] += wi * v[j];
            }
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.m[i * self.d + i]).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.m.iter().all(|&x| x == 0.0)
    }

    /// `sum_{C in region} mu(C) f(C) f(C)^T`.
    pub fn of(f: &GridFunction, region: impl IntoIterator<Item = usize>) -> Self {
        let mut cov = Self::zeros(f.dim());
        for c in region {
            cov.add_outer(f.value(c), f.grid().measure(c));
        }
        cov
    }

    /// `A` with `A A^T = self` (negative rounding eigenvalues clipped).
    fn factor(&self) -> Vec<f64> {
        let d = self.d;
        if d == 1 {
            return vec![self.m[0].max(0.0).sqrt()];
        }
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &self.m));
        let mut a = vec![0.0; d * d];
        for k in 0..d {
            let s = eig.eigenvalues[k].max(0.0).sqrt();
            for i in 0..d {
                a[i * d + k] = eig.eigenvectors[(i, k)] * s;
            }
        }
        a
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaPath {
    Exact,
    Mc,
}

/// `(E |int f dW|^2)^(1/2)` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
    pub path: GammaPath,
}

impl GammaEstimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0, samples: 0, seed: 0, path: GammaPath::Exact }
    }

    /// Estimate of `E |int f dW|^2` and its standard error (delta method).
    pub fn second_moment(&self) -> (f64, f64) {
        (self.value * self.value, 2.0 * self.value * self.stderr)
    }
}

/// Leave-one-out standard error of `g(mean(x))`.
fn jackknife(xs: &[f64], g: impl Fn(f64) -> f64) -> f64 {
    let m = xs.len();
    if m < 2 {
        return f64::INFINITY;
    }
    let total: f64 = xs.iter().sum();
    let mf = m as f64;
    let thetas: Vec<f64> = xs.iter().map(|x| g((total - x) / (mf - 1.0))).collect();
    let mean = thetas.iter().sum::<f64>() / mf;
    let ss: f64 = thetas.iter().map(|t| (t - mean).powi(2)).sum();
    ((mf - 1.0) / mf * ss).sqrt()
}

/// Gamma-norm evaluator for one value space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaEngine {
    pub space: NormedSpace,
    pub samples: usize,
    pub seed: u64,
}

impl GammaEngine {
    pub fn new(space: NormedSpace) -> Self {
        Self { space, samples: DEFAULT_SAMPLES, seed: 0 }
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn is_exact(&self) -> bool {
        self.space.is_hilbert()
    }

    /// `|A g|^2` for `M` Gaussian vectors `g`, in sample order.
    fn draws(&self, cov: &Covariance, stream: u64, power: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
        let d = cov.dim();
        let a = cov.factor();
        let sampler = GaussianSampler::new(self.seed, stream);
        let m = self.samples;
        let chunks = m.div_ceil(CHUNK);
        let parts = crate::par::map_range(chunks, |ci| {
            let len = CHUNK.min(m - ci * CHUNK);
            let mut rng = sampler.chunk_rng(ci as u64);
            let mut g = vec![0.0; d];
            let mut z = vec![0.0; d];
            (0..len)
                .map(|_| {
                    fill_normals(&mut rng, &mut g);
                    for i in 0..d {
                        z[i] = (0..d).map(|k| a[i * d + k] * g[k]).sum();
                    }
                    power(self.space.norm(&z))
                })
                .collect::<Vec<_>>()
        });
        parts.concat()
    }

    /// Monte Carlo estimate regardless of the norm tag.
    pub fn monte_carlo(&self, cov: &Covariance, stream: u64) -> GammaEstimate {
        let mut est = GammaEstimate {
            value: 0.0,
            stderr: 0.0,
            samples: self.samples,
            seed: self.seed,
            path: GammaPath::Mc,
        };
        if cov.is_zero() || self.samples == 0 {
            return est;
        }
        let xs = self.draws(cov, stream, |r| r * r);
        est.value = (xs.iter().sum::<f64>() / xs.len() as f64).sqrt();
        est.stderr = jackknife(&xs, f64::sqrt);
        est
    }

    /// Exact for the Euclidean tag, Monte Carlo otherwise.
    pub fn estimate(&self, cov: &Covariance, stream: u64) -> GammaEstimate {
        if self.is_exact() {
            GammaEstimate::exact(cov.trace().max(0.0).sqrt())
        } else {
            self.monte_carlo(cov, stream)
        }
    }

    /// `E |int f dW|^2`: exact trace or Monte Carlo mean.
    pub fn second_moment(&self, cov: &Covariance, stream: u64) -> f64 {
        if self.is_exact() {
            cov.trace().max(0.0)
        } else {
            let v = self.monte_carlo(cov, stream).value;
            v * v
        }
    }

    /// Gamma norm of `1_region f`.
    pub fn gamma_norm(&self, f: &GridFunction, region: &[usize]) -> GammaEstimate {
        let stream = region.iter().fold(0x5eed_u64, |h, &c| mix(h, c as u64));
        self.estimate(&Covariance::of(f, region.iter().copied()), stream)
    }

    /// `(E|X|^p)^(1/p) / (E|X|^q)^(1/q)` for the Gaussian vector with
    /// covariance `cov`, with a jackknife standard error.
    pub fn khintchine_kahane_ratio(&self, cov: &Covariance, p: f64, q: f64, stream: u64) -> Result<(f64, f64)> {
        if !(p >= 1.0 && q >= 1.0 && p.is_finite() && q.is_finite()) {
            return Err(Error::InvalidParameter(format!("moments p = {p}, q = {q} must be in [1, inf)")));
        }
        if cov.is_zero() {
            return Err(Error::InvalidParameter("zero covariance has no moment ratio".into()));
        }
        let norms = self.draws(cov, stream, |r| r);
        let m = norms.len() as f64;
        let xp: Vec<f64> = norms.iter().map(|r| r.powf(p)).collect();
        let xq: Vec<f64> = norms.iter().map(|r| r.powf(q)).collect();
        let (sp, sq) = (xp.iter().sum::<f64>(), xq.iter().sum::<f64>());
        let ratio = |a: f64, b: f64| a.powf(1.0 / p) / b.powf(1.0 / q);
        let value = ratio(sp / m, sq / m);
        let thetas: Vec<f64> =
            xp.iter().zip(&xq).map(|(a, b)| ratio((sp - a) / (m - 1.0), (sq - b) / (m - 1.0))).collect();
        let mean = thetas.iter().sum::<f64>() / m;
        let se = ((m - 1.0) / m * thetas.iter().map(|t| (t - mean).powi(2)).sum::<f64>()).sqrt();
        Ok((value, se))
    }
}

/// Analytic reasons why `g` is dominated by `f` in covariance.
#[derive(Clone, Debug, PartialEq)]
pub enum Domination {
    /// `g = m f` cell-wise with `|m| <= 1`.
    Multiplier(Vec<f64>),
    /// `g = 1_R f` for the listed cells.
    Restriction(Vec<usize>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DominationReport {
    pub gamma_g: GammaEstimate,
    pub gamma_f: GammaEstimate,
    pub holds: bool,
    pub strict: bool,
}

/// Checks `gamma(g) <= gamma(f)` on `region` after verifying the hypothesis.
pub fn covariance_domination_check(
    engine: &GammaEngine,
    g: &GridFunction,
    f: &GridFunction,
    region: &[usize],
    hypothesis: &Domination,
) -> Result<DominationReport> {
    g.check_compatible(f)?;
    let close = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs())))
    };
    let verified = match hypothesis {
        Domination::Multiplier(m) => {
            m.len() == f.grid().len()
                && m.iter().all(|v| v.abs() <= 1.0)
                && region.iter().all(|&c| {
                    let scaled: Vec<f64> = f.value(c).iter().map(|v| v * m[c]).collect();
                    close(g.value(c), &scaled)
                })
        }
        Domination::Restriction(cells) => {
            let mut inside = vec![false; f.grid().len()];
            cells.iter().for_each(|&c| inside[c] = true);
            region.iter().all(|&c| {
                if inside[c] {
                    close(g.value(c), f.value(c))
                } else {
                    g.value(c).iter().all(|&v| v == 0.0)
                }
            })
        }
    };
    if !verified {
        return Err(Error::UnsupportedHypothesis(
            "g is not a bounded multiple or a restriction of f on the region".into(),
        ));
    }
    let stream = 0xD0_u64;
    let gamma_g = engine.estimate(&Covariance::of(g, region.iter().copied()), stream);
    let gamma_f = engine.estimate(&Covariance::of(f, region.iter().copied()), stream);
    let band = 4.0 * gamma_g.stderr.hypot(gamma_f.stderr);
    Ok(DominationReport {
        gamma_g,
        gamma_f,
        holds: gamma_g.value <= gamma_f.value * (1.0 + 1e-12) + band,
        strict: gamma_g.value < gamma_f.value,
    })
}

/// Exact gamma norms of `1_{A_k} f` along a sequence of regions.
pub fn dominated_convergence(f: &GridFunction, regions: &[Vec<usize>]) -> Vec<f64> {
    regions.iter().map(|r| Covariance::of(f, r.iter().copied()).trace().sqrt()).collect()
}

/// Operators on base-grid `R^d`-valued functions, acting componentwise.
#[derive(Clone, Debug, PartialEq)]
pub enum BaseOperator {
    Multiplier(Vec<f64>),
    /// Row-major `cells x cells` matrix.
    Dense(Vec<f64>),
}

impl BaseOperator {
    pub fn identity(grid: &BaseGrid) -> Self {
        BaseOperator::Multiplier(vec![1.0; grid.len()])
    }

    /// `A_B f = 1_B (average of f over B)`, with the average taken over the
    /// cell centers in `B`.
    pub fn ball_average(grid: &BaseGrid, ball: &crate::geometry::Ball) -> Self {
        let n = grid.len();
        let inside: Vec<usize> = (0..n).filter(|&c| ball.contains(&grid.center(c))).collect();
        let mut m = vec![0.0; n * n];
        if !inside.is_empty() {
            let w = 1.0 / inside.len() as f64;
            for &i in &inside {
                for &j in &inside {
                    m[i * n + j] = w;
                }
            }
        }
        BaseOperator::Dense(m)
    }

    /// `psi(|x - y|/t) / (c t^n) * sum_z h^n psi(|z - y|/t) f(z)`.
    pub fn smooth_average(grid: &BaseGrid, psi: impl Fn(f64) -> f64, y: &crate::Point, t: f64, c_psi: f64) -> Self {
        let n = grid.len();
        let w: Vec<f64> = (0..n).map(|c| psi(crate::halfspace::dist(&grid.center(c), y) / t)).collect();
        let scale = grid.cell_volume() / (c_psi * t.powi(grid.dim() as i32));
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = w[i] * scale * w[j];
            }
        }
        BaseOperator::Dense(m)
    }

    pub fn apply(&self, f: &[f64], d: usize) -> Vec<f64> {
        match self {
            BaseOperator::Multiplier(m) => {
                f.chunks(d).zip(m).flat_map(|(v, s)| v.iter().map(move |x| x * s)).collect()
            }
            BaseOperator::Dense(m) => {
                let n = f.len() / d;
                let mut out = vec![0.0; f.len()];
                for i in 0..n {
                    for j in 0..n {
                        let a = m[i * n + j];
                        if a != 0.0 {
                            for k in 0..d {
                                out[i * d + k] += a * f[j * d + k];
                            }
                        }
                    }
                }
                out
            }
        }
    }
}

/// Empirical gamma-boundedness constant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeReport {
    pub constant: f64,
    pub stderr: f64,
    pub path: GammaPath,
    pub ratios: Vec<f64>,
}

/// `max E|sum g_k T_k xi_k|^2 / E|sum g_k xi_k|^2` over random assignments
/// of operators to the test vectors. Test vectors live in
/// `L^p(base; X)` with outer exponent `outer_p`.
pub fn gamma_boundedness_probe(
    engine: &GammaEngine,
    grid: &BaseGrid,
    ops: &[BaseOperator],
    xis: &[Vec<f64>],
    trials: usize,
    outer_p: f64,
) -> Result<ProbeReport> {
    let d = engine.space.d;
    if ops.is_empty() || xis.is_empty() {
        return Err(Error::InvalidParameter("probe needs operators and test vectors".into()));
    }
    if xis.iter().any(|x| x.len() != grid.len() * d) {
        return Err(Error::ValueLength { expected: grid.len() * d, got: xis[0].len() });
    }
    if !(outer_p >= 1.0) {
        return Err(Error::InvalidParameter(format!("outer exponent {outer_p} must be >= 1")));
    }
    let hn = grid.cell_volume();
    let y_norm = |v: &[f64]| -> f64 {
        v.chunks(d).map(|x| engine.space.norm(x).powf(outer_p)).sum::<f64>().mul_add(hn, 0.0).powf(1.0 / outer_p)
    };
    let exact = engine.is_exact() && outer_p == 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(engine.seed, 0xB0));
    let mut report = ProbeReport {
        constant: 0.0,
        stderr: 0.0,
        path: if exact { GammaPath::Exact } else { GammaPath::Mc },
        ratios: Vec::new(),
    };
    for trial in 0..trials.max(1) {
        let images: Vec<Vec<f64>> = xis
            .iter()
            .enumerate()
            .map(|(k, xi)| {
                let op = if trial == 0 { &ops[k % ops.len()] } else { &ops[rng.random_range(0..ops.len())] };
                op.apply(xi, d)
            })
            .collect();
        let (ratio, se) = if exact {
            let num: f64 = images.iter().map(|v| y_norm(v).powi(2)).sum();
            let den: f64 = xis.iter().map(|v| y_norm(v).powi(2)).sum();
            (if den > 0.0 { num / den } else { 0.0 }, 0.0)
        } else {
            mc_ratio(engine, &images, xis, &y_norm, trial as u64)
        };
        report.ratios.push(ratio);
        if ratio > report.constant {
            report.constant = ratio;
            report.stderr = se;
        }
    }
    Ok(report)
}

fn mc_ratio(
    engine: &GammaEngine,
    images: &[Vec<f64>],
    xis: &[Vec<f64>],
    y_norm: &(impl Fn(&[f64]) -> f64 + Sync),
    stream: u64,
) -> (f64, f64) {
    let k = xis.len();
    let len = xis[0].len();
    let sampler = GaussianSampler::new(engine.seed, mix(0xA7, stream));
    let m = engine.samples.max(2);
    let chunks = m.div_ceil(CHUNK);
    let parts = crate::par::map_range(chunks, |ci| {
        let count = CHUNK.min(m - ci * CHUNK);
        let mut rng = sampler.chunk_rng(ci as u64);
        let mut g = vec![0.0; k];
        let (mut a, mut b) = (vec![0.0; len], vec![0.0; len]);
        (0..count)
            .map(|_| {
                fill_normals(&mut rng, &mut g);
                a.fill(0.0);
                b.fill(0.0);
                for j in 0..k {
                    for i in 0..len {
                        a[i] += g[j] * images[j][i];
                        b[i] += g[j] * xis[j][i];
                    }
                }
                (y_norm(&a).powi(2), y_norm(&b).powi(2))
            })
            .collect::<Vec<_>>()
    });
    let pairs: Vec<(f64, f64)> = parts.concat();
    let mf = pairs.len() as f64;
    let (sa, sb) = pairs.iter().fold((0.0, 0.0), |(x, y), (a, b)| (x + a, y + b));
    if sb == 0.0 {
        return (0.0, 0.0);
    }
    let thetas: Vec<f64> = pairs.iter().map(|(a, b)| (sa - a) / (sb - b)).collect();
    let mean = thetas.iter().sum::<f64>() / mf;
    let se = ((mf - 1.0) / mf * thetas.iter().map(|t| (t - mean).powi(2)).sum::<f64>()).sqrt();
    (sa / sb, se)
}

/// A `p`-norm space tag for convenience in tests and the CLI.
pub fn pnorm_space(d: usize, p: f64) -> Result<NormedSpace> {
    NormedSpace::new(d, NormTag::Pnorm(p))
}
