//! Flow-matching diffusion algebra, output-input cross-correlation,
//! expected mode strengths and a linear velocity predictor trained by SGD.
//!
//! Channel vectors are rows: `u_t = (1−t)·u0 + t·ε`, `v = ε − u0`, and the
//! predictor is `v̂ = u_t·W`.

use rand::Rng as _;
use rayon::prelude::*;

use crate::eigen::{channel_autocorr, eigh, EigenSpectrum, SymMatrix};
use crate::error::{invalid, Error, Result};
use crate::rng::{self, streams};
use crate::scalar::{pairwise_sum, Scalar};
use crate::tensor::{LatentBatch, LatentTensor};

/// Mode strengths below this magnitude are scored by absolute error.
pub const STRENGTH_FLOOR: f64 = 1e-6;
pub const DEFAULT_NODES: usize = 64;
/// Half-width of the truncated logit axis, in standard deviations.
const LOGIT_SPAN: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimestepDist {
    LogitNormal { mean: f64, std: f64 },
    Uniform,
    Fixed { t0: f64 },
}

impl Default for TimestepDist {
    fn default() -> Self {
        TimestepDist::LogitNormal { mean: 0.0, std: 1.0 }
    }
}

/// `E[t]` and `E[t²]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeMoments {
    pub mean: f64,
    pub second: f64,
}

impl TimeMoments {
    /// `E[(1−t)²]`
    pub fn complement_second(&self) -> f64 {
        1.0 - 2.0 * self.mean + self.second
    }
}

fn sigmoid(x: f64) -> f64 {
    let t = 0.5 + 0.5 * (0.5 * x).tanh();
    t.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl TimestepDist {
    pub fn logit_normal(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !(std > 0.0 && std.is_finite()) {
            return invalid(format!("logit-normal needs finite mean and std > 0, got ({mean}, {std})"));
        }
        Ok(TimestepDist::LogitNormal { mean, std })
    }

    pub fn fixed(t0: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t0) {
            return invalid(format!("fixed timestep {t0} outside [0, 1]"));
        }
        Ok(TimestepDist::Fixed { t0 })
    }

    pub fn sample(&self, rng: &mut rng::Rng) -> f64 {
        match *self {
            TimestepDist::LogitNormal { mean, std } => sigmoid(mean + std * rng::standard_normal(rng)),
            TimestepDist::Uniform => loop {
                let t: f64 = rng.random();
                if t > 0.0 {
                    break t;
                }
            },
            TimestepDist::Fixed { t0 } => t0,
        }
    }

    /// Exact for uniform and fixed laws; Gauss–Legendre quadrature on the
    /// logit axis otherwise.
    pub fn moments(&self, nodes: usize) -> Result<TimeMoments> {
        match *self {
            TimestepDist::LogitNormal { mean, std } => {
                let mean_t = 0.5 + 0.5 * logit_normal_expect(mean, std, nodes, |x| (0.5 * x).tanh())?;
                let second = logit_normal_expect(mean, std, nodes, |x| sigmoid(x).powi(2))?;
                Ok(TimeMoments { mean: mean_t, second })
            }
            TimestepDist::Uniform => Ok(TimeMoments {
                mean: 0.5,
                second: 1.0 / 3.0,
            }),
            TimestepDist::Fixed { t0 } => Ok(TimeMoments { mean: t0, second: t0 * t0 }),
        }
    }
}

/// Nodes (ascending) and weights of the `n`-point Gauss–Legendre rule on
/// `[−1, 1]`. Nodes are exactly mirrored about zero.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return invalid("quadrature needs at least one node");
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if 2 * i + 1 == n {
            x = 0.0;
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 2..n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pm = if n == 1 { 1.0 } else { p1 };
            dp = -nf * pm;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Ok((nodes, weights))
}

/// `E[f(x)]` for `x ~ N(mean, std²)`, truncated at `±10σ` and renormalized.
/// Mirrored nodes are summed in pairs, so an odd `f` with `mean = 0`
/// integrates to exactly zero.
pub fn logit_normal_expect(mean: f64, std: f64, nodes: usize, f: impl Fn(f64) -> f64) -> Result<f64> {
    let (x, w) = gauss_legendre(nodes)?;
    let n = x.len();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n.div_ceil(2) {
        let j = n - 1 - i;
        let z = LOGIT_SPAN * x[j];
        let phi = w[j] * (-0.5 * z * z).exp();
        if i == j {
            num += phi * f(mean);
            den += phi;
        } else {
            num += phi * (f(mean + std * z) + f(mean - std * z));
            den += 2.0 * phi;
        }
    }
    Ok(num / den)
}

/// Timesteps `sigmoid(mean + std·z)`, all strictly inside `(0, 1)`.
pub fn sample_logit_normal(mean: f64, std: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let dist = TimestepDist::logit_normal(mean, std)?;
    if n == 0 {
        return invalid("need at least one timestep");
    }
    let mut r = rng::stream(seed, streams::TIMESTEPS);
    Ok((0..n).map(|_| dist.sample(&mut r)).collect())
}

fn check_t<S: Scalar>(t: S) -> Result<()> {
    if !(t >= S::zero() && t <= S::one()) {
        return invalid(format!("timestep {t} outside [0, 1]"));
    }
    Ok(())
}

/// Returns `(u_t, v)` for one channel vector.
pub fn diffuse_vector<S: Scalar>(u0: &[S], noise: &[S], t: S) -> Result<(Vec<S>, Vec<S>)> {
    check_t(t)?;
    if u0.len() != noise.len() {
        return Err(Error::Shape(format!("signal has {} entries, noise {}", u0.len(), noise.len())));
    }
    let ut = u0.iter().zip(noise).map(|(&x, &e)| (S::one() - t) * x + t * e).collect();
    let v = u0.iter().zip(noise).map(|(&x, &e)| e - x).collect();
    Ok((ut, v))
}

/// Returns `(u_t, v)` for a whole batch.
pub fn diffuse<S: Scalar>(u0: &LatentBatch<S>, t: S, noise: &LatentBatch<S>) -> Result<(LatentBatch<S>, LatentBatch<S>)> {
    if u0.dims() != noise.dims() || u0.len() != noise.len() {
        return Err(Error::Shape(format!(
            "signal {}×{} vs noise {}×{}",
            u0.len(),
            u0.dims(),
            noise.len(),
            noise.dims()
        )));
    }
    let mut ut = Vec::with_capacity(u0.len());
    let mut v = Vec::with_capacity(u0.len());
    for (x, e) in u0.items().iter().zip(noise.items()) {
        let (a, b) = diffuse_vector(x.data(), e.data(), t)?;
        ut.push(LatentTensor::from_vec(x.dims(), a)?);
        v.push(LatentTensor::from_vec(x.dims(), b)?);
    }
    Ok((LatentBatch::new(ut)?, LatentBatch::new(v)?))
}

/// `t·I − (1−t)·Σ_uu`
pub fn cross_corr_analytic<S: Scalar>(sigma: &SymMatrix<S>, t: S) -> Result<SymMatrix<S>> {
    check_t(t)?;
    Ok(sigma.affine(t, t - S::one()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossCorrEstimate<S> {
    pub matrix: SymMatrix<S>,
    /// Row-major `C×C` Monte-Carlo standard errors, conditional on the
    /// batch (only the noise draws are treated as random).
    pub std_error: Vec<S>,
    pub samples: usize,
}

impl<S: Scalar> CrossCorrEstimate<S> {
    /// Largest `|estimate − reference| / SE` over the upper triangle.
    /// Entries with zero standard error count as exact matches when the
    /// difference is below `1e−12`.
    pub fn max_z(&self, reference: &SymMatrix<S>) -> f64 {
        let c = self.matrix.order();
        let mut worst: f64 = 0.0;
        for i in 0..c {
            for j in i..c {
                let d = (self.matrix.get(i, j) - reference.get(i, j)).to_f64_lossy().abs();
                let se = self.std_error[i * c + j].to_f64_lossy();
                let z = if se > 0.0 {
                    d / se
                } else if d < 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst = worst.max(z);
            }
        }
        worst
    }

    /// Every upper-triangle z-score against `reference`.
    pub fn z_scores(&self, reference: &SymMatrix<S>) -> Vec<f64> {
        let c = self.matrix.order();
        let mut out = Vec::with_capacity(c * (c + 1) / 2);
        for i in 0..c {
            for j in i..c {
                let d = (self.matrix.get(i, j) - reference.get(i, j)).to_f64_lossy().abs();
                let se = self.std_error[i * c + j].to_f64_lossy();
                out.push(if se > 0.0 { d / se } else if d < 1e-12 { 0.0 } else { f64::INFINITY });
            }
        }
        out
    }
}

/// Monte-Carlo estimate of `E[vᵀ u_t]` over every position and `n_noise`
/// independent noise draws, symmetrized.
///
/// Draw `d` of item `i` uses noise stream `d·B + i`.
pub fn cross_corr_empirical<S: Scalar>(batch: &LatentBatch<S>, t: S, n_noise: usize, seed: u64) -> Result<CrossCorrEstimate<S>> {
    check_t(t)?;
    if n_noise == 0 {
        return invalid("need at least one noise draw");
    }
    let c = batch.dims().c;
    let tri = c * (c + 1) / 2;
    let tf = t.to_f64_lossy();
    let b = batch.len();

    // Per chunk: Σx, Σr, Σr² where r = x + (1−t)·u0ᵢu0ⱼ removes the part
    // that is fixed by the batch.
    let chunks: Vec<Vec<[f64; 3]>> = (0..n_noise * b)
        .into_par_iter()
        .map(|chunk| {
            let item = &batch.items()[chunk % b];
            let mut r = rng::stream(seed, streams::NOISE + chunk as u64);
            let mut acc = vec![[0.0f64; 3]; tri];
            let mut eps = vec![0.0; c];
            let mut ut = vec![0.0; c];
            let mut v = vec![0.0; c];
            for u in item.data().chunks_exact(c) {
                rng::fill_normal(&mut r, &mut eps);
                for k in 0..c {
                    let x = u[k].to_f64_lossy();
                    ut[k] = (1.0 - tf) * x + tf * eps[k];
                    v[k] = eps[k] - x;
                }
                let mut k = 0;
                for i in 0..c {
                    for j in i..c {
                        let x = 0.5 * (v[i] * ut[j] + v[j] * ut[i]);
                        let rr = x + (1.0 - tf) * u[i].to_f64_lossy() * u[j].to_f64_lossy();
                        acc[k][0] += x;
                        acc[k][1] += rr;
                        acc[k][2] += rr * rr;
                        k += 1;
                    }
                }
            }
            acc
        })
        .collect();

    let n = (batch.samples() * n_noise) as f64;
    let mut matrix = vec![S::zero(); c * c];
    let mut se = vec![S::zero(); c * c];
    let mut column = Vec::with_capacity(chunks.len());
    let mut k = 0;
    for i in 0..c {
        for j in i..c {
            let mut sums = [0.0; 3];
            for (q, s) in sums.iter_mut().enumerate() {
                column.clear();
                column.extend(chunks.iter().map(|a| a[k][q]));
                *s = pairwise_sum(&column);
            }
            let mean = sums[0] / n;
            let var = if n > 1.0 {
                ((sums[2] - sums[1] * sums[1] / n) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            let e = (var / n).sqrt();
            matrix[i * c + j] = S::lit(mean);
            matrix[j * c + i] = S::lit(mean);
            se[i * c + j] = S::lit(e);
            se[j * c + i] = S::lit(e);
            k += 1;
        }
    }
    Ok(CrossCorrEstimate {
        matrix: SymMatrix::new(c, matrix)?,
        std_error: se,
        samples: n as usize,
    })
}

/// For each eigenvector of `a`, the angle in degrees to its best-aligned
/// eigenvector of `b`.
pub fn eigenbasis_angles<S: Scalar>(a: &EigenSpectrum<S>, b: &EigenSpectrum<S>) -> Vec<f64> {
    let c = a.order();
    (0..c)
        .map(|l| {
            let va = a.vector(l);
            let best = (0..c)
                .map(|m| {
                    let vb = b.vector(m);
                    va.iter().zip(&vb).map(|(&x, &y)| (x * y).to_f64_lossy()).sum::<f64>().abs()
                })
                .fold(0.0f64, f64::max);
            best.min(1.0).acos().to_degrees()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrengthMethod {
    MonteCarlo { n: usize, seed: u64 },
    Quadrature { nodes: usize },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ModeStrengthCurve {
    pub lambdas: Vec<f64>,
    pub s_bar: Vec<f64>,
    pub abs_s_bar: Vec<f64>,
    /// Estimated `E[t]`.
    pub mean_t: f64,
    /// Per-mode standard errors; present for Monte Carlo only.
    pub std_error: Option<Vec<f64>>,
}

impl ModeStrengthCurve {
    /// `λ* = E[t] / (1 − E[t])`, where the expected strength crosses zero.
    pub fn zero_crossing(&self) -> f64 {
        self.mean_t / (1.0 - self.mean_t)
    }
}

/// `s̄_l = E_t[t − (1−t)·λ_l] = E[t]·(1+λ_l) − λ_l`.
pub fn expected_mode_strength(lambdas: &[f64], dist: &TimestepDist, method: StrengthMethod) -> Result<ModeStrengthCurve> {
    if let Some(&bad) = lambdas.iter().find(|&&l| !(l >= 0.0 && l.is_finite())) {
        return invalid(format!("eigenvalue {bad} is not a finite non-negative number"));
    }
    let (mean_t, sd_mean) = match method {
        StrengthMethod::MonteCarlo { n, seed } => {
            if n < 100 {
                return invalid(format!("Monte Carlo needs at least 100 draws, got {n}"));
            }
            let mut r = rng::stream(seed, streams::TIMESTEPS);
            let ts: Vec<f64> = (0..n).map(|_| dist.sample(&mut r)).collect();
            let m = pairwise_sum(&ts) / n as f64;
            let dev: Vec<f64> = ts.iter().map(|t| (t - m) * (t - m)).collect();
            let var = pairwise_sum(&dev) / (n - 1) as f64;
            (m, Some((var / n as f64).sqrt()))
        }
        StrengthMethod::Quadrature { nodes } => (dist.moments(nodes)?.mean, None),
    };
    let s_bar: Vec<f64> = lambdas.iter().map(|&l| mean_t * (1.0 + l) - l).collect();
    Ok(ModeStrengthCurve {
        lambdas: lambdas.to_vec(),
        abs_s_bar: s_bar.iter().map(|s| s.abs()).collect(),
        s_bar,
        mean_t,
        std_error: sd_mean.map(|sd| lambdas.iter().map(|&l| (1.0 + l) * sd).collect()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Steps 0, 1, 2, 5, 10, 20, 50, …
    Decades,
    Every(usize),
}

/// Snapshot steps, always including 0 and `steps`.
pub fn snapshot_steps(schedule: Schedule, steps: usize) -> Vec<usize> {
    let mut out = vec![0];
    match schedule {
        Schedule::Decades => {
            let mut base = 1usize;
            'outer: loop {
                for m in [1, 2, 5] {
                    let s = base.saturating_mul(m);
                    if s > steps {
                        break 'outer;
                    }
                    out.push(s);
                }
                base = base.saturating_mul(10);
            }
        }
        Schedule::Every(n) => out.extend((1..=steps).filter(|s| s % n.max(1) == 0)),
    }
    if *out.last().unwrap() != steps {
        out.push(steps);
    }
    out
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DenoiserConfig {
    pub dist: TimestepDist,
    pub steps: usize,
    pub step_size: f64,
    /// Fresh `(position, t, ε)` draws per step.
    pub batch_draws: usize,
    /// 1: `W` trained directly from zero. 2: `W = W1·W2` from a small
    /// random start.
    pub depth: usize,
    pub init_scale: f64,
    pub schedule: Schedule,
    pub seed: u64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            dist: TimestepDist::default(),
            steps: 3000,
            step_size: 0.1,
            batch_draws: 256,
            depth: 2,
            init_scale: 1e-3,
            schedule: Schedule::Decades,
            seed: 0,
        }
    }
}

/// Effective linear map at one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserState<S> {
    pub step: usize,
    /// Row-major `C×C`.
    pub w: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserTrajectory<S> {
    pub channels: usize,
    pub snapshots: Vec<DenoiserState<S>>,
}

impl<S: Scalar> DenoiserTrajectory<S> {
    pub fn last(&self) -> &DenoiserState<S> {
        self.snapshots.last().expect("trajectory always has a snapshot")
    }
}

/// `A·B` for `A: n×k`, `B: k×m`, row-major.
fn mm<S: Scalar>(a: &[S], b: &[S], n: usize, k: usize, m: usize) -> Vec<S> {
    let mut out = vec![S::zero(); n * m];
    for i in 0..n {
        for p in 0..k {
            let x = a[i * k + p];
            for j in 0..m {
                out[i * m + j] += x * b[p * m + j];
            }
        }
    }
    out
}

/// `Aᵀ·B` for `A: n×k`, `B: n×m`.
fn mtm<S: Scalar>(a: &[S], b: &[S], n: usize, k: usize, m: usize) -> Vec<S> {
    let mut out = vec![S::zero(); k * m];
    for r in 0..n {
        for i in 0..k {
            let x = a[r * k + i];
            for j in 0..m {
                out[i * m + j] += x * b[r * m + j];
            }
        }
    }
    out
}

/// `A·Bᵀ` for `A: n×k`, `B: m×k`.
fn mmt<S: Scalar>(a: &[S], b: &[S], n: usize, k: usize, m: usize) -> Vec<S> {
    let mut out = vec![S::zero(); n * m];
    for i in 0..n {
        for j in 0..m {
            out[i * m + j] = (0..k).fold(S::zero(), |acc, p| acc + a[i * k + p] * b[j * k + p]);
        }
    }
    out
}

/// `E[u_tᵀu_t] = E[(1−t)²]·Σ + E[t²]·I`.
pub fn input_second_moment<S: Scalar>(sigma: &SymMatrix<S>, moments: TimeMoments) -> SymMatrix<S> {
    sigma.affine(S::lit(moments.second), S::lit(moments.complement_second()))
}

/// SGD on `E‖u_t·W − v‖²` with fresh draws every step.
pub fn train_linear_denoiser<S: Scalar>(batch: &LatentBatch<S>, cfg: &DenoiserConfig) -> Result<DenoiserTrajectory<S>> {
    let c = batch.dims().c;
    if cfg.depth != 1 && cfg.depth != 2 {
        return invalid(format!("depth must be 1 or 2, got {}", cfg.depth));
    }
    if cfg.batch_draws == 0 {
        return invalid("need at least one draw per step");
    }
    if !(cfg.step_size > 0.0 && cfg.step_size.is_finite()) {
        return invalid("step size must be positive");
    }
    let moments = cfg.dist.moments(DEFAULT_NODES)?;
    let a = input_second_moment(&channel_autocorr(batch), moments);
    let top = eigh(&a)?.values[0].to_f64_lossy();
    if cfg.step_size * top >= 1.0 {
        return invalid(format!(
            "step size {} too large: must stay below 1/λmax(E[uᵀu]) = {:.4}",
            cfg.step_size,
            1.0 / top
        ));
    }

    let flat: Vec<S> = batch.vectors().flat_map(|v| v.iter().copied()).collect();
    let samples = batch.samples();
    let n = cfg.batch_draws;
    let eta = S::lit(cfg.step_size);
    let scale = S::lit(2.0 / n as f64);

    let (mut w1, mut w2) = if cfg.depth == 1 {
        (vec![S::zero(); c * c], Vec::new())
    } else {
        let mut r = rng::stream(cfg.seed, streams::INIT);
        let mut raw = vec![0.0; 2 * c * c];
        rng::fill_normal(&mut r, &mut raw);
        let m: Vec<S> = raw.iter().map(|&x| S::lit(cfg.init_scale * x)).collect();
        (m[..c * c].to_vec(), m[c * c..].to_vec())
    };
    let product = |w1: &[S], w2: &[S]| if cfg.depth == 1 { w1.to_vec() } else { mm(w1, w2, c, c, c) };

    let wanted = snapshot_steps(cfg.schedule, cfg.steps);
    let mut next = 0;
    let mut snapshots = Vec::with_capacity(wanted.len());
    let mut r = rng::stream(cfg.seed, streams::TRAIN);
    let mut ut = vec![S::zero(); n * c];
    let mut v = vec![S::zero(); n * c];
    let mut eps = vec![0.0; c];
    for step in 0..=cfg.steps {
        let w = product(&w1, &w2);
        if w.iter().any(|x| !x.is_finite() || x.abs() > S::lit(1e6)) {
            return Err(Error::Divergence { step });
        }
        if wanted.get(next) == Some(&step) {
            snapshots.push(DenoiserState { step, w: w.clone() });
            next += 1;
        }
        if step == cfg.steps {
            break;
        }
        for row in 0..n {
            let p = r.random_range(0..samples);
            let t = S::lit(cfg.dist.sample(&mut r));
            rng::fill_normal(&mut r, &mut eps);
            for k in 0..c {
                let x = flat[p * c + k];
                let e = S::lit(eps[k]);
                ut[row * c + k] = (S::one() - t) * x + t * e;
                v[row * c + k] = e - x;
            }
        }
        let mut resid = mm(&ut, &w, n, c, c);
        resid.iter_mut().zip(&v).for_each(|(a, &b)| *a = (*a - b) * scale);
        let g = mtm(&ut, &resid, n, c, c);
        if cfg.depth == 1 {
            w1.iter_mut().zip(&g).for_each(|(a, &b)| *a -= eta * b);
        } else {
            let g1 = mmt(&g, &w2, c, c, c);
            let g2 = mtm(&w1, &g, c, c, c);
            w1.iter_mut().zip(&g1).for_each(|(a, &b)| *a -= eta * b);
            w2.iter_mut().zip(&g2).for_each(|(a, &b)| *a -= eta * b);
        }
    }
    Ok(DenoiserTrajectory { channels: c, snapshots })
}

/// Least-squares optimum `(E[u_tᵀu_t])⁻¹·E[u_tᵀv]` from the batch
/// statistics in closed form: `V·diag(s̄_l / h_l)·Vᵀ` with
/// `h_l = E[(1−t)²]·λ_l + E[t²]`.
pub fn denoiser_optimum<S: Scalar>(sigma: &SymMatrix<S>, dist: &TimestepDist) -> Result<Vec<S>> {
    let m = dist.moments(DEFAULT_NODES)?;
    let e = eigh(sigma)?;
    let a = m.complement_second();
    let gains: Vec<S> = e
        .values
        .iter()
        .map(|&l| {
            let l = l.to_f64_lossy();
            S::lit((m.mean - (1.0 - m.mean) * l) / (a * l + m.second))
        })
        .collect();
    Ok(spectral_map(&e, &gains))
}

fn spectral_map<S: Scalar>(e: &EigenSpectrum<S>, gains: &[S]) -> Vec<S> {
    let c = e.order();
    let mut out = vec![S::zero(); c * c];
    for (l, &g) in gains.iter().enumerate() {
        for i in 0..c {
            let vi = e.vectors[i * c + l] * g;
            for j in 0..c {
                out[i * c + j] += vi * e.vectors[j * c + l];
            }
        }
    }
    out
}

/// The same optimum estimated from `n` sampled `(position, t, ε)` triples.
pub fn denoiser_optimum_mc<S: Scalar>(batch: &LatentBatch<S>, dist: &TimestepDist, n: usize, seed: u64) -> Result<Vec<S>> {
    if n == 0 {
        return invalid("need at least one draw");
    }
    let c = batch.dims().c;
    let flat: Vec<f64> = batch.vectors().flat_map(|v| v.iter().map(|x| x.to_f64_lossy())).collect();
    let samples = batch.samples();
    let mut r = rng::stream(seed, streams::TRAIN);
    let mut uu = vec![0.0; c * c];
    let mut uv = vec![0.0; c * c];
    let mut eps = vec![0.0; c];
    let mut ut = vec![0.0; c];
    let mut v = vec![0.0; c];
    for _ in 0..n {
        let p = r.random_range(0..samples);
        let t = dist.sample(&mut r);
        rng::fill_normal(&mut r, &mut eps);
        for k in 0..c {
            let x = flat[p * c + k];
            ut[k] = (1.0 - t) * x + t * eps[k];
            v[k] = eps[k] - x;
        }
        for i in 0..c {
            for j in 0..c {
                uu[i * c + j] += ut[i] * ut[j];
                uv[i * c + j] += ut[i] * v[j];
            }
        }
    }
    let a = eigh(&SymMatrix::symmetrized(c, &uu)?)?;
    if a.values[c - 1] <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let inv_gains: Vec<f64> = a.values.iter().map(|&l| 1.0 / l).collect();
    let inv = spectral_map(&a, &inv_gains);
    Ok(mm(&inv, &uv, c, c, c).into_iter().map(S::lit).collect())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ModeErrorCurve {
    pub steps: Vec<usize>,
    /// `[snapshot][mode]`: `v_lᵀ·Σ_v̂u·v_l`.
    pub learned: Vec<Vec<f64>>,
    /// `[snapshot][mode]`
    pub error: Vec<Vec<f64>>,
    /// False for modes scored by absolute error.
    pub relative: Vec<bool>,
    pub s_bar: Vec<f64>,
}

impl ModeErrorCurve {
    pub fn modes(&self) -> usize {
        self.s_bar.len()
    }

    /// First snapshot step where the mode's error is at most `threshold`.
    pub fn steps_to(&self, mode: usize, threshold: f64) -> Option<usize> {
        self.error.iter().position(|row| row[mode] <= threshold).map(|k| self.steps[k])
    }

    pub fn mean_error(&self) -> Vec<f64> {
        self.error.iter().map(|row| row.iter().sum::<f64>() / row.len() as f64).collect()
    }

    /// First snapshot step where the mean error is at most `threshold`.
    pub fn mean_steps_to(&self, threshold: f64) -> Option<usize> {
        self.mean_error().iter().position(|&e| e <= threshold).map(|k| self.steps[k])
    }
}

/// Learned strength per mode: `Σ_v̂u = Wᵀ·E[u_tᵀu_t]`, projected on each
/// eigenvector of the input autocorrelation.
pub fn mode_error_curve<S: Scalar>(
    trajectory: &DenoiserTrajectory<S>,
    sigma: &SymMatrix<S>,
    spectrum: &EigenSpectrum<S>,
    s_bar: &[f64],
    dist: &TimestepDist,
) -> Result<ModeErrorCurve> {
    let c = trajectory.channels;
    if sigma.order() != c || spectrum.order() != c || s_bar.len() != c {
        return Err(Error::Shape(format!(
            "denoiser has {c} channels, statistics have {}/{}/{}",
            sigma.order(),
            spectrum.order(),
            s_bar.len()
        )));
    }
    let a = input_second_moment(sigma, dist.moments(DEFAULT_NODES)?);
    let relative: Vec<bool> = s_bar.iter().map(|s| s.abs() >= STRENGTH_FLOOR).collect();
    let mut steps = Vec::new();
    let mut learned = Vec::new();
    let mut error = Vec::new();
    for snap in &trajectory.snapshots {
        // Σ_v̂u = Wᵀ·A
        let wt: Vec<S> = (0..c * c).map(|k| snap.w[(k % c) * c + k / c]).collect();
        let cross = mm(&wt, a.data(), c, c, c);
        let row: Vec<f64> = (0..c)
            .map(|l| {
                let v = spectrum.vector(l);
                let cv = mm(&cross, &v, c, c, 1);
                v.iter().zip(&cv).map(|(&x, &y)| (x * y).to_f64_lossy()).sum()
            })
            .collect();
        let err = row
            .iter()
            .zip(s_bar)
            .zip(&relative)
            .map(|((&m, &s), &rel)| if rel { (m - s).abs() / s.abs() } else { (m - s).abs() })
            .collect();
        steps.push(snap.step);
        learned.push(row);
        error.push(err);
    }
    Ok(ModeErrorCurve {
        steps,
        learned,
        error,
        relative,
        s_bar: s_bar.to_vec(),
    })
}

/// Average ranks, 1-based; ties share the mean of their positions.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return invalid("spearman needs two equal-length samples of size >= 2");
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConvergenceStudy {
    pub lambdas: Vec<f64>,
    pub curve: ModeErrorCurve,
    /// Steps to reach half the initial error; modes that never get there
    /// count as `steps + 1`.
    pub steps_to_half: Vec<usize>,
    pub spearman: Option<f64>,
    pub mean_steps_to_half: Option<usize>,
}

/// Trains on `batch` and scores every mode against its expected strength.
pub fn convergence_study<S: Scalar>(batch: &LatentBatch<S>, cfg: &DenoiserConfig) -> Result<ConvergenceStudy> {
    let sigma = channel_autocorr(batch);
    let spectrum = eigh(&sigma)?;
    let lambdas: Vec<f64> = spectrum.values.iter().map(|l| l.to_f64_lossy().max(0.0)).collect();
    let strengths = expected_mode_strength(&lambdas, &cfg.dist, StrengthMethod::Quadrature { nodes: DEFAULT_NODES })?;
    let traj = train_linear_denoiser(batch, cfg)?;
    let curve = mode_error_curve(&traj, &sigma, &spectrum, &strengths.s_bar, &cfg.dist)?;
    let steps_to_half: Vec<usize> = (0..curve.modes())
        .map(|l| curve.steps_to(l, 0.5).unwrap_or(cfg.steps + 1))
        .collect();
    let as_f64: Vec<f64> = steps_to_half.iter().map(|&s| s as f64).collect();
    let spearman = spearman(&strengths.abs_s_bar, &as_f64).ok();
    Ok(ConvergenceStudy {
        mean_steps_to_half: curve.mean_steps_to(0.5),
        lambdas,
        curve,
        steps_to_half,
        spearman,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_spectrum_field, gen_white, Mixing, SpectrumSpec};
    use crate::tensor::{standardize, Dims};

    fn dims(t: usize, h: usize, w: usize, c: usize) -> Dims {
        Dims::new(t, h, w, c).unwrap()
    }

    #[test]
    fn diffusion_endpoints() {
        let u = [0.3, -1.2, 2.0];
        let e = [1.0, 0.5, -0.25];
        let (u0, v) = diffuse_vector(&u, &e, 0.0).unwrap();
        assert_eq!(u0, u);
        assert_eq!(v, vec![0.7, 1.7, -2.25]);
        let (u1, _) = diffuse_vector(&u, &e, 1.0).unwrap();
        assert_eq!(u1, e);
        assert!(diffuse_vector(&u, &e[..2], 0.5).is_err());
        assert!(diffuse_vector(&u, &e, 1.5).is_err());

        let b = gen_white::<f64>(dims(1, 2, 2, 3), 2, 0).unwrap();
        let n = gen_white::<f64>(dims(1, 2, 2, 3), 2, 1).unwrap();
        let (ut, _) = diffuse(&b, 0.37, &n).unwrap();
        for ((x, e), y) in b.items().iter().zip(n.items()).zip(ut.items()) {
            for k in 0..x.data().len() {
                assert_eq!(y.data()[k], (1.0 - 0.37) * x.data()[k] + 0.37 * e.data()[k]);
            }
        }
    }

    #[test]
    fn analytic_cross_correlation() {
        let s = SymMatrix::new(2, vec![1.5, 0.3, 0.3, 0.5]).unwrap();
        let z = cross_corr_analytic(&s, 0.0).unwrap();
        assert!(z.data().iter().zip(s.data()).all(|(a, b)| *a == -*b));
        assert_eq!(cross_corr_analytic(&s, 1.0).unwrap(), SymMatrix::identity(2));
        let one = SymMatrix::<f64>::identity(3);
        assert!(cross_corr_analytic(&one, 0.5).unwrap().max_abs() == 0.0);
        for t in [0.1, 0.4, 0.9] {
            assert!(s.commutator_max(&cross_corr_analytic(&s, t).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn empirical_matches_analytic() {
        let spec = SpectrumSpec::new(vec![2.2, 1.0, 0.5, 0.3], Mixing::Hadamard).unwrap();
        let (b, _) = standardize(&gen_spectrum_field::<f64>(dims(2, 16, 16, 4), 64, &spec, 3).unwrap()).unwrap();
        let sigma = channel_autocorr(&b);
        for &t in &[0.0, 0.3, 1.0] {
            let est = cross_corr_empirical(&b, t, 2, 9).unwrap();
            assert!(est.samples >= 50_000);
            let analytic = cross_corr_analytic(&sigma, t).unwrap();
            assert!(est.max_z(&analytic) < 4.5, "t={t}: {}", est.max_z(&analytic));
        }
        let a = eigh(&sigma).unwrap();
        let e = eigh(&cross_corr_empirical(&b, 0.1, 4, 2).unwrap().matrix).unwrap();
        let worst = eigenbasis_angles(&a, &e).into_iter().fold(0.0, f64::max);
        assert!(worst < 2.0, "{worst}");
    }

    #[test]
    fn empirical_is_deterministic() {
        let b = gen_white::<f32>(dims(1, 4, 4, 3), 3, 0).unwrap();
        let x = cross_corr_empirical(&b, 0.5f32, 3, 11).unwrap();
        let y = cross_corr_empirical(&b, 0.5f32, 3, 11).unwrap();
        assert_eq!(x, y);
    }

    fn legendre_oracle(n: usize, x: f64) -> f64 {
        // Explicit coefficients of P_4.
        assert_eq!(n, 4);
        (35.0 * x.powi(4) - 30.0 * x * x + 3.0) / 8.0
    }

    #[test]
    fn gauss_legendre_rule() {
        let (x, w) = gauss_legendre(4).unwrap();
        for &xi in &x {
            assert!(legendre_oracle(4, xi).abs() < 1e-14);
        }
        let (x, w64) = gauss_legendre(64).unwrap();
        assert!((w64.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        // Exact for polynomials of degree up to 127.
        let p: f64 = x.iter().zip(&w64).map(|(&x, &w)| w * x.powi(126)).sum();
        assert!((p - 2.0 / 127.0).abs() < 1e-13);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for i in 0..32 {
            assert_eq!(x[i], -x[63 - i]);
        }
        let (x, w) = gauss_legendre(5).unwrap();
        assert_eq!(x[2], 0.0);
        assert!((w[2] - 128.0 / 225.0).abs() < 1e-14);
        let (x1, w1) = gauss_legendre(1).unwrap();
        assert_eq!((x1[0], w1[0]), (0.0, 2.0));
    }

    #[test]
    fn logit_normal_moments() {
        let m = TimestepDist::default().moments(DEFAULT_NODES).unwrap();
        assert_eq!(m.mean, 0.5);
        // E[sigmoid(z)²] for z ~ N(0, 1) by adaptive Simpson in f64.
        let simpson = {
            let f = |z: f64| (1.0 / (1.0 + (-z).exp())).powi(2) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let n = 20_000;
            let (a, b) = (-12.0, 12.0);
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        assert!((m.second - simpson).abs() < 1e-10, "{} vs {simpson}", m.second);
        let shifted = TimestepDist::logit_normal(0.7, 0.5).unwrap().moments(DEFAULT_NODES).unwrap();
        let mc = {
            let ts = sample_logit_normal(0.7, 0.5, 200_000, 1).unwrap();
            ts.iter().sum::<f64>() / ts.len() as f64
        };
        assert!((shifted.mean - mc).abs() < 0.002);
    }

    #[test]
    fn logit_normal_sampling() {
        let ts = sample_logit_normal(0.0, 1.0, 50_000, 4).unwrap();
        assert!(ts.iter().all(|&t| t > 0.0 && t < 1.0));
        let n = ts.len() as f64;
        let m = ts.iter().sum::<f64>() / n;
        let sd = (ts.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((m - 0.5).abs() < 3.0 * sd / n.sqrt());
        assert!(sample_logit_normal(10.0, 1.0, 10_000, 4).unwrap().iter().all(|&t| t > 0.99 && t < 1.0));
        assert!(sample_logit_normal(60.0, 1.0, 10, 4).unwrap().iter().all(|&t| t < 1.0));
        assert_eq!(sample_logit_normal(0.0, 1.0, 10, 4).unwrap(), ts[..10].to_vec());
        assert!(sample_logit_normal(0.0, 0.0, 10, 4).is_err());
    }

    #[test]
    fn strength_law() {
        let grid: Vec<f64> = (0..=12).map(|k| 0.25 * k as f64).collect();
        let dist = TimestepDist::default();
        let q = expected_mode_strength(&grid, &dist, StrengthMethod::Quadrature { nodes: 64 }).unwrap();
        assert_eq!(q.s_bar[0], 0.5);
        assert_eq!(q.s_bar[4], 0.0);
        assert_eq!(q.zero_crossing(), 1.0);
        for k in 0..grid.len() - 1 {
            if k < 4 {
                assert!(q.abs_s_bar[k + 1] < q.abs_s_bar[k] - 1e-9);
            } else {
                assert!(q.abs_s_bar[k + 1] > q.abs_s_bar[k] + 1e-9);
            }
        }
        let mc = expected_mode_strength(&grid, &dist, StrengthMethod::MonteCarlo { n: 100_000, seed: 2 }).unwrap();
        let se = mc.std_error.as_ref().unwrap();
        for k in 0..grid.len() {
            assert!((mc.s_bar[k] - q.s_bar[k]).abs() < 3.0 * se[k]);
        }
        assert!(expected_mode_strength(&grid, &dist, StrengthMethod::MonteCarlo { n: 99, seed: 2 }).is_err());
        assert!(expected_mode_strength(&[-1.0], &dist, StrengthMethod::Quadrature { nodes: 8 }).is_err());
    }

    #[test]
    fn snapshot_schedules() {
        assert_eq!(snapshot_steps(Schedule::Decades, 120), vec![0, 1, 2, 5, 10, 20, 50, 100, 120]);
        assert_eq!(snapshot_steps(Schedule::Decades, 100), vec![0, 1, 2, 5, 10, 20, 50, 100]);
        assert_eq!(snapshot_steps(Schedule::Every(3), 7), vec![0, 3, 6, 7]);
        assert_eq!(snapshot_steps(Schedule::Decades, 0), vec![0]);
    }

    #[test]
    fn spearman_oracle() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        // Without ties: 1 − 6Σd²/(n(n²−1)).
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0, 1.0, 4.0, 3.0, 5.0];
        assert!((spearman(&x, &y).unwrap() - (1.0 - 6.0 * 4.0 / 120.0)).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    fn spectrum_batch(c: usize, seed: u64) -> LatentBatch<f64> {
        let spec = SpectrumSpec::normalized(vec![3.4, 1.2, 0.9, 0.6, 0.4, 0.3, 0.15, 0.05][..c].to_vec(), Mixing::Hadamard).unwrap();
        standardize(&gen_spectrum_field::<f64>(dims(2, 8, 8, c), 16, &spec, seed).unwrap()).unwrap().0
    }

    #[test]
    fn zero_init_error_is_one() {
        let b = spectrum_batch(4, 0);
        let cfg = DenoiserConfig {
            steps: 5,
            depth: 1,
            ..Default::default()
        };
        let study = convergence_study(&b, &cfg).unwrap();
        for (l, rel) in study.curve.relative.iter().enumerate() {
            assert!(*rel);
            assert_eq!(study.curve.error[0][l], 1.0);
            assert_eq!(study.curve.learned[0][l], 0.0);
        }
    }

    #[test]
    fn sgd_reaches_least_squares_optimum() {
        let b = spectrum_batch(4, 1);
        let dist = TimestepDist::default();
        let cfg = DenoiserConfig {
            steps: 4000,
            step_size: 0.02,
            batch_draws: 512,
            depth: 1,
            ..Default::default()
        };
        let traj = train_linear_denoiser(&b, &cfg).unwrap();
        let w = &traj.last().w;
        let exact = denoiser_optimum(&channel_autocorr(&b), &dist).unwrap();
        let mc = denoiser_optimum_mc(&b, &dist, 400_000, 5).unwrap();
        let rel = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (d / b.iter().map(|y| y * y).sum::<f64>()).sqrt()
        };
        assert!(rel(&mc, &exact) < 0.02, "{}", rel(&mc, &exact));
        assert!(rel(w, &mc) < 0.05, "{}", rel(w, &mc));
    }

    #[test]
    fn fixed_timestep_isotropic_solution() {
        let (b, _) = standardize(&gen_white::<f64>(dims(2, 16, 16, 3), 64, 2).unwrap()).unwrap();
        let t = 0.8;
        let dist = TimestepDist::fixed(t).unwrap();
        let cfg = DenoiserConfig {
            dist,
            steps: 3000,
            step_size: 0.01,
            batch_draws: 1024,
            depth: 1,
            ..Default::default()
        };
        let w = train_linear_denoiser(&b, &cfg).unwrap().last().w.clone();
        let g = (2.0 * t - 1.0) / ((1.0 - t) * (1.0 - t) + t * t);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { g } else { 0.0 };
                assert!((w[i * 3 + j] - want).abs() < 0.03, "{i},{j}: {}", w[i * 3 + j]);
            }
        }
    }

    #[test]
    fn equal_spectrum_modes_move_together() {
        let (b, _) = standardize(&gen_white::<f64>(dims(2, 16, 16, 4), 32, 6).unwrap()).unwrap();
        let cfg = DenoiserConfig {
            dist: TimestepDist::fixed(0.8).unwrap(),
            steps: 60,
            step_size: 0.02,
            batch_draws: 1024,
            depth: 1,
            schedule: Schedule::Every(1),
            ..Default::default()
        };
        let study = convergence_study(&b, &cfg).unwrap();
        let half: Vec<f64> = study.steps_to_half.iter().map(|&s| s as f64).collect();
        let mean = half.iter().sum::<f64>() / half.len() as f64;
        assert!(half.iter().all(|h| (h - mean).abs() <= 0.1 * mean), "{half:?}");
    }

    #[test]
    fn smoothed_errors_do_not_increase() {
        let b = spectrum_batch(4, 3);
        let cfg = DenoiserConfig {
            steps: 300,
            step_size: 0.05,
            batch_draws: 1024,
            depth: 1,
            schedule: Schedule::Every(1),
            ..Default::default()
        };
        let study = convergence_study(&b, &cfg).unwrap();
        let e = &study.curve.error;
        for l in 0..4 {
            let smooth: Vec<f64> = e.windows(5).map(|w| w.iter().map(|r| r[l]).sum::<f64>() / 5.0).collect();
            // Until it reaches the SGD noise floor.
            let active = smooth.iter().take_while(|&&s| s > 0.2).count();
            assert!(active > 5);
            assert!(smooth[..active].windows(2).all(|w| w[1] <= w[0] + 0.02), "mode {l}");
        }
    }

    #[test]
    fn factored_model_learns_strong_modes_first() {
        let b = spectrum_batch(4, 4);
        let cfg = DenoiserConfig {
            steps: 2000,
            schedule: Schedule::Every(10),
            ..Default::default()
        };
        let study = convergence_study(&b, &cfg).unwrap();
        assert!(study.spearman.unwrap() <= -0.7, "{:?}", study.steps_to_half);
        let w = &study.curve.error;
        assert!(w[0].iter().all(|&e| (e - 1.0).abs() < 0.01));
    }

    #[test]
    fn rejects_unstable_step_size() {
        let b = spectrum_batch(4, 0);
        let cfg = DenoiserConfig { step_size: 5.0, ..Default::default() };
        assert!(matches!(train_linear_denoiser(&b, &cfg), Err(Error::InvalidArgument(_))));
    }
}
