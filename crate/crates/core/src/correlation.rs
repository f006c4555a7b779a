//! Spatio-temporal autocorrelation, patch-local correlation and the local
//! correlation hinge regularizer with its analytic gradient.

use crate::error::{invalid, Error, Result};
use crate::scalar::{pairwise_sum, Scalar};
use crate::spectrum::{low_freq_energy_clamped, power_grid};
use crate::tensor::{standardize, Dims, LatentBatch, LatentTensor};

/// Norm floor used by cosine similarity.
pub const COSINE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    Dot,
    Cosine,
}

impl std::str::FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(Similarity::Dot),
            "cosine" => Ok(Similarity::Cosine),
            _ => invalid(format!("unknown similarity `{s}` (expected dot or cosine)")),
        }
    }
}

/// Patch partition of the `(T, H, W)` grid.
///
/// With `first_frame_spatial`, frame 0 is cut into `size×size` spatial
/// patches and frames `1..T` are grouped into blocks of `size` frames
/// starting at frame 1. Trailing positions that do not fill a whole patch
/// are left out.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PatchSpec {
    pub size: usize,
    pub first_frame_spatial: bool,
    pub similarity: Similarity,
}

impl Default for PatchSpec {
    fn default() -> Self {
        PatchSpec {
            size: 2,
            first_frame_spatial: true,
            similarity: Similarity::Cosine,
        }
    }
}

impl PatchSpec {
    pub fn with_similarity(similarity: Similarity) -> Self {
        PatchSpec {
            similarity,
            ..Default::default()
        }
    }

    /// Flat position indices of every patch.
    pub fn patches(&self, dims: Dims) -> Result<Vec<Vec<usize>>> {
        let s = self.size;
        if s < 2 {
            return invalid(format!("patch size must be >= 2, got {s}"));
        }
        let mut frame_groups: Vec<std::ops::Range<usize>> = Vec::new();
        let mut t0 = 0;
        if self.first_frame_spatial {
            frame_groups.push(0..1);
            t0 = 1;
        }
        while t0 + s <= dims.t {
            frame_groups.push(t0..t0 + s);
            t0 += s;
        }
        let mut out = Vec::new();
        for frames in &frame_groups {
            for h0 in (0..dims.h / s).map(|b| b * s) {
                for w0 in (0..dims.w / s).map(|b| b * s) {
                    let mut p = Vec::with_capacity(frames.len() * s * s);
                    for t in frames.clone() {
                        for h in h0..h0 + s {
                            for w in w0..w0 + s {
                                p.push(dims.pos_index(t, h, w));
                            }
                        }
                    }
                    out.push(p);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Shape(format!(
                "dims {dims} admit no patch of size {s}"
            )));
        }
        Ok(out)
    }
}

/// Normalized channel vector and the norm it was divided by.
fn unit<S: Scalar>(v: &[S], similarity: Similarity, out: &mut [S]) -> S {
    match similarity {
        Similarity::Dot => {
            out.copy_from_slice(v);
            S::one()
        }
        Similarity::Cosine => {
            let norm = v.iter().map(|&x| x * x).fold(S::zero(), |a, b| a + b).sqrt();
            let guarded = norm.max(S::lit(COSINE_EPSILON));
            for (o, &x) in out.iter_mut().zip(v) {
                *o = x / guarded;
            }
            norm
        }
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Mean pairwise similarity over all unordered pairs of distinct positions
/// in one patch, via `(‖Σu‖² − Σ‖u‖²) / 2`.
fn patch_correlation<S: Scalar>(x: &LatentTensor<S>, patch: &[usize], similarity: Similarity, u: &mut [S], sum: &mut [S]) -> S {
    sum.iter_mut().for_each(|s| *s = S::zero());
    let mut self_sq = S::zero();
    for &p in patch {
        unit(x.vector(p), similarity, u);
        self_sq += dot(u, u);
        for (s, &v) in sum.iter_mut().zip(u.iter()) {
            *s += v;
        }
    }
    let n = patch.len();
    let pairs = S::from_usize_lossy(n * (n - 1) / 2);
    (dot(sum, sum) - self_sq) / (S::lit(2.0) * pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalCorrelation<S> {
    /// `E_p[R̃(p)]` over every patch of every batch item.
    pub mean: S,
    /// `R̃(p)` per patch, item-major.
    pub per_patch: Vec<S>,
}

pub fn local_correlation<S: Scalar>(batch: &LatentBatch<S>, spec: &PatchSpec) -> Result<LocalCorrelation<S>> {
    let dims = batch.dims();
    let patches = spec.patches(dims)?;
    let mut u = vec![S::zero(); dims.c];
    let mut sum = vec![S::zero(); dims.c];
    let per_patch: Vec<S> = batch
        .items()
        .iter()
        .flat_map(|x| {
            patches
                .iter()
                .map(|p| patch_correlation(x, p, spec.similarity, &mut u, &mut sum))
                .collect::<Vec<_>>()
        })
        .collect();
    let mean = pairwise_sum(&per_patch) / S::from_usize_lossy(per_patch.len());
    Ok(LocalCorrelation { mean, per_patch })
}

/// `ReLU(α − E_p[R̃(p)])`, one hinge for the whole batch.
pub fn lcr_loss<S: Scalar>(batch: &LatentBatch<S>, alpha: S, spec: &PatchSpec) -> Result<S> {
    check_alpha(alpha)?;
    let lc = local_correlation(batch, spec)?;
    Ok((alpha - lc.mean).max(S::zero()))
}

fn check_alpha<S: Scalar>(alpha: S) -> Result<()> {
    if !(alpha > S::zero() && alpha <= S::one()) {
        return invalid(format!("alpha = {alpha} must lie in (0, 1]"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcrGradient<S> {
    pub loss: S,
    pub local_corr: S,
    /// `∂loss/∂x` per batch item; all zeros when the hinge is inactive.
    pub grad: Vec<LatentTensor<S>>,
}

/// Loss and exact gradient with respect to the (already standardized)
/// entries. Batch statistics are treated as constants.
pub fn lcr_grad<S: Scalar>(batch: &LatentBatch<S>, alpha: S, spec: &PatchSpec) -> Result<LcrGradient<S>> {
    check_alpha(alpha)?;
    let dims = batch.dims();
    let patches = spec.patches(dims)?;
    let lc = local_correlation(batch, spec)?;
    let loss = (alpha - lc.mean).max(S::zero());
    if loss <= S::zero() {
        return Ok(LcrGradient {
            loss,
            local_corr: lc.mean,
            grad: batch.items().iter().map(|x| LatentTensor::zeros(x.dims())).collect(),
        });
    }

    let c = dims.c;
    let total_patches = S::from_usize_lossy(patches.len() * batch.len());
    let eps = S::lit(COSINE_EPSILON);
    let mut units = Vec::new();
    let mut norms = Vec::new();
    let mut sum = vec![S::zero(); c];
    let grad = batch
        .items()
        .iter()
        .map(|x| {
            let mut g = vec![S::zero(); dims.len()];
            for patch in &patches {
                let n = patch.len();
                // d loss / d R̃(p) = −1 / total_patches; dR̃/dû_a = (Σû − û_a) / pairs.
                let coef = -S::one() / (total_patches * S::from_usize_lossy(n * (n - 1) / 2));
                units.resize(n * c, S::zero());
                norms.clear();
                sum.iter_mut().for_each(|s| *s = S::zero());
                for (a, &p) in patch.iter().enumerate() {
                    let ua = &mut units[a * c..(a + 1) * c];
                    norms.push(unit(x.vector(p), spec.similarity, ua));
                    for (s, &v) in sum.iter_mut().zip(ua.iter()) {
                        *s += v;
                    }
                }
                for (a, &p) in patch.iter().enumerate() {
                    let ua = &units[a * c..(a + 1) * c];
                    let ga = &mut g[p * c..(p + 1) * c];
                    match spec.similarity {
                        Similarity::Dot => {
                            for ((o, &s), &v) in ga.iter_mut().zip(&sum).zip(ua) {
                                *o += coef * (s - v);
                            }
                        }
                        Similarity::Cosine => {
                            let norm = norms[a];
                            if norm >= eps {
                                // Project out the radial direction: (I − ûûᵀ)·g / ‖a‖.
                                let radial = ua.iter().zip(&sum).fold(S::zero(), |acc, (&v, &s)| acc + v * (s - v));
                                for ((o, &s), &v) in ga.iter_mut().zip(&sum).zip(ua) {
                                    *o += coef * ((s - v) - radial * v) / norm;
                                }
                            } else {
                                for ((o, &s), &v) in ga.iter_mut().zip(&sum).zip(ua) {
                                    *o += coef * (s - v) / eps;
                                }
                            }
                        }
                    }
                }
            }
            LatentTensor::from_vec(dims, g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LcrGradient {
        loss,
        local_corr: lc.mean,
        grad,
    })
}

/// Lag-indexed channel similarity averaged over all valid position pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LagCorrelation<S> {
    pub lags: Vec<(isize, isize, isize)>,
    /// Mean cosine similarity; `1` at lag zero.
    pub values: Vec<S>,
    /// Mean of `z_a·z_b / C`, the Pearson correlation for standardized data.
    pub dot_values: Vec<S>,
    pub counts: Vec<usize>,
}

impl<S: Scalar> LagCorrelation<S> {
    pub fn get(&self, lag: (isize, isize, isize)) -> Option<S> {
        self.lags.iter().position(|&l| l == lag).map(|i| self.values[i])
    }

    pub fn get_dot(&self, lag: (isize, isize, isize)) -> Option<S> {
        self.lags.iter().position(|&l| l == lag).map(|i| self.dot_values[i])
    }
}

/// Channel-summed autocorrelation for every lag with `|δ_axis| ≤ max_lag[axis]`.
pub fn autocorrelation<S: Scalar>(batch: &LatentBatch<S>, max_lag: [usize; 3]) -> Result<LagCorrelation<S>> {
    let d = batch.dims();
    for (a, (&m, n)) in max_lag.iter().zip([d.t, d.h, d.w]).enumerate() {
        if m >= n {
            return invalid(format!("max lag {m} on axis {a} must be below axis length {n}"));
        }
    }
    let c = d.c;
    let cc = S::from_usize_lossy(c);
    let eps = S::lit(COSINE_EPSILON);
    let norms: Vec<Vec<S>> = batch
        .items()
        .iter()
        .map(|x| {
            (0..d.positions())
                .map(|p| dot(x.vector(p), x.vector(p)).sqrt().max(eps))
                .collect()
        })
        .collect();

    let range = |m: usize| -(m as isize)..=(m as isize);
    let mut out = LagCorrelation {
        lags: Vec::new(),
        values: Vec::new(),
        dot_values: Vec::new(),
        counts: Vec::new(),
    };
    let mut cos_terms = Vec::new();
    let mut dot_terms = Vec::new();
    for dt in range(max_lag[0]) {
        for dh in range(max_lag[1]) {
            for dw in range(max_lag[2]) {
                cos_terms.clear();
                dot_terms.clear();
                for (x, nx) in batch.items().iter().zip(&norms) {
                    for t in 0..d.t {
                        let Some(t2) = shift(t, dt, d.t) else { continue };
                        for h in 0..d.h {
                            let Some(h2) = shift(h, dh, d.h) else { continue };
                            for w in 0..d.w {
                                let Some(w2) = shift(w, dw, d.w) else { continue };
                                let p = d.pos_index(t, h, w);
                                let q = d.pos_index(t2, h2, w2);
                                let ip = dot(x.vector(p), x.vector(q));
                                dot_terms.push(ip / cc);
                                cos_terms.push(ip / (nx[p] * nx[q]));
                            }
                        }
                    }
                }
                let n = S::from_usize_lossy(cos_terms.len());
                out.lags.push((dt, dh, dw));
                out.values.push(pairwise_sum(&cos_terms) / n);
                out.dot_values.push(pairwise_sum(&dot_terms) / n);
                out.counts.push(cos_terms.len());
            }
        }
    }
    Ok(out)
}

fn shift(i: usize, d: isize, n: usize) -> Option<usize> {
    let j = i as isize + d;
    (0..n as isize).contains(&j).then_some(j as usize)
}

/// One row of an LCR optimization trajectory.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LcrStep<S> {
    pub step: usize,
    pub loss: S,
    pub local_corr: S,
    pub low_freq_fraction: S,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LcrOptions<S> {
    pub alpha: S,
    pub omega: S,
    pub steps: usize,
    pub step_size: S,
    pub patch: PatchSpec,
    /// Low-frequency band per axis, clamped to the axis lengths.
    pub band: [usize; 3],
}

/// Gradient descent on `ω·lcr_loss`, re-standardizing after every step.
///
/// The trajectory has `steps + 1` rows; row `s` describes the batch after
/// `s` updates.
pub fn optimize_latent_lcr<S: Scalar>(
    batch: &LatentBatch<S>,
    opts: &LcrOptions<S>,
) -> Result<(LatentBatch<S>, Vec<LcrStep<S>>)> {
    check_alpha(opts.alpha)?;
    if !(opts.step_size > S::zero()) {
        return invalid("step size must be positive");
    }
    if !(opts.omega > S::zero()) {
        return invalid("loss weight must be positive");
    }
    let (mut z, _) = standardize(batch)?;
    let mut trajectory = Vec::with_capacity(opts.steps + 1);
    for step in 0..=opts.steps {
        let g = lcr_grad(&z, opts.alpha, &opts.patch)?;
        let lf = low_freq_energy_clamped(&power_grid(&z), opts.band)?;
        if !g.loss.is_finite() || !lf.is_finite() {
            return Err(Error::Divergence { step });
        }
        trajectory.push(LcrStep {
            step,
            loss: g.loss,
            local_corr: g.local_corr,
            low_freq_fraction: lf,
        });
        if step == opts.steps {
            break;
        }
        if g.loss <= S::zero() {
            // Hinge inactive: the gradient is zero and the batch is a fixed point.
            continue;
        }
        let lr = opts.step_size * opts.omega;
        let items = z
            .items()
            .iter()
            .zip(&g.grad)
            .map(|(x, gx)| {
                let data = x.data().iter().zip(gx.data()).map(|(&a, &b)| a - lr * b).collect();
                LatentTensor::from_vec(x.dims(), data).map_err(|_| Error::Divergence { step })
            })
            .collect::<Result<Vec<_>>>()?;
        z = standardize(&LatentBatch::new(items)?)
            .map_err(|_| Error::Divergence { step })?
            .0;
    }
    Ok((z, trajectory))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_ar_field, gen_white, ArSpec};

    fn dims(t: usize, h: usize, w: usize, c: usize) -> Dims {
        Dims::new(t, h, w, c).unwrap()
    }

    fn white(d: Dims, b: usize, seed: u64) -> LatentBatch<f64> {
        standardize(&gen_white::<f64>(d, b, seed).unwrap()).unwrap().0
    }

    /// Direct O(P²) enumeration of every unordered pair.
    fn brute_local(batch: &LatentBatch<f64>, spec: &PatchSpec) -> f64 {
        let patches = spec.patches(batch.dims()).unwrap();
        let mut per = Vec::new();
        for x in batch.items() {
            for p in &patches {
                let (mut s, mut n) = (0.0, 0);
                for a in 0..p.len() {
                    for b in a + 1..p.len() {
                        let (u, v) = (x.vector(p[a]), x.vector(p[b]));
                        let d: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
                        s += match spec.similarity {
                            Similarity::Dot => d,
                            Similarity::Cosine => {
                                let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                                let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                                d / (nu * nv)
                            }
                        };
                        n += 1;
                    }
                }
                per.push(s / n as f64);
            }
        }
        per.iter().sum::<f64>() / per.len() as f64
    }

    #[test]
    fn patch_layout_first_frame_spatial() {
        let spec = PatchSpec::default();
        let p = spec.patches(dims(4, 5, 4, 1)).unwrap();
        // frame 0: 2×2 spatial grid of patches; frames 1-2: one temporal block; frame 3 dropped.
        assert_eq!(p.len(), 4 + 4);
        assert!(p[..4].iter().all(|q| q.len() == 4));
        assert!(p[4..].iter().all(|q| q.len() == 8));
        let d = dims(4, 5, 4, 1);
        assert_eq!(p[4][0], d.pos_index(1, 0, 0));
        assert!(p.iter().flatten().all(|&q| d.pos_coords(q).0 < 3 && d.pos_coords(q).1 < 4));

        let spatio = PatchSpec { first_frame_spatial: false, ..spec };
        let q = spatio.patches(dims(4, 4, 4, 1)).unwrap();
        assert_eq!(q.len(), 2 * 4);
        assert!(spec.patches(dims(3, 1, 4, 1)).is_err());
        assert!(PatchSpec { size: 1, ..spec }.patches(dims(2, 2, 2, 1)).is_err());
    }

    #[test]
    fn fast_matches_brute_force() {
        for sim in [Similarity::Cosine, Similarity::Dot] {
            for ffs in [true, false] {
                let spec = PatchSpec { size: 2, first_frame_spatial: ffs, similarity: sim };
                let b = white(dims(3, 4, 4, 3), 2, 4);
                let fast = local_correlation(&b, &spec).unwrap().mean;
                assert!((fast - brute_local(&b, &spec)).abs() < 1e-12, "{sim:?} {ffs}");
            }
        }
    }

    #[test]
    fn patch_constant_tensor_scores_one() {
        let d = dims(3, 4, 4, 3);
        let x = LatentTensor::from_fn(d, |t, h, w, c| {
            let block = (if t == 0 { 0 } else { 1 + (t - 1) / 2 }) * 100 + (h / 2) * 10 + w / 2;
            ((block * 7 + c * 3) % 11) as f64 - 5.0 + 0.5
        })
        .unwrap();
        let b = LatentBatch::single(x);
        let lc = local_correlation(&b, &PatchSpec::default()).unwrap();
        assert!((lc.mean - 1.0).abs() < 1e-12);
        assert_eq!(lcr_loss(&b, 0.75, &PatchSpec::default()).unwrap(), 0.0);
    }

    #[test]
    fn white_field_has_no_local_correlation() {
        let b = white(dims(4, 16, 16, 8), 16, 0);
        let spec = PatchSpec::default();
        let lc = local_correlation(&b, &spec).unwrap().mean;
        assert!(lc.abs() < 0.01, "{lc}");
        let loss = lcr_loss(&b, 0.75, &spec).unwrap();
        assert!((loss - 0.75).abs() < 0.01);
    }

    #[test]
    fn hinge_boundary_and_alpha_range() {
        let b = white(dims(3, 4, 4, 3), 1, 2);
        let spec = PatchSpec::default();
        let lc = local_correlation(&b, &spec).unwrap().mean;
        // Pick a patch-constant batch so E_p[R̃] = 1 = alpha exactly.
        let one = LatentBatch::single(LatentTensor::filled(dims(3, 4, 4, 3), 1.0));
        assert_eq!(lcr_loss(&one, 1.0, &spec).unwrap(), 0.0);
        assert!(lcr_loss(&b, 0.0, &spec).is_err());
        assert!(lcr_loss(&b, 1.5, &spec).is_err());
        assert!(lc.abs() < 1.0);
    }

    fn fd_check(sim: Similarity, seed: u64) -> f64 {
        let spec = PatchSpec::with_similarity(sim);
        let b = white(dims(3, 4, 4, 3), 2, seed);
        let alpha = 1.0;
        let g = lcr_grad(&b, alpha, &spec).unwrap();
        assert!(g.loss > 0.0);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for item in 0..b.len() {
            for i in 0..b.dims().len() {
                let bump = |delta: f64| {
                    let mut items = b.items().to_vec();
                    let mut data = items[item].data().to_vec();
                    data[i] += delta;
                    items[item] = LatentTensor::from_vec(b.dims(), data).unwrap();
                    lcr_loss(&LatentBatch::new(items).unwrap(), alpha, &spec).unwrap()
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let an = g.grad[item].data()[i];
                worst = worst.max((fd - an).abs());
                scale = scale.max(fd.abs());
            }
        }
        worst / scale
    }

    #[test]
    fn gradient_matches_central_differences() {
        assert!(fd_check(Similarity::Cosine, 0) < 1e-5);
        assert!(fd_check(Similarity::Dot, 0) < 1e-5);
    }

    #[test]
    fn inactive_hinge_has_zero_gradient() {
        let b = white(dims(3, 4, 4, 3), 1, 0);
        let spec = PatchSpec::default();
        let lc = local_correlation(&b, &spec).unwrap().mean;
        let alpha = (lc - 0.05).max(1e-3);
        if lc > alpha {
            let g = lcr_grad(&b, alpha, &spec).unwrap();
            assert_eq!(g.loss, 0.0);
            assert!(g.grad.iter().all(|x| x.data().iter().all(|&v| v == 0.0)));
        }
        let ar = standardize(&gen_ar_field::<f64>(dims(3, 4, 4, 3), 1, ArSpec::isotropic(0.95).unwrap(), 0).unwrap()).unwrap().0;
        let g = lcr_grad(&ar, 0.05, &spec).unwrap();
        assert_eq!(g.loss, 0.0);
        assert!(g.grad[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn descent_step_raises_local_correlation() {
        let b = white(dims(3, 4, 4, 3), 1, 7);
        let spec = PatchSpec::default();
        let g = lcr_grad(&b, 0.75, &spec).unwrap();
        let x = &b.items()[0];
        let data = x.data().iter().zip(g.grad[0].data()).map(|(a, d)| a - 1e-1 * d).collect();
        let stepped = LatentBatch::single(LatentTensor::from_vec(x.dims(), data).unwrap());
        assert!(local_correlation(&stepped, &spec).unwrap().mean > g.local_corr);
    }

    #[test]
    fn invariances() {
        let b = white(dims(3, 4, 4, 3), 1, 3);
        let x = &b.items()[0];
        // Per-position positive rescaling leaves cosine unchanged.
        let scaled = LatentTensor::from_fn(x.dims(), |t, h, w, c| x.get(t, h, w, c) * (1.0 + (t + 2 * h + 3 * w) as f64)).unwrap();
        let cos = PatchSpec::default();
        let a = local_correlation(&b, &cos).unwrap().mean;
        let s = local_correlation(&LatentBatch::single(scaled), &cos).unwrap().mean;
        assert!((a - s).abs() < 1e-12);
        // Channel sign flips leave dot unchanged.
        let flipped = LatentTensor::from_fn(x.dims(), |t, h, w, c| if c == 1 { -x.get(t, h, w, c) } else { x.get(t, h, w, c) }).unwrap();
        let dot = PatchSpec::with_similarity(Similarity::Dot);
        let a = local_correlation(&b, &dot).unwrap().mean;
        let f = local_correlation(&LatentBatch::single(flipped), &dot).unwrap().mean;
        assert!((a - f).abs() < 1e-12);
    }

    #[test]
    fn autocorrelation_white_and_ar() {
        let w = white(dims(2, 16, 16, 4), 8, 1);
        let r = autocorrelation(&w, [1, 1, 1]).unwrap();
        assert!((r.get((0, 0, 0)).unwrap() - 1.0).abs() < 1e-9);
        assert!((r.get_dot((0, 0, 0)).unwrap() - 1.0).abs() < 1e-9);
        for (i, lag) in r.lags.iter().enumerate() {
            assert!(r.values[i].abs() <= 1.0 + 1e-9);
            if *lag != (0, 0, 0) {
                let bound = 3.0 / ((r.counts[i] * 4) as f64).sqrt();
                assert!(r.values[i].abs() < bound, "{lag:?}: {} vs {bound}", r.values[i]);
            }
        }
        let ar = standardize(&gen_ar_field::<f64>(dims(1, 16, 256, 4), 16, ArSpec::new(0.0, 0.8, 0.0).unwrap(), 2).unwrap()).unwrap().0;
        let r = autocorrelation(&ar, [0, 1, 0]).unwrap();
        let v = r.get_dot((0, 1, 0)).unwrap();
        assert!((v - 0.8).abs() < 0.03, "{v}");
        assert!(autocorrelation(&ar, [1, 0, 0]).is_err());
    }
}
