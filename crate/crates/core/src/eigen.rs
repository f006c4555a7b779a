//! Channel autocorrelation, symmetric eigendecomposition and eigenspectrum
//! shaping.

use crate::error::{invalid, Error, Result};
use crate::scalar::{pairwise_sum, Scalar};
use crate::tensor::{standardize, LatentBatch, LatentTensor};

/// Eigenvalue gap below which top-k gradients are flagged.
pub const GAP_TOLERANCE: f64 = 1e-6;
pub const MAX_SWEEPS: usize = 100;

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<S> {
    n: usize,
    data: Vec<S>,
}

impl<S: Scalar> SymMatrix<S> {
    /// Accepts `data` if it is symmetric to `1e−10` (scaled by the largest
    /// entry when that exceeds one, and by machine precision for `f32`).
    pub fn new(n: usize, data: Vec<S>) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(Error::Shape(format!("expected {n}×{n} entries, got {}", data.len())));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        let scale = data.iter().fold(S::one(), |m, x| m.max(x.abs()));
        let tol = S::lit(1e-10).max(S::epsilon() * S::lit(16.0)) * scale;
        for i in 0..n {
            for j in 0..i {
                if (data[i * n + j] - data[j * n + i]).abs() >= tol {
                    return invalid(format!("matrix is not symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(SymMatrix { n, data })
    }

    /// Symmetrizes `(A + Aᵀ) / 2`.
    pub fn symmetrized(n: usize, data: &[S]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Shape(format!("expected {n}×{n} entries, got {}", data.len())));
        }
        let half = S::lit(0.5);
        let out = (0..n * n).map(|k| (data[k] + data[(k % n) * n + k / n]) * half).collect();
        Self::new(n, out)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![S::zero(); n * n];
        (0..n).for_each(|i| data[i * n + i] = S::one());
        SymMatrix { n, data }
    }

    pub fn from_diagonal(d: &[S]) -> Self {
        let n = d.len();
        let mut data = vec![S::zero(); n * n];
        for (i, &x) in d.iter().enumerate() {
            data[i * n + i] = x;
        }
        SymMatrix { n, data }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.n + j]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn trace(&self) -> S {
        (0..self.n).map(|i| self.get(i, i)).fold(S::zero(), |a, b| a + b)
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// `a·I + b·self`
    pub fn affine(&self, a: S, b: S) -> Self {
        let n = self.n;
        let data = (0..n * n)
            .map(|k| b * self.data[k] + if k % (n + 1) == 0 { a } else { S::zero() })
            .collect();
        SymMatrix { n, data }
    }

    /// Plain (generally non-symmetric) product, row-major.
    pub fn matmul(&self, other: &Self) -> Vec<S> {
        matmul(&self.data, &other.data, self.n)
    }

    /// `max |A·B − B·A|`
    pub fn commutator_max(&self, other: &Self) -> S {
        let ab = self.matmul(other);
        let ba = other.matmul(self);
        ab.iter().zip(&ba).fold(S::zero(), |m, (&x, &y)| m.max((x - y).abs()))
    }
}

pub(crate) fn matmul<S: Scalar>(a: &[S], b: &[S], n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == S::zero() {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// `E[uᵀu]` over every channel vector of the batch.
pub fn channel_autocorr<S: Scalar>(batch: &LatentBatch<S>) -> SymMatrix<S> {
    let c = batch.dims().c;
    let n = S::from_usize_lossy(batch.samples());
    let mut data = vec![S::zero(); c * c];
    let mut column = Vec::with_capacity(batch.samples());
    for i in 0..c {
        for j in 0..=i {
            column.clear();
            column.extend(batch.vectors().map(|v| v[i] * v[j]));
            let m = pairwise_sum(&column) / n;
            data[i * c + j] = m;
            data[j * c + i] = m;
        }
    }
    SymMatrix { n: c, data }
}

/// Descending eigenvalues with matching orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSpectrum<S> {
    pub values: Vec<S>,
    /// Row-major `C×C`; column `l` is the eigenvector of `values[l]`.
    pub vectors: Vec<S>,
}

impl<S: Scalar> EigenSpectrum<S> {
    pub fn order(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, l: usize) -> Vec<S> {
        let n = self.order();
        (0..n).map(|i| self.vectors[i * n + l]).collect()
    }

    /// `V·diag(λ)·Vᵀ`
    pub fn reconstruct(&self) -> Vec<S> {
        let n = self.order();
        let mut out = vec![S::zero(); n * n];
        for l in 0..n {
            for i in 0..n {
                let vil = self.vectors[i * n + l] * self.values[l];
                for j in 0..n {
                    out[i * n + j] += vil * self.vectors[j * n + l];
                }
            }
        }
        out
    }

    /// `Σ_{l∈subset} v_l·v_lᵀ`
    pub fn projector(&self, subset: &[usize]) -> Vec<S> {
        let n = self.order();
        let mut out = vec![S::zero(); n * n];
        for &l in subset {
            for i in 0..n {
                let vi = self.vectors[i * n + l];
                for j in 0..n {
                    out[i * n + j] += vi * self.vectors[j * n + l];
                }
            }
        }
        out
    }
}

/// Cyclic Jacobi eigendecomposition.
///
/// Eigenvalues are sorted descending (stable, so ties keep their diagonal
/// order); each eigenvector is signed so that its largest-magnitude
/// component, lowest index first, is positive.
pub fn eigh<S: Scalar>(a: &SymMatrix<S>) -> Result<EigenSpectrum<S>> {
    let n = a.n;
    let mut m = a.data.clone();
    let mut v = SymMatrix::<S>::identity(n).data;
    let frob = m.iter().fold(S::zero(), |acc, &x| acc + x * x).sqrt();
    let tol = S::lit(1e-12).max(S::epsilon() * S::from_usize_lossy(n)) * frob;

    let off = |m: &[S]| {
        let mut s = S::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = off(&m) <= tol;
    let mut sweep = 0;
    while !converged {
        if sweep == MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == S::zero() {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (S::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for r in 0..n {
                    let arp = m[r * n + p];
                    let arq = m[r * n + q];
                    m[r * n + p] = c * arp - s * arq;
                    m[r * n + q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = m[p * n + r];
                    let aqr = m[q * n + r];
                    m[p * n + r] = c * apr - s * aqr;
                    m[q * n + r] = s * apr + c * aqr;
                }
                m[p * n + q] = S::zero();
                m[q * n + p] = S::zero();
                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = c * vrp - s * vrq;
                    v[r * n + q] = s * vrp + c * vrq;
                }
            }
        }
        sweep += 1;
        converged = off(&m) <= tol;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].partial_cmp(&m[i * n + i]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![S::zero(); n * n];
    for (l, &src) in order.iter().enumerate() {
        let mut pivot = 0;
        for i in 1..n {
            if v[i * n + src].abs() > v[pivot * n + src].abs() {
                pivot = i;
            }
        }
        let sign = if v[pivot * n + src] < S::zero() { -S::one() } else { S::one() };
        for i in 0..n {
            vectors[i * n + l] = sign * v[i * n + src];
        }
    }
    Ok(EigenSpectrum { values, vectors })
}

fn clamped_total<S: Scalar>(values: &[S]) -> Result<(Vec<S>, S)> {
    // Rounding leaves vanishing modes slightly negative; how far depends on
    // the precision and on the largest eigenvalue.
    let top = values.iter().fold(S::one(), |m, &l| m.max(l.abs()));
    let floor = -(S::lit(1e-9).max(S::epsilon() * S::lit(64.0)) * top);
    if let Some(l) = values.iter().find(|&&l| l < floor) {
        return invalid(format!("eigenvalue {l} is too negative for a covariance spectrum"));
    }
    let clamped: Vec<S> = values.iter().map(|&l| l.max(S::zero())).collect();
    let total = clamped.iter().fold(S::zero(), |a, &b| a + b);
    if total <= S::zero() {
        return Err(Error::ZeroVariance);
    }
    Ok((clamped, total))
}

/// Prefix sums of the (descending) eigenvalues over their total.
pub fn cumulative_explained_variance<S: Scalar>(values: &[S]) -> Result<Vec<S>> {
    let (clamped, total) = clamped_total(values)?;
    let mut acc = S::zero();
    let mut out: Vec<S> = clamped
        .iter()
        .map(|&l| {
            acc += l;
            acc / total
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = S::one();
    }
    Ok(out)
}

/// `exp(H(λ/Σλ))` with `H` the Shannon entropy in nats.
pub fn effective_rank<S: Scalar>(values: &[S]) -> Result<S> {
    let (clamped, total) = clamped_total(values)?;
    let entropy = clamped
        .iter()
        .filter(|&&l| l > S::zero())
        .map(|&l| {
            let p = l / total;
            -p * p.ln()
        })
        .fold(S::zero(), |a, b| a + b);
    Ok(entropy.exp())
}

/// Share of the total variance held by the top `k` modes.
pub fn top_k_share<S: Scalar>(values: &[S], k: usize) -> Result<S> {
    let cev = cumulative_explained_variance(values)?;
    if k == 0 || k > cev.len() {
        return invalid(format!("k = {k} must be in 1..={}", cev.len()));
    }
    Ok(cev[k - 1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovPenalty<S> {
    /// `trace(Σ) − Σ_{l≤k} λ_l`
    pub value: S,
    pub spectrum: EigenSpectrum<S>,
    /// `λ_k − λ_{k+1}`
    pub gap: S,
    /// False when the gap is below [`GAP_TOLERANCE`]; the gradient is then
    /// still returned but is not a true derivative.
    pub reliable: bool,
}

fn check_k(k: usize, c: usize) -> Result<()> {
    if k == 0 || k >= c {
        return invalid(format!("k = {k} must satisfy 1 <= k < C = {c}"));
    }
    Ok(())
}

/// Tail eigenvalue mass of an autocorrelation matrix.
pub fn cov_penalty_matrix<S: Scalar>(sigma: &SymMatrix<S>, k: usize) -> Result<CovPenalty<S>> {
    check_k(k, sigma.order())?;
    let spectrum = eigh(sigma)?;
    let top = spectrum.values[..k].iter().fold(S::zero(), |a, &b| a + b);
    let value = (sigma.trace() - top).max(S::zero());
    let gap = spectrum.values[k - 1] - spectrum.values[k];
    Ok(CovPenalty {
        value,
        reliable: gap >= S::lit(GAP_TOLERANCE),
        gap,
        spectrum,
    })
}

/// Penalty of a batch plus its gradient with respect to every entry.
///
/// With `Σ = N⁻¹ Σ_n u_nᵀu_n` and `∂λ_l/∂Σ = v_l v_lᵀ`, the gradient on
/// each channel vector is `(2/N)·(I − Σ_{l≤k} v_l v_lᵀ)·u_n`.
pub fn cov_penalty<S: Scalar>(batch: &LatentBatch<S>, k: usize) -> Result<(CovPenalty<S>, Vec<LatentTensor<S>>)> {
    let sigma = channel_autocorr(batch);
    let pen = cov_penalty_matrix(&sigma, k)?;
    let c = sigma.order();
    let top: Vec<usize> = (0..k).collect();
    let proj = pen.spectrum.projector(&top);
    let scale = S::lit(2.0) / S::from_usize_lossy(batch.samples());
    let grad = batch
        .items()
        .iter()
        .map(|x| {
            let mut g = vec![S::zero(); x.data().len()];
            for (u, out) in x.data().chunks_exact(c).zip(g.chunks_exact_mut(c)) {
                for i in 0..c {
                    let pu = (0..c).fold(S::zero(), |a, j| a + proj[i * c + j] * u[j]);
                    out[i] = scale * (u[i] - pu);
                }
            }
            LatentTensor::from_vec(x.dims(), g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((pen, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CovpenStep<S> {
    pub step: usize,
    pub penalty: S,
    pub effective_rank: S,
    pub gradient_reliable: bool,
}

/// Gradient descent on the tail penalty with per-step re-standardization.
/// Returns `steps + 1` trajectory rows.
///
/// `step_size` is measured per sample: each update is
/// `u ← u − step_size·(N/2)·∇`, which removes the fraction `step_size` of
/// every vector's tail component.
pub fn optimize_latent_covpen<S: Scalar>(
    batch: &LatentBatch<S>,
    k: usize,
    steps: usize,
    step_size: S,
) -> Result<(LatentBatch<S>, Vec<CovpenStep<S>>)> {
    check_k(k, batch.dims().c)?;
    if !(step_size > S::zero()) {
        return invalid("step size must be positive");
    }
    let (mut z, _) = standardize(batch)?;
    let lr = step_size * S::from_usize_lossy(z.samples()) / S::lit(2.0);
    let mut trajectory = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let (pen, grad) = cov_penalty(&z, k)?;
        let er = effective_rank(&pen.spectrum.values)?;
        if !pen.value.is_finite() || !er.is_finite() {
            return Err(Error::Divergence { step });
        }
        trajectory.push(CovpenStep {
            step,
            penalty: pen.value,
            effective_rank: er,
            gradient_reliable: pen.reliable,
        });
        if step == steps {
            break;
        }
        let items = z
            .items()
            .iter()
            .zip(&grad)
            .map(|(x, g)| {
                let data = x.data().iter().zip(g.data()).map(|(&a, &b)| a - lr * b).collect();
                LatentTensor::from_vec(x.dims(), data).map_err(|_| Error::Divergence { step })
            })
            .collect::<Result<Vec<_>>>()?;
        z = standardize(&LatentBatch::new(items)?)
            .map_err(|_| Error::Divergence { step })?
            .0;
    }
    Ok((z, trajectory))
}

/// Replaces each channel vector by its orthogonal projection onto the span
/// of the selected eigenvectors (0-based mode indices).
pub fn pc_project<S: Scalar>(x: &LatentTensor<S>, spectrum: &EigenSpectrum<S>, subset: &[usize]) -> Result<LatentTensor<S>> {
    let c = spectrum.order();
    if x.dims().c != c {
        return Err(Error::Shape(format!("tensor has {} channels, spectrum {c}", x.dims().c)));
    }
    if subset.is_empty() {
        return invalid("mode subset is empty");
    }
    let mut modes = subset.to_vec();
    modes.sort_unstable();
    modes.dedup();
    if let Some(&bad) = modes.iter().find(|&&l| l >= c) {
        return invalid(format!("mode index {bad} out of range for {c} channels"));
    }
    let proj = spectrum.projector(&modes);
    let mut out = Vec::with_capacity(x.data().len());
    for u in x.data().chunks_exact(c) {
        for i in 0..c {
            out.push((0..c).fold(S::zero(), |a, j| a + proj[i * c + j] * u[j]));
        }
    }
    LatentTensor::from_vec(x.dims(), out)
}
