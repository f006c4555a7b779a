//! 3D DCT, zigzag-binned power spectra, low-frequency energy and the
//! Dirichlet sensitivity kernel.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::scalar::{pairwise_sum, Scalar};
use crate::tensor::{Dims, LatentBatch, LatentTensor};

/// Orthonormal 1-D DCT-II/DCT-III of a fixed length, computed through a
/// same-length complex FFT (even/odd reordering, then a quarter-sample twiddle).
#[derive(Clone)]
pub struct DctPlan<S: Scalar> {
    n: usize,
    fft: Arc<dyn Fft<S>>,
    ifft: Arc<dyn Fft<S>>,
    /// `exp(-iπk/2N)`
    twiddle: Vec<Complex<S>>,
    scale0: S,
    scale: S,
}

impl<S: Scalar> DctPlan<S> {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "DCT length must be positive");
        let mut planner = FftPlanner::new();
        let twiddle = (0..n)
            .map(|k| {
                let a = -std::f64::consts::PI * k as f64 / (2.0 * n as f64);
                Complex::new(S::lit(a.cos()), S::lit(a.sin()))
            })
            .collect();
        DctPlan {
            n,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            twiddle,
            scale0: S::lit((1.0 / n as f64).sqrt()),
            scale: S::lit((2.0 / n as f64).sqrt()),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place orthonormal DCT-II.
    pub fn forward(&self, x: &mut [S], buf: &mut Vec<Complex<S>>) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        if n == 1 {
            return;
        }
        buf.clear();
        buf.resize(n, Complex::new(S::zero(), S::zero()));
        let half = n.div_ceil(2);
        for i in 0..half {
            buf[i].re = x[2 * i];
        }
        for i in 0..n / 2 {
            buf[n - 1 - i].re = x[2 * i + 1];
        }
        self.fft.process(buf);
        for k in 0..n {
            let v = (buf[k] * self.twiddle[k]).re;
            x[k] = v * if k == 0 { self.scale0 } else { self.scale };
        }
    }

    /// In-place orthonormal DCT-III, the exact inverse of [`DctPlan::forward`].
    pub fn inverse(&self, x: &mut [S], buf: &mut Vec<Complex<S>>) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        if n == 1 {
            return;
        }
        let unscale = |k: usize| -> S {
            if k >= n {
                S::zero()
            } else {
                x[k] / if k == 0 { self.scale0 } else { self.scale }
            }
        };
        buf.clear();
        for k in 0..n {
            let re = unscale(k);
            let im = if k == 0 { S::zero() } else { -unscale(n - k) };
            buf.push(Complex::new(re, im) * self.twiddle[k].conj());
        }
        self.ifft.process(buf);
        let inv_n = S::one() / S::from_usize_lossy(n);
        let half = n.div_ceil(2);
        for i in 0..half {
            x[2 * i] = buf[i].re * inv_n;
        }
        for i in 0..n / 2 {
            x[2 * i + 1] = buf[n - 1 - i].re * inv_n;
        }
    }
}

/// Separable 3D transform plan for tensors of one shape.
pub struct Dct3Plan<S: Scalar> {
    dims: Dims,
    t: DctPlan<S>,
    h: DctPlan<S>,
    w: DctPlan<S>,
}

impl<S: Scalar> Dct3Plan<S> {
    pub fn new(dims: Dims) -> Self {
        Dct3Plan {
            dims,
            t: DctPlan::new(dims.t),
            h: DctPlan::new(dims.h),
            w: DctPlan::new(dims.w),
        }
    }

    fn apply(&self, data: &mut [S], inverse: bool) {
        let d = self.dims;
        let sw = d.c;
        let sh = d.w * sw;
        let st = d.h * sh;
        let mut line = Vec::new();
        let mut buf = Vec::new();
        for (plan, n, stride) in [(&self.t, d.t, st), (&self.h, d.h, sh), (&self.w, d.w, sw)] {
            if n == 1 {
                continue;
            }
            let block = n * stride;
            for base in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    line.clear();
                    line.extend((0..n).map(|i| data[start + i * stride]));
                    if inverse {
                        plan.inverse(&mut line, &mut buf);
                    } else {
                        plan.forward(&mut line, &mut buf);
                    }
                    for (i, &v) in line.iter().enumerate() {
                        data[start + i * stride] = v;
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &LatentTensor<S>) -> Result<DctCoeffs<S>> {
        self.check(x.dims())?;
        let mut data = x.data().to_vec();
        self.apply(&mut data, false);
        LatentTensor::from_vec(x.dims(), data).map(DctCoeffs)
    }

    pub fn inverse(&self, c: &DctCoeffs<S>) -> Result<LatentTensor<S>> {
        self.check(c.dims())?;
        let mut data = c.0.data().to_vec();
        self.apply(&mut data, true);
        LatentTensor::from_vec(c.dims(), data)
    }

    fn check(&self, dims: Dims) -> Result<()> {
        if dims != self.dims {
            return Err(Error::Shape(format!("plan is for {}, got {dims}", self.dims)));
        }
        Ok(())
    }
}

/// Orthonormal DCT-II coefficients; entry `(i, j, k, c)` is frequency
/// `(i, j, k)` of channel `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct DctCoeffs<S>(LatentTensor<S>);

impl<S: Scalar> DctCoeffs<S> {
    pub fn dims(&self) -> Dims {
        self.0.dims()
    }

    pub fn get(&self, i: usize, j: usize, k: usize, c: usize) -> S {
        self.0.get(i, j, k, c)
    }

    pub fn as_tensor(&self) -> &LatentTensor<S> {
        &self.0
    }

    pub fn energy(&self) -> S {
        self.0.sum_squares()
    }
}

pub fn dct3<S: Scalar>(x: &LatentTensor<S>) -> DctCoeffs<S> {
    Dct3Plan::new(x.dims()).forward(x).expect("plan matches tensor dims")
}

pub fn idct3<S: Scalar>(c: &DctCoeffs<S>) -> LatentTensor<S> {
    Dct3Plan::new(c.dims()).inverse(c).expect("plan matches coefficient dims")
}

/// All `(i, j, k)` frequency triples sorted by `i + j + k`, ties broken
/// lexicographically.
pub fn zigzag_order(t: usize, h: usize, w: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::with_capacity(t * h * w);
    for i in 0..t {
        for j in 0..h {
            for k in 0..w {
                out.push((i, j, k));
            }
        }
    }
    out.sort_by_key(|&(i, j, k)| (i + j + k, i, j, k));
    out
}

/// Squared DCT coefficients averaged over channels and batch items, laid out
/// on the `(T, H, W)` frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGrid<S> {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub values: Vec<S>,
}

impl<S: Scalar> PowerGrid<S> {
    pub fn get(&self, i: usize, j: usize, k: usize) -> S {
        self.values[(i * self.h + j) * self.w + k]
    }

    pub fn total(&self) -> S {
        pairwise_sum(&self.values)
    }
}

pub fn power_grid<S: Scalar>(batch: &LatentBatch<S>) -> PowerGrid<S> {
    let dims = batch.dims();
    let plan = Dct3Plan::new(dims);
    let c = dims.c;
    // Per item, per frequency: channel-summed squared coefficients.
    let per_item: Vec<Vec<S>> = batch
        .items()
        .par_iter()
        .map(|x| {
            let coeffs = plan.forward(x).expect("dims match");
            coeffs
                .0
                .data()
                .chunks_exact(c)
                .map(|v| pairwise_sum(&v.iter().map(|&a| a * a).collect::<Vec<_>>()))
                .collect()
        })
        .collect();
    let norm = S::from_usize_lossy(c * batch.len());
    let mut column = Vec::with_capacity(batch.len());
    let values = (0..dims.positions())
        .map(|p| {
            column.clear();
            column.extend(per_item.iter().map(|v| v[p]));
            pairwise_sum(&column) / norm
        })
        .collect();
    PowerGrid {
        t: dims.t,
        h: dims.h,
        w: dims.w,
        values,
    }
}

/// One contiguous run of zigzag indices, `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct PsdBin {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdCurve<S> {
    pub bins: Vec<PsdBin>,
    pub energy: Vec<S>,
    pub normalized: bool,
}

/// Splits `n` indices into `bins` contiguous runs whose sizes differ by at
/// most one, larger runs first.
pub fn bin_edges(n: usize, bins: usize) -> Result<Vec<PsdBin>> {
    if bins == 0 || bins > n {
        return invalid(format!("bin count {bins} must be in 1..={n}"));
    }
    let base = n / bins;
    let extra = n % bins;
    let mut start = 0;
    Ok((0..bins)
        .map(|b| {
            let size = base + usize::from(b < extra);
            let bin = PsdBin { start, end: start + size };
            start += size;
            bin
        })
        .collect())
}

pub fn psd_from_grid<S: Scalar>(grid: &PowerGrid<S>, bins: usize) -> Result<PsdCurve<S>> {
    let order = zigzag_order(grid.t, grid.h, grid.w);
    let edges = bin_edges(order.len(), bins)?;
    let linear: Vec<S> = order.iter().map(|&(i, j, k)| grid.get(i, j, k)).collect();
    let mut energy: Vec<S> = edges.iter().map(|b| pairwise_sum(&linear[b.start..b.end])).collect();
    let total = pairwise_sum(&energy);
    let normalized = total > S::zero();
    if normalized {
        energy.iter_mut().for_each(|e| *e /= total);
    }
    Ok(PsdCurve {
        bins: edges,
        energy,
        normalized,
    })
}

/// Zigzag-binned power spectrum normalized to unit total energy.
pub fn psd<S: Scalar>(batch: &LatentBatch<S>, bins: usize) -> Result<PsdCurve<S>> {
    let n = batch.dims().positions();
    if bins == 0 || bins > n {
        return invalid(format!("bin count {bins} must be in 1..={n}"));
    }
    psd_from_grid(&power_grid(batch), bins)
}

/// Fraction of the total energy with `i ≤ band[0]`, `j ≤ band[1]`, `k ≤ band[2]`.
pub fn low_freq_energy<S: Scalar>(grid: &PowerGrid<S>, band: [usize; 3]) -> Result<S> {
    let axes = [grid.t, grid.h, grid.w];
    for (a, (&m, &n)) in band.iter().zip(&axes).enumerate() {
        if m >= n {
            return invalid(format!("band {m} on axis {a} exceeds axis length {n}"));
        }
    }
    let total = grid.total();
    if total <= S::zero() {
        return Err(Error::ZeroVariance);
    }
    let mut low = Vec::new();
    for i in 0..=band[0] {
        for j in 0..=band[1] {
            for k in 0..=band[2] {
                low.push(grid.get(i, j, k));
            }
        }
    }
    Ok(pairwise_sum(&low) / total)
}

/// Same as [`low_freq_energy`] but clamps the band to each axis.
pub fn low_freq_energy_clamped<S: Scalar>(grid: &PowerGrid<S>, band: [usize; 3]) -> Result<S> {
    low_freq_energy(
        grid,
        [band[0].min(grid.t - 1), band[1].min(grid.h - 1), band[2].min(grid.w - 1)],
    )
}

/// Dirichlet weights linking autocorrelation lags to the energy of a
/// symmetric low-frequency band `{0..m_max} ∪ {N−m_max..N−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityKernel<S> {
    pub n: usize,
    pub m_max: usize,
    pub values: Vec<S>,
}

pub fn sensitivity_kernel<S: Scalar>(n: usize, m_max: usize) -> Result<SensitivityKernel<S>> {
    let width = 2 * m_max + 1;
    if n == 0 || width > n {
        return invalid(format!("band width 2·{m_max}+1 = {width} exceeds N = {n}"));
    }
    let pi = S::PI();
    let nn = S::from_usize_lossy(n);
    let ww = S::from_usize_lossy(width);
    let values = (0..n)
        .map(|d| {
            if d == 0 {
                ww
            } else {
                let x = pi * S::from_usize_lossy(d) / nn;
                (ww * x).sin() / x.sin()
            }
        })
        .collect();
    Ok(SensitivityKernel { n, m_max, values })
}

/// `1 + 2·Σ_{m=1..m_max} cos(2πmδ/N)` evaluated term by term.
pub fn sensitivity_kernel_direct<S: Scalar>(n: usize, m_max: usize) -> Vec<S> {
    let two_pi = S::lit(2.0) * S::PI();
    let nn = S::from_usize_lossy(n);
    (0..n)
        .map(|d| {
            let mut v = S::one();
            for m in 1..=m_max {
                v += S::lit(2.0) * (two_pi * S::from_usize_lossy(m * d) / nn).cos();
            }
            v
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WienerKhinchin<S> {
    /// Circular autocorrelation `R[δ] = N⁻¹ Σ_n x[n]·x[(n+δ) mod N]`.
    pub autocorr: Vec<S>,
    /// Real part of `DFT(R)`.
    pub from_autocorr: Vec<S>,
    /// `|DFT(x)|² / N`.
    pub direct: Vec<S>,
    /// `max_m |a_m − b_m| / max_m |b_m|`.
    pub max_rel_diff: S,
}

/// Computes the power spectrum both from the circular autocorrelation and
/// directly from the signal's DFT.
pub fn wiener_khinchin_check<S: Scalar>(signal: &[S]) -> Result<WienerKhinchin<S>> {
    let n = signal.len();
    if n < 2 {
        return invalid("signal needs at least two samples");
    }
    if signal.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("signal".into()));
    }
    let nn = S::from_usize_lossy(n);
    let mut terms = vec![S::zero(); n];
    let autocorr: Vec<S> = (0..n)
        .map(|d| {
            for (i, t) in terms.iter_mut().enumerate() {
                *t = signal[i] * signal[(i + d) % n];
            }
            pairwise_sum(&terms) / nn
        })
        .collect();

    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf: Vec<Complex<S>> = autocorr.iter().map(|&r| Complex::new(r, S::zero())).collect();
    fft.process(&mut buf);
    let from_autocorr: Vec<S> = buf.iter().map(|z| z.re).collect();

    let mut buf: Vec<Complex<S>> = signal.iter().map(|&x| Complex::new(x, S::zero())).collect();
    fft.process(&mut buf);
    let direct: Vec<S> = buf.iter().map(|z| z.norm_sqr() / nn).collect();

    let scale = direct.iter().fold(S::zero(), |m, &x| m.max(x.abs()));
    let worst = from_autocorr
        .iter()
        .zip(&direct)
        .fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs()));
    let max_rel_diff = if scale > S::zero() { worst / scale } else { worst };
    Ok(WienerKhinchin {
        autocorr,
        from_autocorr,
        direct,
        max_rel_diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_ar_field, gen_white, ArSpec};

    fn dims(t: usize, h: usize, w: usize, c: usize) -> Dims {
        Dims::new(t, h, w, c).unwrap()
    }

    /// Textbook O(N²) orthonormal DCT-II.
    fn brute_dct(x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        (0..x.len())
            .map(|k| {
                let s: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| v * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * n)).cos())
                    .sum();
                s * if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() }
            })
            .collect()
    }

    #[test]
    fn matches_direct_summation_1x1x8() {
        let x = gen_white::<f64>(dims(1, 1, 8, 1), 1, 3).unwrap().into_items().remove(0);
        let fast = dct3(&x);
        let slow = brute_dct(x.data());
        for (k, s) in slow.iter().enumerate() {
            assert!((fast.get(0, 0, k, 0) - s).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_and_even_lengths_match_direct_summation() {
        for n in [2, 3, 5, 7, 12, 33] {
            let x = gen_white::<f64>(dims(1, n, 1, 1), 1, n as u64).unwrap().into_items().remove(0);
            let fast = dct3(&x);
            let slow = brute_dct(x.data());
            for (k, s) in slow.iter().enumerate() {
                assert!((fast.get(0, k, 0, 0) - s).abs() < 1e-12, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn constant_tensor_is_dc_only() {
        let d = dims(3, 4, 5, 2);
        let x = LatentTensor::filled(d, 2.5f64);
        let c = dct3(&x);
        let dc = 2.5 * ((3 * 4 * 5) as f64).sqrt();
        for i in 0..3 {
            for j in 0..4 {
                for k in 0..5 {
                    for ch in 0..2 {
                        let expect = if (i, j, k) == (0, 0, 0) { dc } else { 0.0 };
                        assert!((c.get(i, j, k, ch) - expect).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn inverse_and_parseval() {
        let x = gen_white::<f64>(dims(4, 8, 8, 2), 1, 0).unwrap().into_items().remove(0);
        let c = dct3(&x);
        let back = idct3(&c);
        assert!(back.max_abs_diff(&x) < 1e-10);
        let ex = x.sum_squares();
        assert!((c.energy() - ex).abs() / ex < 1e-9);
    }

    #[test]
    fn single_precision_round_trip() {
        let x = gen_white::<f32>(dims(3, 5, 4, 2), 1, 1).unwrap().into_items().remove(0);
        assert!(idct3(&dct3(&x)).max_abs_diff(&x) < 1e-5);
    }

    #[test]
    fn zigzag_small_case() {
        assert_eq!(zigzag_order(1, 2, 2), vec![(0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1)]);
    }

    #[test]
    fn zigzag_is_a_permutation_starting_at_dc() {
        let z = zigzag_order(3, 4, 5);
        assert_eq!(z.len(), 60);
        assert_eq!(z[0], (0, 0, 0));
        let mut seen = std::collections::HashSet::new();
        assert!(z.iter().all(|p| seen.insert(*p)));
        assert!(z.windows(2).all(|w| w[0].0 + w[0].1 + w[0].2 <= w[1].0 + w[1].1 + w[1].2));
    }

    #[test]
    fn bins_are_near_equal() {
        let e = bin_edges(10, 3).unwrap();
        assert_eq!(e, vec![PsdBin { start: 0, end: 4 }, PsdBin { start: 4, end: 7 }, PsdBin { start: 7, end: 10 }]);
        assert!(bin_edges(4, 5).is_err());
        assert!(bin_edges(4, 0).is_err());
    }

    #[test]
    fn constant_batch_psd_is_dc_only() {
        let b = LatentBatch::single(LatentTensor::filled(dims(2, 4, 4, 3), 1.5f64));
        let p = psd(&b, 8).unwrap();
        assert!((p.energy[0] - 1.0).abs() < 1e-12);
        assert!(p.energy[1..].iter().all(|&e| e.abs() < 1e-20));
    }

    #[test]
    fn white_psd_is_flat() {
        let b = gen_white::<f64>(dims(4, 16, 16, 8), 32, 0).unwrap();
        let p = psd(&b, 20).unwrap();
        let n = 4.0 * 16.0 * 16.0;
        assert!((p.energy.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (bin, e) in p.bins.iter().zip(&p.energy) {
            let share = (bin.end - bin.start) as f64 / n;
            assert!((e / share - 1.0).abs() < 0.2, "bin {bin:?}: {e} vs {share}");
        }
    }

    #[test]
    fn psd_rejects_too_many_bins() {
        let b = gen_white::<f64>(dims(1, 2, 2, 1), 1, 0).unwrap();
        assert!(psd(&b, 5).is_err());
    }

    #[test]
    fn ar_field_is_steeper_than_white() {
        let d = dims(4, 16, 16, 8);
        let white = gen_white::<f64>(d, 8, 0).unwrap();
        let ar = gen_ar_field::<f64>(d, 8, ArSpec::isotropic(0.9).unwrap(), 0).unwrap();
        assert!(psd(&ar, 20).unwrap().energy[0] > psd(&white, 20).unwrap().energy[0]);
        let lw = low_freq_energy(&power_grid(&white), [1, 1, 1]).unwrap();
        let la = low_freq_energy(&power_grid(&ar), [1, 1, 1]).unwrap();
        assert!(la > lw, "{la} vs {lw}");
    }

    #[test]
    fn low_freq_energy_edges() {
        let b = gen_white::<f64>(dims(2, 3, 4, 2), 1, 0).unwrap();
        let g = power_grid(&b);
        assert!((low_freq_energy(&g, [1, 2, 3]).unwrap() - 1.0).abs() < 1e-12);
        assert!(low_freq_energy(&g, [2, 0, 0]).is_err());
        let c = LatentBatch::single(LatentTensor::filled(dims(2, 3, 4, 2), -3.0f64));
        assert!((low_freq_energy(&power_grid(&c), [0, 0, 0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_closed_form_matches_cosine_sum() {
        let k = sensitivity_kernel::<f64>(32, 2).unwrap();
        assert_eq!(k.values[0], 5.0);
        let direct = sensitivity_kernel_direct::<f64>(32, 2);
        for (a, b) in k.values.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_full_band_is_a_delta() {
        let k = sensitivity_kernel::<f64>(9, 4).unwrap();
        assert_eq!(k.values[0], 9.0);
        assert!(k.values[1..].iter().all(|v| v.abs() < 1e-9));
        assert!(sensitivity_kernel::<f64>(8, 4).is_err());
    }

    #[test]
    fn wiener_khinchin_single_tone() {
        let n = 64;
        let m0 = 5;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * (m0 * i) as f64 / n as f64).cos())
            .collect();
        let wk = wiener_khinchin_check(&x).unwrap();
        assert!(wk.max_rel_diff < 1e-8);
        for m in 0..n {
            let peak = m == m0 || m == n - m0;
            assert_eq!(wk.direct[m] > 1e-6, peak, "m={m}");
            assert_eq!(wk.from_autocorr[m] > 1e-6, peak, "m={m}");
        }
    }

    #[test]
    fn wiener_khinchin_white_is_flat() {
        let mut r = crate::rng::stream(0, 0);
        let mut x = vec![0.0; 1024];
        crate::rng::fill_normal(&mut r, &mut x);
        let wk = wiener_khinchin_check(&x).unwrap();
        assert!(wk.max_rel_diff < 1e-8);
        // Periodogram ordinates are ~Exp(1) (σ² = 1); band averages of 64
        // ordinates have relative sd 1/8, so 4 sd = 0.5.
        for band in wk.direct.chunks(64) {
            let mean = band.iter().sum::<f64>() / 64.0;
            assert!((mean - 1.0).abs() < 0.5, "{mean}");
        }
        assert!(wiener_khinchin_check(&[1.0]).is_err());
    }
}
