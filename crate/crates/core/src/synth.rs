//! Synthetic latent batches with known correlation structure.
//!
//! Item `i` of every generated batch draws from RNG stream `i` of the
//! user seed, so the batch is identical whatever the thread count.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::scalar::{Dtype, Scalar};
use crate::tensor::{Dims, LatentBatch, LatentTensor};

/// Per-axis AR(1) coefficients.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ArSpec {
    pub rho_t: f64,
    pub rho_h: f64,
    pub rho_w: f64,
}

impl ArSpec {
    pub fn new(rho_t: f64, rho_h: f64, rho_w: f64) -> Result<Self> {
        for (name, r) in [("rho_t", rho_t), ("rho_h", rho_h), ("rho_w", rho_w)] {
            if !(0.0..1.0).contains(&r) {
                return invalid(format!("{name} = {r} is outside [0, 1)"));
            }
        }
        Ok(ArSpec { rho_t, rho_h, rho_w })
    }

    pub fn isotropic(rho: f64) -> Result<Self> {
        Self::new(rho, rho, rho)
    }
}

/// Channel mixing applied to independent per-mode draws.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mixing {
    Identity,
    /// Normalized Sylvester–Hadamard matrix. Every entry has magnitude
    /// `1/√C`, so every channel gets variance `ΣλC⁻¹ = 1` and standardization
    /// leaves the prescribed spectrum intact.
    Hadamard,
    /// Row-major `C×C` orthonormal matrix; column `l` is the direction of mode `l`.
    Matrix(Vec<f64>),
}

/// Prescribed channel eigenspectrum.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SpectrumSpec {
    eigenvalues: Vec<f64>,
    mixing: Mixing,
}

impl SpectrumSpec {
    pub fn new(eigenvalues: Vec<f64>, mixing: Mixing) -> Result<Self> {
        let c = eigenvalues.len();
        if c == 0 {
            return invalid("eigenvalue list is empty");
        }
        if eigenvalues.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return invalid("eigenvalues must be finite and nonnegative");
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return invalid("eigenvalues must be sorted in descending order");
        }
        let sum: f64 = eigenvalues.iter().sum();
        if (sum - c as f64).abs() > 1e-9 {
            return invalid(format!("eigenvalues sum to {sum}, expected {c}"));
        }
        if let Mixing::Matrix(q) = &mixing {
            if q.len() != c * c {
                return invalid(format!("mixing matrix has {} entries, expected {}", q.len(), c * c));
            }
            let mut worst = 0.0f64;
            for i in 0..c {
                for j in 0..c {
                    let dot: f64 = (0..c).map(|k| q[k * c + i] * q[k * c + j]).sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((dot - target).abs());
                }
            }
            if worst >= 1e-8 {
                return invalid(format!("mixing matrix is not orthonormal (max |QᵀQ−I| = {worst:e})"));
            }
        }
        if mixing == Mixing::Hadamard && !c.is_power_of_two() {
            return invalid(format!("Hadamard mixing needs a power-of-two channel count, got {c}"));
        }
        Ok(SpectrumSpec { eigenvalues, mixing })
    }

    /// Rescales nonnegative values to sum to their count, then validates.
    pub fn normalized(mut eigenvalues: Vec<f64>, mixing: Mixing) -> Result<Self> {
        let sum: f64 = eigenvalues.iter().sum();
        if !(sum > 0.0) {
            return invalid("eigenvalues must have positive sum");
        }
        let scale = eigenvalues.len() as f64 / sum;
        eigenvalues.iter_mut().for_each(|l| *l *= scale);
        Self::new(eigenvalues, mixing)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mixing(&self) -> &Mixing {
        &self.mixing
    }

    pub fn channels(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Dense row-major mixing matrix.
    pub fn mixing_matrix(&self) -> Vec<f64> {
        let c = self.channels();
        match &self.mixing {
            Mixing::Identity => {
                let mut q = vec![0.0; c * c];
                (0..c).for_each(|i| q[i * c + i] = 1.0);
                q
            }
            Mixing::Hadamard => hadamard(c),
            Mixing::Matrix(q) => q.clone(),
        }
    }
}

/// Normalized Sylvester–Hadamard matrix of power-of-two order `n`.
pub fn hadamard(n: usize) -> Vec<f64> {
    assert!(n.is_power_of_two());
    let scale = 1.0 / (n as f64).sqrt();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let sign = if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            q[i * n + j] = sign * scale;
        }
    }
    q
}

fn generate<S: Scalar>(
    dims: Dims,
    batch_size: usize,
    seed: u64,
    fill: impl Fn(&mut rng::Rng) -> Vec<f64> + Sync,
) -> Result<LatentBatch<S>> {
    if batch_size == 0 {
        return invalid("batch size must be >= 1");
    }
    let dims = Dims::new(dims.t, dims.h, dims.w, dims.c)?;
    let items = (0..batch_size)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let data = fill(&mut r).into_iter().map(S::lit).collect();
            LatentTensor::from_vec(dims, data)
        })
        .collect::<Result<Vec<_>>>()?;
    LatentBatch::new(items)
}

/// I.i.d. standard normal entries.
pub fn gen_white<S: Scalar>(dims: Dims, batch_size: usize, seed: u64) -> Result<LatentBatch<S>> {
    generate(dims, batch_size, seed, |r| {
        let mut v = vec![0.0; dims.len()];
        rng::fill_normal(r, &mut v);
        v
    })
}

/// Separable AR(1) Gaussian field, unit variance per channel, lag-δ
/// correlation `ρ_t^|δt| · ρ_h^|δh| · ρ_w^|δw|`.
pub fn gen_ar_field<S: Scalar>(dims: Dims, batch_size: usize, spec: ArSpec, seed: u64) -> Result<LatentBatch<S>> {
    let spec = ArSpec::new(spec.rho_t, spec.rho_h, spec.rho_w)?;
    generate(dims, batch_size, seed, |r| {
        let mut v = vec![0.0; dims.len()];
        rng::fill_normal(r, &mut v);
        // Strides in the (T, H, W, C) layout.
        let sw = dims.c;
        let sh = dims.w * sw;
        let st = dims.h * sh;
        ar_filter(&mut v, dims.t, st, spec.rho_t);
        ar_filter(&mut v, dims.h, sh, spec.rho_h);
        ar_filter(&mut v, dims.w, sw, spec.rho_w);
        v
    })
}

/// Runs `x_i = ρ·x_{i−1} + √(1−ρ²)·n_i` along one axis of length `n` and
/// stride `stride`, starting every line from its stationary distribution.
fn ar_filter(v: &mut [f64], n: usize, stride: usize, rho: f64) {
    if rho == 0.0 || n < 2 {
        return;
    }
    let innov = (1.0 - rho * rho).sqrt();
    let block = n * stride;
    for base in (0..v.len()).step_by(block) {
        for offset in 0..stride {
            let start = base + offset;
            let mut prev = v[start];
            for i in 1..n {
                let idx = start + i * stride;
                prev = rho * prev + innov * v[idx];
                v[idx] = prev;
            }
        }
    }
}

/// Independent positions whose channel vectors have covariance `Q·diag(λ)·Qᵀ`.
pub fn gen_spectrum_field<S: Scalar>(
    dims: Dims,
    batch_size: usize,
    spec: &SpectrumSpec,
    seed: u64,
) -> Result<LatentBatch<S>> {
    let c = spec.channels();
    if dims.c != c {
        return Err(Error::Shape(format!(
            "dims have {} channels but the spectrum has {c}",
            dims.c
        )));
    }
    let q = spec.mixing_matrix();
    let scales: Vec<f64> = spec.eigenvalues().iter().map(|l| l.sqrt()).collect();
    generate(dims, batch_size, seed, |r| {
        let mut out = vec![0.0; dims.len()];
        let mut n = vec![0.0; c];
        for chunk in out.chunks_exact_mut(c) {
            rng::fill_normal(r, &mut n);
            for (i, o) in chunk.iter_mut().enumerate() {
                *o = (0..c).map(|l| q[i * c + l] * scales[l] * n[l]).sum();
            }
        }
        out
    })
}

/// Kind of field a [`SynthConfig`] produces.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldKind {
    White,
    Ar(ArSpec),
    Spectrum(SpectrumSpec),
}

/// Generator settings, parsed from a key-value text file.
///
/// Grammar, one entry per line, `#` starts a comment, blank lines ignored:
///
/// ```text
/// kind        = white | ar | spectrum
/// dims        = T,H,W,C
/// batch       = B                       (default 1)
/// seed        = u64                     (required)
/// dtype       = f32 | f64               (default f32)
/// rho         = rho_t,rho_h,rho_w       (kind = ar)
/// eigenvalues = l1,l2,...               (kind = spectrum; rescaled to sum C when normalize = true)
/// mixing      = identity | hadamard     (kind = spectrum, default identity)
/// normalize   = true | false            (kind = spectrum, default false)
/// ```
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SynthConfig {
    pub field: FieldKind,
    pub dims: Dims,
    pub batch: usize,
    pub seed: u64,
    pub dtype: Dtype,
}

impl SynthConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return invalid(format!("line {}: expected `key = value`", lineno + 1));
            };
            let key = k.trim().to_ascii_lowercase();
            if kv.insert(key.clone(), v.trim().to_string()).is_some() {
                return invalid(format!("line {}: duplicate key `{key}`", lineno + 1));
            }
        }
        let take = |kv: &mut std::collections::BTreeMap<String, String>, k: &str| kv.remove(k);

        let dims_list = parse_list::<usize>(
            &take(&mut kv, "dims").ok_or_else(|| Error::InvalidArgument("missing `dims`".into()))?,
        )?;
        let [t, h, w, c] = dims_list[..] else {
            return invalid("`dims` needs exactly four entries T,H,W,C");
        };
        let dims = Dims::new(t, h, w, c)?;
        let batch = match take(&mut kv, "batch") {
            Some(b) => parse_one::<usize>(&b)?,
            None => 1,
        };
        let seed = parse_one::<u64>(
            &take(&mut kv, "seed").ok_or_else(|| Error::InvalidArgument("missing `seed`".into()))?,
        )?;
        let dtype = match take(&mut kv, "dtype").as_deref() {
            None | Some("f32") => Dtype::F32,
            Some("f64") => Dtype::F64,
            Some(other) => return invalid(format!("unknown dtype `{other}`")),
        };
        let kind = take(&mut kv, "kind").ok_or_else(|| Error::InvalidArgument("missing `kind`".into()))?;
        let field = match kind.as_str() {
            "white" => FieldKind::White,
            "ar" => {
                let r = parse_list::<f64>(
                    &take(&mut kv, "rho").ok_or_else(|| Error::InvalidArgument("kind = ar needs `rho`".into()))?,
                )?;
                let [a, b, c] = r[..] else {
                    return invalid("`rho` needs three entries rho_t,rho_h,rho_w");
                };
                FieldKind::Ar(ArSpec::new(a, b, c)?)
            }
            "spectrum" => {
                let ev = parse_list::<f64>(&take(&mut kv, "eigenvalues").ok_or_else(|| {
                    Error::InvalidArgument("kind = spectrum needs `eigenvalues`".into())
                })?)?;
                let mixing = match take(&mut kv, "mixing").as_deref() {
                    None | Some("identity") => Mixing::Identity,
                    Some("hadamard") => Mixing::Hadamard,
                    Some(other) => return invalid(format!("unknown mixing `{other}`")),
                };
                let normalize = match take(&mut kv, "normalize").as_deref() {
                    None | Some("false") => false,
                    Some("true") => true,
                    Some(other) => return invalid(format!("`normalize` must be true or false, got `{other}`")),
                };
                let spec = if normalize {
                    SpectrumSpec::normalized(ev, mixing)?
                } else {
                    SpectrumSpec::new(ev, mixing)?
                };
                FieldKind::Spectrum(spec)
            }
            other => return invalid(format!("unknown kind `{other}`")),
        };
        if let Some(k) = kv.keys().next() {
            return invalid(format!("unknown or inapplicable key `{k}`"));
        }
        Ok(SynthConfig {
            field,
            dims,
            batch,
            seed,
            dtype,
        })
    }

    pub fn generate<S: Scalar>(&self) -> Result<LatentBatch<S>> {
        match &self.field {
            FieldKind::White => gen_white(self.dims, self.batch, self.seed),
            FieldKind::Ar(spec) => gen_ar_field(self.dims, self.batch, *spec, self.seed),
            FieldKind::Spectrum(spec) => gen_spectrum_field(self.dims, self.batch, spec, self.seed),
        }
    }
}

/// Parses a comma-separated list.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|x| parse_one(x.trim()))
        .collect()
}

fn parse_one<T: std::str::FromStr>(s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse::<T>()
        .map_err(|e| Error::InvalidArgument(format!("cannot parse `{s}`: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(t: usize, h: usize, w: usize, c: usize) -> Dims {
        Dims::new(t, h, w, c).unwrap()
    }

    /// Mean over items, channels and valid lags of x(p)·x(p + lag_w) along W.
    fn lag_corr_w(batch: &LatentBatch<f64>, lag: usize) -> f64 {
        let d = batch.dims();
        let (mut s, mut n) = (0.0, 0usize);
        for item in batch.items() {
            for t in 0..d.t {
                for h in 0..d.h {
                    for w in 0..d.w - lag {
                        for c in 0..d.c {
                            s += item.get(t, h, w, c) * item.get(t, h, w + lag, c);
                            n += 1;
                        }
                    }
                }
            }
        }
        s / n as f64
    }

    #[test]
    fn white_is_deterministic() {
        let a = gen_white::<f32>(dims(2, 3, 3, 2), 4, 123).unwrap();
        let b = gen_white::<f32>(dims(2, 3, 3, 2), 4, 123).unwrap();
        let c = gen_white::<f32>(dims(2, 3, 3, 2), 4, 124).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn white_channel_means_within_normal_bound() {
        let b = gen_white::<f64>(dims(4, 8, 8, 8), 16, 0).unwrap();
        let n = b.samples() as f64;
        for ch in 0..8 {
            let mu = b.vectors().map(|v| v[ch]).sum::<f64>() / n;
            assert!(mu.abs() < 3.0 / n.sqrt(), "channel {ch}: {mu}");
        }
    }

    #[test]
    fn white_channels_are_uncorrelated() {
        let b = gen_white::<f64>(dims(4, 8, 8, 8), 16, 0).unwrap();
        let n = b.samples() as f64;
        for i in 0..8 {
            for j in 0..8 {
                let r = b.vectors().map(|v| v[i] * v[j]).sum::<f64>() / n;
                if i == j {
                    assert!((r - 1.0).abs() < 0.05);
                } else {
                    assert!(r.abs() < 0.05, "({i},{j}) = {r}");
                }
            }
        }
    }

    #[test]
    fn zero_rho_equals_white_stream() {
        let d = dims(2, 4, 4, 3);
        let w = gen_white::<f64>(d, 2, 5).unwrap();
        let a = gen_ar_field::<f64>(d, 2, ArSpec::isotropic(0.0).unwrap(), 5).unwrap();
        assert_eq!(w, a);
    }

    #[test]
    fn ar_lag_correlations() {
        let b = gen_ar_field::<f64>(dims(1, 1, 256, 4), 64, ArSpec::new(0.0, 0.0, 0.9).unwrap(), 1).unwrap();
        let r1 = lag_corr_w(&b, 1);
        let r2 = lag_corr_w(&b, 2);
        assert!((r1 - 0.9).abs() < 0.02, "lag1 {r1}");
        assert!((r2 - 0.81).abs() < 0.03, "lag2 {r2}");
    }

    #[test]
    fn ar_rejects_bad_rho() {
        assert!(ArSpec::new(1.0, 0.0, 0.0).is_err());
        assert!(ArSpec::new(0.0, -0.1, 0.0).is_err());
    }

    #[test]
    fn spectrum_spec_validation() {
        assert!(SpectrumSpec::new(vec![3.4, 0.3, 0.2, 0.1], Mixing::Identity).is_ok());
        assert!(SpectrumSpec::new(vec![0.1, 0.3, 0.2, 3.4], Mixing::Identity).is_err());
        assert!(SpectrumSpec::new(vec![3.0, 0.3, 0.2, 0.1], Mixing::Identity).is_err());
        assert!(SpectrumSpec::new(vec![1.0; 3], Mixing::Hadamard).is_err());
        let skew = vec![1.0, 0.1, 0.0, 1.0];
        assert!(SpectrumSpec::new(vec![1.0, 1.0], Mixing::Matrix(skew)).is_err());
        let s = SpectrumSpec::normalized(vec![3.5, 0.5], Mixing::Identity).unwrap();
        assert_eq!(s.eigenvalues(), &[1.75, 0.25]);
    }

    #[test]
    fn hadamard_is_orthonormal_with_flat_rows() {
        let c = 8;
        let q = hadamard(c);
        for i in 0..c {
            for j in 0..c {
                let dot: f64 = (0..c).map(|k| q[k * c + i] * q[k * c + j]).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!(q.iter().all(|x| (x.abs() - 1.0 / (c as f64).sqrt()).abs() < 1e-15));
    }

    #[test]
    fn config_parse() {
        let cfg = SynthConfig::parse(
            "# field\nkind = ar\ndims = 2,4,4,3\nbatch = 2\nseed = 9\nrho = 0.5, 0.5, 0.9\ndtype=f64\n",
        )
        .unwrap();
        assert_eq!(cfg.field, FieldKind::Ar(ArSpec::new(0.5, 0.5, 0.9).unwrap()));
        assert_eq!(cfg.dtype, Dtype::F64);
        assert_eq!(cfg.generate::<f64>().unwrap().len(), 2);

        let spec = SynthConfig::parse("kind=spectrum\ndims=1,2,2,4\nseed=1\neigenvalues=3,1,1,1\nnormalize=true\nmixing=hadamard").unwrap();
        match spec.field {
            FieldKind::Spectrum(s) => assert_eq!(s.eigenvalues(), &[2.0, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0]),
            other => panic!("{other:?}"),
        }

        assert!(SynthConfig::parse("kind=white\ndims=1,2,2\nseed=1").is_err());
        assert!(SynthConfig::parse("kind=white\ndims=1,2,2,2").is_err());
        assert!(SynthConfig::parse("kind=white\ndims=1,2,2,2\nseed=1\nrho=0.1,0.1,0.1").is_err());
        assert!(SynthConfig::parse("kind=white\ndims=1,2,2,2\nseed=1\nseed=2").is_err());
    }
}
