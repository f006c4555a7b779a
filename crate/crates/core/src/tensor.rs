//! Latent tensor data model and per-channel standardization.
//!
//! Layout is row-major `(T, H, W, C)` with the channel axis innermost, so the
//! channel vector at each spatio-temporal position is a contiguous slice.

use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum, Scalar};

/// Standard-deviation floor applied during standardization.
pub const STD_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub struct Dims {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Dims {
    pub fn new(t: usize, h: usize, w: usize, c: usize) -> Result<Self> {
        let dims = Dims { t, h, w, c };
        if t == 0 || h == 0 || w == 0 || c == 0 {
            return Err(Error::Shape(format!("all dims must be >= 1, got {dims}")));
        }
        Ok(dims)
    }

    /// Number of spatio-temporal positions `T·H·W`.
    #[inline]
    pub fn positions(&self) -> usize {
        self.t * self.h * self.w
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.positions() * self.c
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn pos_index(&self, t: usize, h: usize, w: usize) -> usize {
        (t * self.h + h) * self.w + w
    }

    #[inline]
    pub fn index(&self, t: usize, h: usize, w: usize, c: usize) -> usize {
        self.pos_index(t, h, w) * self.c + c
    }

    /// Inverse of [`Dims::pos_index`].
    #[inline]
    pub fn pos_coords(&self, pos: usize) -> (usize, usize, usize) {
        let w = pos % self.w;
        let h = (pos / self.w) % self.h;
        let t = pos / (self.w * self.h);
        (t, h, w)
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.t, self.h, self.w, self.c]
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.t, self.h, self.w, self.c)
    }
}

/// A `(T, H, W, C)` array of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor<S> {
    dims: Dims,
    data: Vec<S>,
}

impl<S: Scalar> LatentTensor<S> {
    pub fn from_vec(dims: Dims, data: Vec<S>) -> Result<Self> {
        let dims = Dims::new(dims.t, dims.h, dims.w, dims.c)?;
        if data.len() != dims.len() {
            return Err(Error::Shape(format!(
                "data length {} does not match dims {dims} ({} values)",
                data.len(),
                dims.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            let (t, h, w) = dims.pos_coords(i / dims.c);
            return Err(Error::NonFinite(format!(
                "flat index {i} (t={t}, h={h}, w={w}, c={})",
                i % dims.c
            )));
        }
        Ok(LatentTensor { dims, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        LatentTensor {
            data: vec![S::zero(); dims.len()],
            dims,
        }
    }

    pub fn filled(dims: Dims, value: S) -> Self {
        LatentTensor {
            data: vec![value; dims.len()],
            dims,
        }
    }

    /// Builds a tensor from `f(t, h, w, c)`.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize) -> S) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.len());
        for t in 0..dims.t {
            for h in 0..dims.h {
                for w in 0..dims.w {
                    for c in 0..dims.c {
                        data.push(f(t, h, w, c));
                    }
                }
            }
        }
        Self::from_vec(dims, data)
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn get(&self, t: usize, h: usize, w: usize, c: usize) -> S {
        self.data[self.dims.index(t, h, w, c)]
    }

    /// Channel vector at flat position `pos`.
    #[inline]
    pub fn vector(&self, pos: usize) -> &[S] {
        let c = self.dims.c;
        &self.data[pos * c..(pos + 1) * c]
    }

    pub fn cast<T: Scalar>(&self) -> LatentTensor<T> {
        LatentTensor {
            dims: self.dims,
            data: self.data.iter().map(|x| T::lit(x.to_f64_lossy())).collect(),
        }
    }

    pub fn sum_squares(&self) -> S {
        let sq: Vec<S> = self.data.iter().map(|&x| x * x).collect();
        pairwise_sum(&sq)
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

/// A nonempty list of tensors sharing dims.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch<S> {
    items: Vec<LatentTensor<S>>,
}

impl<S: Scalar> LatentBatch<S> {
    pub fn new(items: Vec<LatentTensor<S>>) -> Result<Self> {
        let Some(first) = items.first() else {
            return Err(Error::Shape("batch must be nonempty".into()));
        };
        let dims = first.dims();
        if let Some((i, t)) = items.iter().enumerate().find(|(_, t)| t.dims() != dims) {
            return Err(Error::Shape(format!(
                "batch item {i} has dims {} but item 0 has {dims}",
                t.dims()
            )));
        }
        Ok(LatentBatch { items })
    }

    pub fn single(tensor: LatentTensor<S>) -> Self {
        LatentBatch { items: vec![tensor] }
    }

    pub fn dims(&self) -> Dims {
        self.items[0].dims()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[LatentTensor<S>] {
        &self.items
    }

    pub fn into_items(self) -> Vec<LatentTensor<S>> {
        self.items
    }

    /// Total number of channel vectors `B·T·H·W`.
    pub fn samples(&self) -> usize {
        self.len() * self.dims().positions()
    }

    /// Iterates over every channel vector in item-major, position-minor order.
    pub fn vectors(&self) -> impl Iterator<Item = &[S]> + '_ {
        let c = self.dims().c;
        self.items.iter().flat_map(move |t| t.data().chunks_exact(c))
    }

    pub fn cast<T: Scalar>(&self) -> LatentBatch<T> {
        LatentBatch {
            items: self.items.iter().map(|t| t.cast()).collect(),
        }
    }
}

/// Per-channel population statistics of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats<S> {
    pub mean: Vec<S>,
    /// Population standard deviation, floored at [`STD_EPSILON`].
    pub std: Vec<S>,
}

impl<S: Scalar> ChannelStats<S> {
    /// Computes mean and population std over all `B·T·H·W` positions.
    pub fn of(batch: &LatentBatch<S>) -> Self {
        let c = batch.dims().c;
        let n = S::from_usize_lossy(batch.samples());
        let eps = S::lit(STD_EPSILON);
        let mut mean = Vec::with_capacity(c);
        let mut std = Vec::with_capacity(c);
        let mut column = Vec::with_capacity(batch.samples());
        for ch in 0..c {
            column.clear();
            column.extend(batch.vectors().map(|v| v[ch]));
            let mu = pairwise_sum(&column) / n;
            for x in column.iter_mut() {
                let d = *x - mu;
                *x = d * d;
            }
            let var = pairwise_sum(&column) / n;
            mean.push(mu);
            std.push(var.sqrt().max(eps));
        }
        ChannelStats { mean, std }
    }

    /// Maps a standardized batch back to the original scale.
    pub fn unstandardize(&self, batch: &LatentBatch<S>) -> Result<LatentBatch<S>> {
        self.check_channels(batch)?;
        self.map(batch, |x, m, s| x * s + m)
    }

    pub fn apply(&self, batch: &LatentBatch<S>) -> Result<LatentBatch<S>> {
        self.check_channels(batch)?;
        self.map(batch, |x, m, s| (x - m) / s)
    }

    fn check_channels(&self, batch: &LatentBatch<S>) -> Result<()> {
        if batch.dims().c != self.mean.len() {
            return Err(Error::Shape(format!(
                "stats have {} channels, batch has {}",
                self.mean.len(),
                batch.dims().c
            )));
        }
        Ok(())
    }

    fn map(&self, batch: &LatentBatch<S>, f: impl Fn(S, S, S) -> S) -> Result<LatentBatch<S>> {
        let c = self.mean.len();
        let items = batch
            .items()
            .iter()
            .map(|t| {
                let data = t
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| f(x, self.mean[i % c], self.std[i % c]))
                    .collect();
                LatentTensor::from_vec(t.dims(), data)
            })
            .collect::<Result<Vec<_>>>()?;
        LatentBatch::new(items)
    }
}

/// Standardizes every channel to zero mean and unit population variance
/// across the whole batch.
pub fn standardize<S: Scalar>(batch: &LatentBatch<S>) -> Result<(LatentBatch<S>, ChannelStats<S>)> {
    let stats = ChannelStats::of(batch);
    let out = stats.apply(batch)?;
    Ok((out, stats))
}
