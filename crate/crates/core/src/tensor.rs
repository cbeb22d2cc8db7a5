//! Dense row-major tensors and the handful of float ops the network needs.
//!
//! Image tensors are channel-last (`H x W x C`). Every op that produces new
//! values checks them for NaN/Inf and reports [`Error::NonFinite`] instead of
//! passing garbage downstream.

use std::fmt::{self, Debug};

use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};

/// Scalar types a [`Tensor`] can hold.
pub trait Real: Float + FromPrimitive + Default + Debug + Send + Sync + std::iter::Sum + 'static {
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Layer-norm epsilon.
pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(Error::shape("shape must have at least one dimension"));
        }
        if dims.contains(&0) {
            return Err(Error::shape(format!("zero-sized dimension in {dims:?}")));
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Debug> Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor").field("shape", &self.shape).field("len", &self.data.len()).finish()
    }
}

impl<T: Real> Tensor<T> {
    pub fn new(dims: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::shape(format!("shape {:?} needs {} values, got {}", shape, shape.numel(), data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(dims: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: impl Into<Vec<usize>>, value: T) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data = vec![value; shape.numel()];
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(dims: impl Into<Vec<usize>>, f: impl FnMut(usize) -> T) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data = (0..shape.numel()).map(f).collect();
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Size of the last axis.
    pub fn last_dim(&self) -> usize {
        *self.dims().last().expect("non-empty shape")
    }

    /// Number of rows when viewed as `[rows x last_dim]`.
    pub fn rows(&self) -> usize {
        self.len() / self.last_dim()
    }

    /// `(H, W, C)` of a channel-last image tensor.
    pub fn hwc(&self) -> Result<(usize, usize, usize)> {
        match *self.dims() {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::shape(format!("expected an H x W x C tensor, got {:?}", self.shape))),
        }
    }

    pub fn at(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.rank());
        index.iter().zip(self.dims()).fold(0, |acc, (&i, &d)| {
            debug_assert!(i < d);
            acc * d + i
        })
    }

    pub fn reshape(self, dims: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.data.len() {
            return Err(Error::shape(format!("cannot reshape {:?} into {:?}", self.shape, shape)));
        }
        Ok(Tensor { shape, data: self.data })
    }

    pub fn check_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(op))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        if self.shape != other.shape {
            return Err(Error::shape(format!("elementwise op on {:?} and {:?}", self.shape, other.shape)));
        }
        Ok(Tensor { shape: self.shape.clone(), data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() })
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.zip_map(other, |a, b| a + b)?;
        out.check_finite("add")?;
        Ok(out)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.zip_map(other, |a, b| a * b)?;
        out.check_finite("mul")?;
        Ok(out)
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| U::lit(v.to_f64().expect("finite"))).collect() }
    }

    /// Slice of channels `[start, start + len)` along the last axis.
    pub fn narrow_last(&self, start: usize, len: usize) -> Result<Tensor<T>> {
        let c = self.last_dim();
        if start + len > c || len == 0 {
            return Err(Error::shape(format!("channel range {start}..{} out of 0..{c}", start + len)));
        }
        let mut dims = self.dims().to_vec();
        *dims.last_mut().unwrap() = len;
        let mut data = Vec::with_capacity(self.rows() * len);
        for row in self.data.chunks_exact(c) {
            data.extend_from_slice(&row[start..start + len]);
        }
        Tensor::new(dims, data)
    }

    /// Concatenates tensors along the last axis; leading dims must agree.
    pub fn concat_last(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let first = parts.first().ok_or_else(|| Error::shape("concat of zero tensors"))?;
        let lead = &first.dims()[..first.shape.rank() - 1];
        let mut total = 0;
        for p in parts {
            if &p.dims()[..p.shape.rank() - 1] != lead {
                return Err(Error::shape(format!("concat of {:?} and {:?}", first.shape, p.shape)));
            }
            total += p.last_dim();
        }
        let rows = first.rows();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                let c = p.last_dim();
                data.extend_from_slice(&p.data[r * c..(r + 1) * c]);
            }
        }
        let mut dims = lead.to_vec();
        dims.push(total);
        Tensor::new(dims, data)
    }

    /// Rows `[..., C]` → `[C_out]` per row via `f`.
    pub(crate) fn from_rows(lead: &[usize], cols: usize, data: Vec<T>) -> Result<Tensor<T>> {
        let mut dims = lead.to_vec();
        dims.push(cols);
        Tensor::new(dims, data)
    }

    /// Leading dims (everything but the last axis).
    pub fn lead_dims(&self) -> &[usize] {
        &self.dims()[..self.shape.rank() - 1]
    }
}

/// Standard matrix product of `[m x k]` and `[k x n]`.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = match *a.dims() {
        [m, k] => (m, k),
        _ => return Err(Error::shape(format!("matmul lhs {:?} is not 2-D", a.shape()))),
    };
    let (k2, n) = match *b.dims() {
        [k2, n] => (k2, n),
        _ => return Err(Error::shape(format!("matmul rhs {:?} is not 2-D", b.shape()))),
    };
    if k != k2 {
        return Err(Error::shape(format!("matmul inner dims differ: {:?} x {:?}", a.shape(), b.shape())));
    }
    let mut out = vec![T::zero(); m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            for (o, &bv) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                *o = *o + av * bv;
            }
        }
    }
    let out = Tensor::new(vec![m, n], out)?;
    out.check_finite("matmul")?;
    Ok(out)
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
pub fn silu_scalar<T: Real>(x: T) -> T {
    x * sigmoid(x)
}

/// `log(1 + exp(x))`, linear above 20 to avoid overflow.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::lit(20.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Tanh approximation of GELU.
#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let half = T::lit(0.5);
    half * x * (T::one() + (c * (x + T::lit(0.044715) * x * x * x)).tanh())
}

pub fn silu<T: Real>(t: &Tensor<T>) -> Result<Tensor<T>> {
    t.check_finite("silu input")?;
    let out = t.map(silu_scalar);
    out.check_finite("silu")?;
    Ok(out)
}

fn axis_layout<T: Real>(t: &Tensor<T>, axis: usize) -> Result<(usize, usize, usize)> {
    let dims = t.dims();
    if axis >= dims.len() {
        return Err(Error::shape(format!("axis {axis} out of range for {:?}", t.shape())));
    }
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    Ok((outer, dims[axis], inner))
}

/// Normalizes along `axis` to zero mean / unit variance, then applies the
/// per-position `gain` and `bias` (both of length `dims[axis]`). A constant
/// slice normalizes to exactly zero.
pub fn layer_norm<T: Real>(t: &Tensor<T>, axis: usize, gain: &[T], bias: &[T]) -> Result<Tensor<T>> {
    t.check_finite("layer_norm input")?;
    let (outer, n, inner) = axis_layout(t, axis)?;
    if gain.len() != n || bias.len() != n {
        return Err(Error::shape(format!("layer_norm affine params have length {}/{}, axis has {n}", gain.len(), bias.len())));
    }
    let eps = T::lit(LN_EPS);
    let nf = T::from_usize(n).unwrap();
    let src = t.data();
    let mut out = vec![T::zero(); src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * n + j) * inner + i;
            let mean = (0..n).map(|j| src[idx(j)]).sum::<T>() / nf;
            let var = (0..n)
                .map(|j| {
                    let d = src[idx(j)] - mean;
                    d * d
                })
                .sum::<T>()
                / nf;
            let inv = T::one() / (var + eps).sqrt();
            for j in 0..n {
                out[idx(j)] = (src[idx(j)] - mean) * inv * gain[j] + bias[j];
            }
        }
    }
    let out = Tensor::new(t.dims().to_vec(), out)?;
    out.check_finite("layer_norm")?;
    Ok(out)
}

/// Numerically stable softmax along `axis`.
pub fn softmax<T: Real>(t: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    t.check_finite("softmax input")?;
    let (outer, n, inner) = axis_layout(t, axis)?;
    let src = t.data();
    let mut out = vec![T::zero(); src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * n + j) * inner + i;
            let max = (0..n).map(|j| src[idx(j)]).fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for j in 0..n {
                let e = (src[idx(j)] - max).exp();
                out[idx(j)] = e;
                sum = sum + e;
            }
            for j in 0..n {
                out[idx(j)] = out[idx(j)] / sum;
            }
        }
    }
    let out = Tensor::new(t.dims().to_vec(), out)?;
    out.check_finite("softmax")?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reshape_relabels_row_major() {
        let t = Tensor::new(vec![2, 3], vec![1.0f32, 2., 3., 4., 5., 6.]).unwrap();
        let r = t.clone().reshape(vec![3, 2]).unwrap();
        assert_eq!(r.dims(), &[3, 2]);
        assert_eq!(r.data(), t.data());
        let v = Tensor::new(vec![4], vec![1.0f32, 2., 3., 4.]).unwrap();
        let m = v.reshape(vec![2, 2]).unwrap();
        assert_eq!(m.at(&[1, 0]), 3.0);
        assert!(t.reshape(vec![4]).is_err());
    }

    #[test]
    fn shape_rejects_zero_dims() {
        assert!(Shape::new(vec![]).is_err());
        assert!(Shape::new(vec![2, 0]).is_err());
        assert!(Tensor::<f32>::new(vec![2], vec![1.0]).is_err());
    }

    #[test]
    fn matmul_small_cases() {
        let id = Tensor::new(vec![2, 2], vec![1.0f32, 0., 0., 1.]).unwrap();
        let m = Tensor::new(vec![2, 2], vec![3.0f32, -1., 2., 5.]).unwrap();
        assert_eq!(matmul(&id, &m).unwrap().data(), m.data());
        let a = Tensor::new(vec![1, 2], vec![1.0f32, 2.]).unwrap();
        let b = Tensor::new(vec![2, 1], vec![3.0f32, 4.]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[11.0]);
        assert!(matmul(&a, &a).is_err());
    }

    #[test]
    fn activations() {
        assert_eq!(silu_scalar(0.0f32), 0.0);
        let s = softmax(&Tensor::new(vec![2], vec![0.0f32, 0.0]).unwrap(), 0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let c = Tensor::new(vec![1, 4], vec![3.0f32; 4]).unwrap();
        let ln = layer_norm(&c, 1, &[1.0; 4], &[0.0; 4]).unwrap();
        assert!(ln.data().iter().all(|&v| v == 0.0));
        assert!(softplus(100.0f64) == 100.0);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_middle_axis() {
        // [2, 3, 2] normalized over axis 1.
        let t = Tensor::from_fn(vec![2, 3, 2], |i| (i * i) as f64).unwrap();
        let out = layer_norm(&t, 1, &[1.0; 3], &[0.0; 3]).unwrap();
        for o in 0..2 {
            for i in 0..2 {
                let col: Vec<f64> = (0..3).map(|j| out.at(&[o, j, i])).collect();
                let mean: f64 = col.iter().sum::<f64>() / 3.0;
                assert!(mean.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_is_an_error() {
        let t = Tensor::new(vec![2], vec![f32::NAN, 1.0]).unwrap();
        assert!(matches!(silu(&t), Err(Error::NonFinite(_))));
        let big = Tensor::new(vec![1, 1], vec![f32::MAX]).unwrap();
        assert!(matmul(&big, &Tensor::new(vec![1, 1], vec![2.0]).unwrap()).is_err());
    }

    #[test]
    fn concat_and_narrow() {
        let a = Tensor::new(vec![2, 1], vec![1.0f32, 2.0]).unwrap();
        let b = Tensor::new(vec![2, 2], vec![3.0f32, 4.0, 5.0, 6.0]).unwrap();
        let c = Tensor::concat_last(&[&a, &b]).unwrap();
        assert_eq!(c.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        assert_eq!(c.narrow_last(1, 2).unwrap(), b);
    }
}
