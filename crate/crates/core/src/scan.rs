//! Full-precision state-space core: zero-order-hold discretization, the
//! selective-scan recurrence, its reverse-time adjoint, and the 2-D scan
//! orders that flatten a feature map into sequences.
//!
//! Shapes: `L` sequence positions, `d` channels, `m` state size.
//!
//! ```text
//! Ā[k,j,s] = exp(Δ[k,j] · A[j,s])        B̄[k,j,s] = Δ[k,j] · B[k,s]
//! h_k[j,s] = Ā[k,j,s] · h_{k-1}[j,s] + B̄[k,j,s] · x[k,j]      (h_0 = 0)
//! y[k,j]   = Σ_s C[k,s] · h_k[j,s] + D[j] · x[k,j]
//! ```

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{layer_norm, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScanDirection {
    RowForward,
    RowBackward,
    ColumnForward,
    ColumnBackward,
}

impl ScanDirection {
    pub const ALL: [ScanDirection; 4] =
        [ScanDirection::RowForward, ScanDirection::RowBackward, ScanDirection::ColumnForward, ScanDirection::ColumnBackward];

    pub fn name(self) -> &'static str {
        match self {
            ScanDirection::RowForward => "row_fwd",
            ScanDirection::RowBackward => "row_bwd",
            ScanDirection::ColumnForward => "col_fwd",
            ScanDirection::ColumnBackward => "col_bwd",
        }
    }
}

/// A bijection between sequence positions and pixels of an `H x W` map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScanOrder {
    pub kind: ScanDirection,
    pub h: usize,
    pub w: usize,
}

impl ScanOrder {
    pub fn new(kind: ScanDirection, h: usize, w: usize) -> Self {
        ScanOrder { kind, h, w }
    }

    pub fn len(&self) -> usize {
        self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major pixel index visited at sequence position `k`.
    #[inline]
    pub fn position(&self, k: usize) -> usize {
        let l = self.len();
        let col_major = |k: usize| (k % self.h) * self.w + k / self.h;
        match self.kind {
            ScanDirection::RowForward => k,
            ScanDirection::RowBackward => l - 1 - k,
            ScanDirection::ColumnForward => col_major(k),
            ScanDirection::ColumnBackward => col_major(l - 1 - k),
        }
    }

    pub fn permutation(&self) -> Vec<usize> {
        (0..self.len()).map(|k| self.position(k)).collect()
    }

    fn check(&self, x_rows: usize, what: &str) -> Result<()> {
        if x_rows != self.len() {
            return Err(Error::shape(format!("{what}: {x_rows} positions for a {} x {} scan", self.h, self.w)));
        }
        Ok(())
    }
}

/// `[H x W x d]` → `[L x d]` in scan order.
pub fn apply_scan<T: Real>(order: &ScanOrder, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, d) = x.hwc()?;
    if (h, w) != (order.h, order.w) {
        return Err(Error::shape(format!("apply_scan: {h} x {w} map for a {} x {} order", order.h, order.w)));
    }
    let src = x.data();
    let mut out = Vec::with_capacity(h * w * d);
    for k in 0..order.len() {
        let p = order.position(k);
        out.extend_from_slice(&src[p * d..(p + 1) * d]);
    }
    Tensor::new(vec![order.len(), d], out)
}

/// `[L x d]` → `[H x W x d]`, the inverse of [`apply_scan`].
pub fn invert_scan<T: Real>(order: &ScanOrder, x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.dims().len() != 2 {
        return Err(Error::shape(format!("invert_scan expects [L x d], got {:?}", x.shape())));
    }
    order.check(x.rows(), "invert_scan")?;
    let d = x.last_dim();
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    for k in 0..order.len() {
        let p = order.position(k);
        out[p * d..(p + 1) * d].copy_from_slice(&src[k * d..(k + 1) * d]);
    }
    Tensor::new(vec![order.h, order.w, d], out)
}

/// Parameters of one scan direction for one input sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SsmParams<T = f32> {
    /// Continuous state matrix `[d x m]`.
    pub a: Tensor<T>,
    /// Skip weights `[d]`.
    pub d_skip: Vec<T>,
    /// Input-dependent `[L x m]`.
    pub b: Tensor<T>,
    /// Input-dependent `[L x m]`.
    pub c: Tensor<T>,
    /// Positive step sizes `[L x d]`.
    pub delta: Tensor<T>,
}

impl<T: Real> SsmParams<T> {
    pub fn new(a: Tensor<T>, d_skip: Vec<T>, b: Tensor<T>, c: Tensor<T>, delta: Tensor<T>) -> Result<Self> {
        let p = SsmParams { a, d_skip, b, c, delta };
        p.validate()?;
        Ok(p)
    }

    /// Builds `A = -exp(a_log)`, which keeps every `Ā` inside `(0, 1]`.
    pub fn from_log(a_log: &Tensor<T>, d_skip: Vec<T>, b: Tensor<T>, c: Tensor<T>, delta: Tensor<T>) -> Result<Self> {
        SsmParams::new(a_log.map(|v| -v.exp()), d_skip, b, c, delta)
    }

    pub fn seq_len(&self) -> usize {
        self.delta.dims()[0]
    }

    pub fn hidden(&self) -> usize {
        self.a.dims()[0]
    }

    pub fn state(&self) -> usize {
        self.a.dims()[1]
    }

    fn validate(&self) -> Result<()> {
        let [d, m] = *self.a.dims() else {
            return Err(Error::shape(format!("A must be [d x m], got {:?}", self.a.shape())));
        };
        let [l, dd] = *self.delta.dims() else {
            return Err(Error::shape(format!("delta must be [L x d], got {:?}", self.delta.shape())));
        };
        if dd != d || self.d_skip.len() != d {
            return Err(Error::shape(format!("hidden size mismatch: A has {d}, delta {dd}, D {}", self.d_skip.len())));
        }
        for (name, t) in [("B", &self.b), ("C", &self.c)] {
            if t.dims() != [l, m] {
                return Err(Error::shape(format!("{name} must be [{l} x {m}], got {:?}", t.shape())));
            }
        }
        for (name, t) in [("A", &self.a), ("B", &self.b), ("C", &self.c), ("delta", &self.delta)] {
            if !t.data().iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidValue(format!("{name} has non-finite entries")));
            }
        }
        if !self.d_skip.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidValue("D has non-finite entries".into()));
        }
        if self.delta.data().iter().any(|&v| v <= T::zero()) {
            return Err(Error::InvalidValue("delta must be strictly positive".into()));
        }
        Ok(())
    }
}

/// Zero-order hold: returns `(Ā, B̄)`, both `[L x d x m]`.
pub fn discretize<T: Real>(p: &SsmParams<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    p.validate()?;
    let (l, d, m) = (p.seq_len(), p.hidden(), p.state());
    let (a, b, dt) = (p.a.data(), p.b.data(), p.delta.data());
    let mut a_bar = Vec::with_capacity(l * d * m);
    let mut b_bar = Vec::with_capacity(l * d * m);
    for k in 0..l {
        for j in 0..d {
            let step = dt[k * d + j];
            for s in 0..m {
                a_bar.push((step * a[j * m + s]).exp());
                b_bar.push(step * b[k * m + s]);
            }
        }
    }
    let a_bar = Tensor::new(vec![l, d, m], a_bar)?;
    let b_bar = Tensor::new(vec![l, d, m], b_bar)?;
    a_bar.check_finite("discretize")?;
    b_bar.check_finite("discretize")?;
    Ok((a_bar, b_bar))
}

fn scan_dims<T: Real>(a_bar: &Tensor<T>, b_bar: &Tensor<T>, c: &Tensor<T>, d_skip: &[T], x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let [l, d, m] = *a_bar.dims() else {
        return Err(Error::shape(format!("Ā must be [L x d x m], got {:?}", a_bar.shape())));
    };
    if b_bar.dims() != a_bar.dims() {
        return Err(Error::shape(format!("B̄ {:?} differs from Ā {:?}", b_bar.shape(), a_bar.shape())));
    }
    if c.dims() != [l, m] {
        return Err(Error::shape(format!("C must be [{l} x {m}], got {:?}", c.shape())));
    }
    if x.dims() != [l, d] {
        return Err(Error::shape(format!("x must be [{l} x {d}], got {:?}", x.shape())));
    }
    if d_skip.len() != d {
        return Err(Error::shape(format!("D has {} entries for {d} channels", d_skip.len())));
    }
    Ok((l, d, m))
}

/// Sequential reference scan over materialized `Ā`, `B̄`.
pub fn selective_scan<T: Real>(a_bar: &Tensor<T>, b_bar: &Tensor<T>, c: &Tensor<T>, d_skip: &[T], x: &Tensor<T>) -> Result<Tensor<T>> {
    let (l, d, m) = scan_dims(a_bar, b_bar, c, d_skip, x)?;
    let (ab, bb, cd, xd) = (a_bar.data(), b_bar.data(), c.data(), x.data());
    let mut h = vec![T::zero(); d * m];
    let mut y = vec![T::zero(); l * d];
    for k in 0..l {
        for j in 0..d {
            let xv = xd[k * d + j];
            let mut acc = T::zero();
            for s in 0..m {
                let i = (k * d + j) * m + s;
                let hs = &mut h[j * m + s];
                *hs = ab[i] * *hs + bb[i] * xv;
                acc = acc + cd[k * m + s] * *hs;
            }
            y[k * d + j] = acc + d_skip[j] * xv;
        }
        if !h.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("selective_scan state"));
        }
    }
    let y = Tensor::new(vec![l, d], y)?;
    y.check_finite("selective_scan")?;
    Ok(y)
}

/// Discretization and scan fused per channel, without materializing the
/// `[L x d x m]` tensors; parallel across channels. Matches
/// `selective_scan(discretize(p), ...)`.
pub fn selective_scan_fused<T: Real>(p: &SsmParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (l, d, m) = (p.seq_len(), p.hidden(), p.state());
    if x.dims() != [l, d] {
        return Err(Error::shape(format!("x must be [{l} x {d}], got {:?}", x.shape())));
    }
    let (a, b, c, dt, xd) = (p.a.data(), p.b.data(), p.c.data(), p.delta.data(), x.data());
    let columns: Vec<Option<Vec<T>>> = par::map_range(d, |j| {
        let mut h = vec![T::zero(); m];
        let aj = &a[j * m..(j + 1) * m];
        let mut col = Vec::with_capacity(l);
        for k in 0..l {
            let step = dt[k * d + j];
            let xv = xd[k * d + j];
            let sx = step * xv;
            let (bk, ck) = (&b[k * m..(k + 1) * m], &c[k * m..(k + 1) * m]);
            let mut acc = T::zero();
            for s in 0..m {
                h[s] = (step * aj[s]).exp() * h[s] + bk[s] * sx;
                acc = acc + ck[s] * h[s];
            }
            col.push(acc + p.d_skip[j] * xv);
        }
        h.iter().all(|v| v.is_finite()).then_some(col)
    });
    let mut y = vec![T::zero(); l * d];
    for (j, col) in columns.into_iter().enumerate() {
        let col = col.ok_or(Error::NonFinite("selective_scan state"))?;
        for (k, v) in col.into_iter().enumerate() {
            y[k * d + j] = v;
        }
    }
    let y = Tensor::new(vec![l, d], y)?;
    y.check_finite("selective_scan")?;
    Ok(y)
}

/// Gradients of `Σ dy ⊙ y` with respect to every scan input.
#[derive(Clone, Debug)]
pub struct ScanGrads<T = f32> {
    pub a_bar: Tensor<T>,
    pub b_bar: Tensor<T>,
    pub c: Tensor<T>,
    pub d_skip: Vec<T>,
    pub x: Tensor<T>,
}

/// Reverse-time adjoint of [`selective_scan`].
pub fn selective_scan_adjoint<T: Real>(
    a_bar: &Tensor<T>,
    b_bar: &Tensor<T>,
    c: &Tensor<T>,
    d_skip: &[T],
    x: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<ScanGrads<T>> {
    let (l, d, m) = scan_dims(a_bar, b_bar, c, d_skip, x)?;
    if dy.dims() != x.dims() {
        return Err(Error::shape(format!("dy {:?} must match y {:?}", dy.shape(), x.shape())));
    }
    let (ab, bb, cd, xd, gy) = (a_bar.data(), b_bar.data(), c.data(), x.data(), dy.data());

    // forward pass, keeping every state
    let mut hs = vec![T::zero(); l * d * m];
    for k in 0..l {
        for j in 0..d {
            for s in 0..m {
                let i = (k * d + j) * m + s;
                let prev = if k == 0 { T::zero() } else { hs[i - d * m] };
                hs[i] = ab[i] * prev + bb[i] * xd[k * d + j];
            }
        }
    }

    let mut g_a = vec![T::zero(); l * d * m];
    let mut g_b = vec![T::zero(); l * d * m];
    let mut g_c = vec![T::zero(); l * m];
    let mut g_d = vec![T::zero(); d];
    let mut g_x = vec![T::zero(); l * d];
    // running dL/dh_k per (j, s)
    let mut g_h = vec![T::zero(); d * m];
    for k in (0..l).rev() {
        for j in 0..d {
            let kj = k * d + j;
            let mut gx = d_skip[j] * gy[kj];
            g_d[j] = g_d[j] + gy[kj] * xd[kj];
            for s in 0..m {
                let i = kj * m + s;
                let carried = if k + 1 < l { ab[i + d * m] * g_h[j * m + s] } else { T::zero() };
                let g = gy[kj] * cd[k * m + s] + carried;
                g_h[j * m + s] = g;
                let prev = if k == 0 { T::zero() } else { hs[i - d * m] };
                g_a[i] = g * prev;
                g_b[i] = g * xd[kj];
                gx = gx + g * bb[i];
                g_c[k * m + s] = g_c[k * m + s] + gy[kj] * hs[i];
            }
            g_x[kj] = gx;
        }
    }
    let grads = ScanGrads {
        a_bar: Tensor::new(vec![l, d, m], g_a)?,
        b_bar: Tensor::new(vec![l, d, m], g_b)?,
        c: Tensor::new(vec![l, m], g_c)?,
        d_skip: g_d,
        x: Tensor::new(vec![l, d], g_x)?,
    };
    for t in [&grads.a_bar, &grads.b_bar, &grads.c, &grads.x] {
        t.check_finite("selective_scan_adjoint")?;
    }
    Ok(grads)
}

/// Sums per-direction outputs `[H x W x d]` and layer-normalizes over channels.
pub fn merge_scans<T: Real>(outputs: &[Tensor<T>], gain: &[T], bias: &[T]) -> Result<Tensor<T>> {
    let first = outputs.first().ok_or_else(|| Error::shape("merge_scans needs at least one output"))?;
    let mut sum = first.clone();
    for o in &outputs[1..] {
        sum = sum.add(o)?;
    }
    let axis = sum.dims().len() - 1;
    layer_norm(&sum, axis, gain, bias)
}
