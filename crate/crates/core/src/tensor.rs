//! Dense channel-last tensors and the numeric kernels the layers are built on.
//!
//! Storage is row-major with the channel axis last, so a single image of
//! shape `[H, W, C]` is indexed as `(row * W + col) * C + ch`. Kernels are
//! generic over [`Scalar`]: training runs in `f32`, gradient checking in `f64`.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element type of a [`Tensor`].
pub trait Scalar:
    Copy
    + Debug
    + Default
    + PartialOrd
    + Send
    + Sync
    + 'static
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::AddAssign
    + std::ops::Neg<Output = Self>
{
    const ZERO: Self;
    const ONE: Self;
    const NEG_INFINITY: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn is_finite(self) -> bool;

    /// `c = a·b + beta·c` over strided `[m, k]`, `[k, n]` and `[m, n]` views.
    ///
    /// # Safety
    /// Every strided index must lie inside the buffer the pointer came from.
    #[doc(hidden)]
    #[allow(clippy::too_many_arguments)]
    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        a: (*const Self, isize, isize),
        b: (*const Self, isize, isize),
        beta: Self,
        c: (*mut Self, isize, isize),
    );
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    const NEG_INFINITY: Self = f32::NEG_INFINITY;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }

    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        a: (*const Self, isize, isize),
        b: (*const Self, isize, isize),
        beta: Self,
        c: (*mut Self, isize, isize),
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a.0, a.1, a.2, b.0, b.1, b.2, beta, c.0, c.1, c.2);
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    const NEG_INFINITY: Self = f64::NEG_INFINITY;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }

    unsafe fn raw_gemm(
        m: usize,
        k: usize,
        n: usize,
        a: (*const Self, isize, isize),
        b: (*const Self, isize, isize),
        beta: Self,
        c: (*mut Self, isize, isize),
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a.0, a.1, a.2, b.0, b.1, b.2, beta, c.0, c.1, c.2);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T: Scalar = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("extents must be >= 1, got {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, T::ZERO)
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        assert!(
            !shape.is_empty() && shape.iter().all(|&d| d > 0),
            "invalid shape {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(
            vec![rows.len(), cols],
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
    }

    /// Stacks equally shaped tensors along a new leading dimension.
    pub fn stack(items: &[&Tensor<T>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::Shape("cannot stack zero tensors".into()))?;
        if let Some(bad) = items.iter().find(|t| t.shape != first.shape) {
            return Err(Error::Dimension {
                op: "stack",
                left: first.shape.clone(),
                right: bad.shape.clone(),
            });
        }
        let mut data = Vec::with_capacity(items.len() * first.len());
        for t in items {
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Self::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Interprets the tensor as an image `[H, W, C]`, accepting a leading batch axis of 1.
    pub fn image_dims(&self) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [h, w, c] | [1, h, w, c] => Ok((h, w, c)),
            _ => Err(Error::Shape(format!(
                "expected an image [H, W, C], got {:?}",
                self.shape
            ))),
        }
    }

    /// Concatenates two images of equal height and width along the channel axis.
    pub fn concat_channels(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w, ca) = self.image_dims()?;
        let (h2, w2, cb) = other.image_dims()?;
        if (h, w) != (h2, w2) {
            return Err(Error::Dimension {
                op: "concat_channels",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut data = Vec::with_capacity(h * w * (ca + cb));
        for (pa, pb) in self.data.chunks_exact(ca).zip(other.data.chunks_exact(cb)) {
            data.extend_from_slice(pa);
            data.extend_from_slice(pb);
        }
        Ok(Tensor {
            shape: vec![h, w, ca + cb],
            data,
        })
    }

    /// Rotates a square image a quarter turn counter-clockwise, `quarters` times.
    pub fn rot90(&self, quarters: usize) -> Result<Tensor<T>> {
        let (h, w, c) = self.image_dims()?;
        if h != w {
            return Err(Error::Shape(format!(
                "rotation needs a square image, got {h}x{w}"
            )));
        }
        let n = h;
        let mut cur = self.data.clone();
        for _ in 0..quarters % 4 {
            let mut next = vec![T::ZERO; cur.len()];
            for r in 0..n {
                for col in 0..n {
                    // counter-clockwise: out[r][col] = in[col][n - 1 - r]
                    let src = (col * n + (n - 1 - r)) * c;
                    let dst = (r * n + col) * c;
                    next[dst..dst + c].copy_from_slice(&cur[src..src + c]);
                }
            }
            cur = next;
        }
        Ok(Tensor {
            shape: vec![h, w, c],
            data: cur,
        })
    }
}

fn ensure_finite<T: Scalar>(op: &'static str, data: &[T]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

/// Matrix product of `[M, K]` and `[K, N]`, accumulated in `f64` and rounded once.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (&[m, k], &[k2, n]) = (a.shape(), b.shape()) else {
        return Err(Error::Dimension {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    };
    if k != k2 {
        return Err(Error::Dimension {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let bd: Vec<f64> = b.data.iter().map(|v| v.to_f64()).collect();
    let mut out = Vec::with_capacity(m * n);
    let mut acc = vec![0f64; n];
    for row in a.data.chunks_exact(k) {
        acc.iter_mut().for_each(|x| *x = 0.0);
        for (i, &x) in row.iter().enumerate() {
            let x = x.to_f64();
            for (s, &y) in acc.iter_mut().zip(&bd[i * n..(i + 1) * n]) {
                *s += x * y;
            }
        }
        out.extend(acc.iter().map(|&s| T::from_f64(s)));
    }
    ensure_finite("matmul", &out)?;
    Tensor::new(vec![m, n], out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Same,
    Valid,
}

/// Resolved sizes of one 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    pub fn new(
        (in_h, in_w, in_c): (usize, usize, usize),
        kernel: usize,
        out_c: usize,
        padding: Padding,
        stride: usize,
    ) -> Result<Self> {
        if stride == 0 || kernel == 0 {
            return Err(Error::invalid("kernel size and stride must be >= 1"));
        }
        let (out_h, out_w, pad_top, pad_left) = match padding {
            Padding::Same => {
                if kernel % 2 == 0 {
                    return Err(Error::Shape(format!(
                        "same padding needs an odd kernel, got {kernel}"
                    )));
                }
                let oh = in_h.div_ceil(stride);
                let ow = in_w.div_ceil(stride);
                let ph = ((oh - 1) * stride + kernel).saturating_sub(in_h);
                let pw = ((ow - 1) * stride + kernel).saturating_sub(in_w);
                (oh, ow, ph / 2, pw / 2)
            }
            Padding::Valid => {
                if kernel > in_h || kernel > in_w {
                    return Err(Error::Shape(format!(
                        "kernel {kernel} larger than input {in_h}x{in_w} under valid padding"
                    )));
                }
                ((in_h - kernel) / stride + 1, (in_w - kernel) / stride + 1, 0, 0)
            }
        };
        Ok(ConvGeometry {
            in_h,
            in_w,
            in_c,
            out_h,
            out_w,
            out_c,
            kernel,
            stride,
            pad_top,
            pad_left,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Unfolds the (zero padded) input into a `[positions, k*k*Cin]` matrix
    /// whose column order matches the `[k, k, Cin, Cout]` kernel layout.
    pub fn im2col<T: Scalar>(&self, input: &[T]) -> Vec<T> {
        let mut cols = vec![T::ZERO; self.positions() * self.patch_len()];
        self.im2col_into(input, &mut cols);
        cols
    }

    /// [`ConvGeometry::im2col`] into a zeroed buffer of `positions * patch_len` values.
    pub fn im2col_into<T: Scalar>(&self, input: &[T], cols: &mut [T]) {
        let (k, c) = (self.kernel, self.in_c);
        let plen = self.patch_len();
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let base = (oy * self.out_w + ox) * plen;
                for ky in 0..k {
                    let iy = (oy * self.stride + ky) as isize - self.pad_top as isize;
                    if iy < 0 || iy >= self.in_h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * self.stride + kx) as isize - self.pad_left as isize;
                        if ix < 0 || ix >= self.in_w as isize {
                            continue;
                        }
                        let src = (iy as usize * self.in_w + ix as usize) * c;
                        let dst = base + (ky * k + kx) * c;
                        cols[dst..dst + c].copy_from_slice(&input[src..src + c]);
                    }
                }
            }
        }
    }

    /// Adjoint of [`ConvGeometry::im2col`]: scatters patch gradients back onto the input.
    pub fn col2im<T: Scalar>(&self, cols: &[T]) -> Vec<T> {
        let mut out = vec![T::ZERO; self.in_h * self.in_w * self.in_c];
        self.col2im_into(cols, &mut out);
        out
    }

    /// [`ConvGeometry::col2im`] accumulated into `out`.
    pub fn col2im_into<T: Scalar>(&self, cols: &[T], out: &mut [T]) {
        let (k, c) = (self.kernel, self.in_c);
        let plen = self.patch_len();
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let base = (oy * self.out_w + ox) * plen;
                for ky in 0..k {
                    let iy = (oy * self.stride + ky) as isize - self.pad_top as isize;
                    if iy < 0 || iy >= self.in_h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * self.stride + kx) as isize - self.pad_left as isize;
                        if ix < 0 || ix >= self.in_w as isize {
                            continue;
                        }
                        let dst = (iy as usize * self.in_w + ix as usize) * c;
                        let src = base + (ky * k + kx) * c;
                        for (o, &g) in out[dst..dst + c].iter_mut().zip(&cols[src..src + c]) {
                            *o += g;
                        }
                    }
                }
            }
        }
    }
}

/// `c = op(a) · op(b) (+ c)`, `op` being an optional transpose of a
/// row-major buffer. `a_t` means `a` is stored `[k, m]`; `b_t` means `b` is
/// stored `[n, k]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], a_t: bool, b: &[T], b_t: bool, c: &mut [T], accumulate: bool) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too short");
    if m == 0 || n == 0 {
        return;
    }
    let (m_, k_, n_) = (m as isize, k as isize, n as isize);
    let a_s = if a_t { (1, m_) } else { (k_, 1) };
    let b_s = if b_t { (1, k_) } else { (n_, 1) };
    let beta = if accumulate { T::ONE } else { T::ZERO };
    // SAFETY: the strides address exactly the m·k, k·n and m·n prefixes checked above.
    unsafe {
        T::raw_gemm(
            m,
            k,
            n,
            (a.as_ptr(), a_s.0, a_s.1),
            (b.as_ptr(), b_s.0, b_s.1),
            beta,
            (c.as_mut_ptr(), n_, 1),
        );
    }
}

/// `out[r, :] = bias + a[r, :] · b` for a row-major `[rows, inner]` by `[inner, n]` product.
pub(crate) fn gemm_bias<T: Scalar>(a: &[T], b: &[T], bias: Option<&[T]>, inner: usize, n: usize) -> Vec<T> {
    let rows = a.len() / inner;
    let mut out = vec![T::ZERO; rows * n];
    if let Some(bias) = bias {
        for orow in out.chunks_exact_mut(n) {
            orow.copy_from_slice(bias);
        }
    }
    gemm(rows, inner, n, a, false, b, false, &mut out, bias.is_some());
    out
}

/// `acc += aᵀ · g` where `a` is `[rows, m]` and `g` is `[rows, n]`.
pub(crate) fn gemm_at_b_acc<T: Scalar>(a: &[T], g: &[T], m: usize, n: usize, acc: &mut [T]) {
    let rows = a.len() / m;
    gemm(m, rows, n, a, true, g, false, acc, true);
}

/// `out = g · bᵀ` where `g` is `[rows, n]` and `b` is `[m, n]`.
pub(crate) fn gemm_a_bt<T: Scalar>(g: &[T], b: &[T], m: usize, n: usize) -> Vec<T> {
    let rows = g.len() / n;
    let mut out = vec![T::ZERO; rows * m];
    gemm(rows, n, m, g, false, b, true, &mut out, false);
    out
}

/// 2-D cross-correlation of one `[H, W, Cin]` image with `[k, k, Cin, Cout]` kernels.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &[T],
    padding: Padding,
    stride: usize,
) -> Result<Tensor<T>> {
    let dims = input.image_dims()?;
    let &[k, k2, cin, cout] = kernels.shape() else {
        return Err(Error::Dimension {
            op: "conv2d",
            left: input.shape.clone(),
            right: kernels.shape.clone(),
        });
    };
    if k != k2 || cin != dims.2 || bias.len() != cout {
        return Err(Error::Dimension {
            op: "conv2d",
            left: input.shape.clone(),
            right: kernels.shape.clone(),
        });
    }
    let geom = ConvGeometry::new(dims, k, cout, padding, stride)?;
    let cols = geom.im2col(input.data());
    let out = gemm_bias(&cols, kernels.data(), Some(bias), geom.patch_len(), cout);
    ensure_finite("conv2d", &out)?;
    Tensor::new(vec![geom.out_h, geom.out_w, cout], out)
}

/// Source position of every pooled value, as flat indices into the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndex {
    pub input_shape: Vec<usize>,
    pub argmax: Vec<usize>,
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are padded with −∞.
pub fn maxpool2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndex)> {
    let (h, w, c) = input.image_dims()?;
    let (out, index) = maxpool2_batch(input.data(), input.shape())?;
    Ok((Tensor::new(vec![h.div_ceil(2), w.div_ceil(2), c], out)?, index))
}

/// [`maxpool2`] over an `[H, W, C]` image or an `[N, H, W, C]` batch of
/// images; indices address the whole buffer.
pub fn maxpool2_batch<T: Scalar>(src: &[T], input_shape: &[usize]) -> Result<(Vec<T>, PoolIndex)> {
    let (n, h, w, c) = match *input_shape {
        [h, w, c] => (1, h, w, c),
        [n, h, w, c] => (n, h, w, c),
        _ => return Err(Error::Shape(format!("maxpool expects an image, got {input_shape:?}"))),
    };
    if src.len() != n * h * w * c {
        return Err(Error::Shape(format!("maxpool input has {} values for {input_shape:?}", src.len())));
    }
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut argmax = Vec::with_capacity(n * oh * ow * c);
    for image in 0..n {
        let offset = image * h * w * c;
        for oy in 0..oh {
            for ox in 0..ow {
                // window offsets in row-major order; the first maximum wins ties
                let mut bases = [0usize; 4];
                let mut count = 0;
                for y in (oy * 2)..(oy * 2 + 2).min(h) {
                    for x in (ox * 2)..(ox * 2 + 2).min(w) {
                        bases[count] = offset + (y * w + x) * c;
                        count += 1;
                    }
                }
                let start = out.len();
                out.extend_from_slice(&src[bases[0]..bases[0] + c]);
                argmax.extend(bases[0]..bases[0] + c);
                let (best, idx) = (&mut out[start..], &mut argmax[start..]);
                for &base in &bases[1..count] {
                    for (ch, &v) in src[base..base + c].iter().enumerate() {
                        if v > best[ch] {
                            best[ch] = v;
                            idx[ch] = base + ch;
                        }
                    }
                }
            }
        }
    }
    Ok((
        out,
        PoolIndex {
            input_shape: input_shape.to_vec(),
            argmax,
        },
    ))
}

/// Routes pooled gradients back to the positions that won the max.
pub fn maxpool2_backward<T: Scalar>(grad: &Tensor<T>, index: &PoolIndex) -> Result<Tensor<T>> {
    if grad.len() != index.argmax.len() {
        return Err(Error::Dimension {
            op: "maxpool2_backward",
            left: grad.shape.clone(),
            right: vec![index.argmax.len()],
        });
    }
    let mut out = Tensor::zeros(&index.input_shape);
    for (&g, &i) in grad.data().iter().zip(&index.argmax) {
        out.data[i] += g;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Scale,
    Relu,
    /// Passes the operand through where `a > 0`; `a` is the pre-activation.
    ReluGrad,
}

#[derive(Debug, Clone, Copy)]
pub enum Operand<'a, T: Scalar> {
    Tensor(&'a Tensor<T>),
    Scalar(T),
    None,
}

fn binary<T: Scalar>(a: &Tensor<T>, b: Operand<'_, T>, f: impl Fn(T, T) -> T) -> Result<Vec<T>> {
    match b {
        Operand::Tensor(t) if t.shape == a.shape => Ok(a.data.iter().zip(&t.data).map(|(&x, &y)| f(x, y)).collect()),
        Operand::Tensor(t) => Err(Error::Dimension {
            op: "elementwise",
            left: a.shape.clone(),
            right: t.shape.clone(),
        }),
        Operand::Scalar(s) => Ok(a.data.iter().map(|&x| f(x, s)).collect()),
        Operand::None => Err(Error::invalid("binary elementwise op needs an operand")),
    }
}

pub fn elementwise<T: Scalar>(op: ElementwiseOp, a: &Tensor<T>, b: Operand<'_, T>) -> Result<Tensor<T>> {
    let data = match op {
        ElementwiseOp::Add => binary(a, b, |x, y| x + y)?,
        ElementwiseOp::Sub => binary(a, b, |x, y| x - y)?,
        ElementwiseOp::Mul | ElementwiseOp::Scale => binary(a, b, |x, y| x * y)?,
        ElementwiseOp::Relu => a
            .data
            .iter()
            .map(|&x| if x > T::ZERO { x } else { T::ZERO })
            .collect(),
        ElementwiseOp::ReluGrad => binary(a, b, |x, g| if x > T::ZERO { g } else { T::ZERO })?,
    };
    ensure_finite("elementwise", &data)?;
    Tensor::new(a.shape.clone(), data)
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    elementwise(ElementwiseOp::Add, a, Operand::Tensor(b))
}

pub fn sub<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    elementwise(ElementwiseOp::Sub, a, Operand::Tensor(b))
}

pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    elementwise(ElementwiseOp::Mul, a, Operand::Tensor(b))
}

pub fn scale<T: Scalar>(a: &Tensor<T>, s: T) -> Result<Tensor<T>> {
    elementwise(ElementwiseOp::Scale, a, Operand::Scalar(s))
}

pub fn relu<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    elementwise(ElementwiseOp::Relu, a, Operand::None)
}

pub fn relu_grad<T: Scalar>(pre: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    elementwise(ElementwiseOp::ReluGrad, pre, Operand::Tensor(grad))
}
