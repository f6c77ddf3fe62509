use rand::Rng as _;

use super::{shape_err, NumError, Rng, Scalar, Tensor};

pub struct Conv2dGrads<T> {
    pub input: Tensor<T>,
    pub filters: Tensor<T>,
    pub bias: Tensor<T>,
}

fn conv_dims(
    input: &[usize],
    filters: &[usize],
    bias: usize,
    stride: (usize, usize),
) -> Result<(usize, usize), NumError> {
    if input.len() != 3 || filters.len() != 4 {
        return Err(shape_err(
            "conv2d",
            format!("input {input:?} must be [C,H,W] and filters {filters:?} [O,C,KH,KW]"),
        ));
    }
    let (c, h, w) = (input[0], input[1], input[2]);
    let (o, fc, kh, kw) = (filters[0], filters[1], filters[2], filters[3]);
    if fc != c {
        return Err(shape_err(
            "conv2d",
            format!("filters expect {fc} channels, input has {c}"),
        ));
    }
    if bias != o {
        return Err(shape_err("conv2d", format!("{o} filters but {bias} biases")));
    }
    if kh == 0 || kw == 0 || kh > h || kw > w {
        return Err(shape_err(
            "conv2d",
            format!("filter {kh}x{kw} does not fit input {h}x{w}"),
        ));
    }
    if stride.0 == 0 || stride.1 == 0 {
        return Err(shape_err("conv2d", "stride must be >= 1"));
    }
    Ok(((h - kh) / stride.0 + 1, (w - kw) / stride.1 + 1))
}

/// Dot product with eight independent partial sums, combined in a fixed
/// order so results are reproducible.
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let split = a.len() / 8 * 8;
    for (ca, cb) in a[..split].chunks_exact(8).zip(b[..split].chunks_exact(8)) {
        for k in 0..8 {
            acc[k] += ca[k] * cb[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in a[split..].iter().zip(&b[split..]) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`.
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

struct ConvGeometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    stride: (usize, usize),
}

impl ConvGeometry {
    fn patch_len(&self) -> usize {
        self.c * self.kh * self.kw
    }

    /// Input offset of every patch element, patch-major, in filter order.
    fn patch_offsets(&self) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.ho * self.wo * self.patch_len());
        for oi in 0..self.ho {
            for oj in 0..self.wo {
                for ic in 0..self.c {
                    for ki in 0..self.kh {
                        let row = (ic * self.h + oi * self.stride.0 + ki) * self.w + oj * self.stride.1;
                        idx.extend(row..row + self.kw);
                    }
                }
            }
        }
        idx
    }
}

fn geometry(input: &[usize], filters: &[usize], bias: usize, stride: (usize, usize)) -> Result<ConvGeometry, NumError> {
    let (ho, wo) = conv_dims(input, filters, bias, stride)?;
    Ok(ConvGeometry {
        c: input[0],
        h: input[1],
        w: input[2],
        kh: filters[2],
        kw: filters[3],
        ho,
        wo,
        stride,
    })
}

/// Valid cross-correlation of `input` `[C,H,W]` with `filters` `[O,C,KH,KW]`
/// plus one bias per filter. Returns `[O,Ho,Wo]`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    filters: &Tensor<T>,
    bias: &Tensor<T>,
    stride: (usize, usize),
) -> Result<Tensor<T>, NumError> {
    let g = geometry(input.shape(), filters.shape(), bias.len(), stride)?;
    let o = filters.shape()[0];
    let plen = g.patch_len();
    let x = input.data();
    let patches: Vec<T> = g.patch_offsets().into_iter().map(|i| x[i]).collect();
    let positions = g.ho * g.wo;
    let mut out = Tensor::zeros(&[o, g.ho, g.wo]);
    let y = out.data_mut();
    for (oc, f) in filters.data().chunks_exact(plen).enumerate() {
        let b = bias.data()[oc];
        for (pos, patch) in patches.chunks_exact(plen).enumerate() {
            y[oc * positions + pos] = b + dot(f, patch);
        }
    }
    out.ensure_finite("conv2d")?;
    Ok(out)
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    filters: &Tensor<T>,
    stride: (usize, usize),
    grad_out: &Tensor<T>,
) -> Result<Conv2dGrads<T>, NumError> {
    let o = filters.shape().first().copied().unwrap_or(0);
    let g = geometry(input.shape(), filters.shape(), o, stride)?;
    if grad_out.shape() != [o, g.ho, g.wo] {
        return Err(shape_err(
            "conv2d_backward",
            format!("grad {:?} vs output [{o},{},{}]", grad_out.shape(), g.ho, g.wo),
        ));
    }
    let plen = g.patch_len();
    let positions = g.ho * g.wo;
    let offsets = g.patch_offsets();
    let x = input.data();
    let patches: Vec<T> = offsets.iter().map(|&i| x[i]).collect();
    let go = grad_out.data();

    let mut gf = Tensor::zeros(filters.shape());
    let mut gb = Tensor::zeros(&[o]);
    let mut gpatches = vec![T::zero(); patches.len()];
    for (oc, (f, gfrow)) in filters
        .data()
        .chunks_exact(plen)
        .zip(gf.data_mut().chunks_exact_mut(plen))
        .enumerate()
    {
        let plane = &go[oc * positions..(oc + 1) * positions];
        gb.data_mut()[oc] = plane.iter().fold(T::zero(), |a, &v| a + v);
        for (pos, &gv) in plane.iter().enumerate() {
            if gv == T::zero() {
                continue;
            }
            axpy(gv, &patches[pos * plen..(pos + 1) * plen], gfrow);
            axpy(gv, f, &mut gpatches[pos * plen..(pos + 1) * plen]);
        }
    }
    let mut gx = Tensor::zeros(input.shape());
    let gxd = gx.data_mut();
    for (&i, &v) in offsets.iter().zip(&gpatches) {
        gxd[i] += v;
    }
    Ok(Conv2dGrads {
        input: gx,
        filters: gf,
        bias: gb,
    })
}

/// Result of max pooling over all spatial positions of each channel.
#[derive(Debug, Clone)]
pub struct MaxPool<T> {
    pub values: Tensor<T>,
    /// Flat spatial index of the selected position, per channel.
    pub argmax: Vec<usize>,
    pub input_shape: Vec<usize>,
}

/// Max over every non-channel position of `map` (`[C, ...]`). Ties go to the
/// lowest position index.
pub fn max_over_positions<T: Scalar>(map: &Tensor<T>) -> Result<MaxPool<T>, NumError> {
    let channels = *map
        .shape()
        .first()
        .ok_or_else(|| shape_err("max_over_positions", "scalar input"))?;
    if channels == 0 || map.is_empty() {
        return Err(shape_err("max_over_positions", "empty feature map"));
    }
    let positions = map.len() / channels;
    let mut values = Vec::with_capacity(channels);
    let mut argmax = Vec::with_capacity(channels);
    for ch in map.data().chunks(positions) {
        let mut best = 0;
        for (i, &v) in ch.iter().enumerate().skip(1) {
            if v > ch[best] {
                best = i;
            }
        }
        values.push(ch[best]);
        argmax.push(best);
    }
    Ok(MaxPool {
        values: Tensor::from_vec(values),
        argmax,
        input_shape: map.shape().to_vec(),
    })
}

pub fn max_over_positions_backward<T: Scalar>(pool: &MaxPool<T>, grad: &Tensor<T>) -> Result<Tensor<T>, NumError> {
    if grad.len() != pool.argmax.len() {
        return Err(shape_err(
            "max_over_positions_backward",
            format!("{} grads for {} channels", grad.len(), pool.argmax.len()),
        ));
    }
    let mut out = Tensor::zeros(&pool.input_shape);
    let positions = out.len() / pool.argmax.len();
    let data = out.data_mut();
    for (ch, (&idx, &g)) in pool.argmax.iter().zip(grad.data()).enumerate() {
        data[ch * positions + idx] = g;
    }
    Ok(out)
}

pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// `weight · input + bias` with `weight` stored as `[out, in]`.
pub fn fully_connected<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NumError> {
    let (rows, cols) = dense_dims(input, weight, bias)?;
    let x = input.data();
    let out: Vec<T> = (0..rows)
        .map(|r| {
            let row = &weight.data()[r * cols..(r + 1) * cols];
            dot(row, x) + bias.data()[r]
        })
        .collect();
    let out = Tensor::from_vec(out);
    out.ensure_finite("fully_connected")?;
    Ok(out)
}

pub fn fully_connected_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<DenseGrads<T>, NumError> {
    let rows = weight.shape()[0];
    let cols = input.len();
    if grad_out.len() != rows || weight.len() != rows * cols {
        return Err(shape_err(
            "fully_connected_backward",
            format!("grad {} / weight {:?} / input {}", grad_out.len(), weight.shape(), cols),
        ));
    }
    let mut gx = vec![T::zero(); cols];
    let mut gw = Tensor::zeros(weight.shape());
    let x = input.data();
    let wd = weight.data();
    let gwd = gw.data_mut();
    for (r, &g) in grad_out.data().iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        let wrow = &wd[r * cols..(r + 1) * cols];
        let grow = &mut gwd[r * cols..(r + 1) * cols];
        for c in 0..cols {
            grow[c] = g * x[c];
            gx[c] += g * wrow[c];
        }
    }
    Ok(DenseGrads {
        input: Tensor::from_vec(gx),
        weight: gw,
        bias: grad_out.clone(),
    })
}

fn dense_dims<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<(usize, usize), NumError> {
    if weight.shape().len() != 2 {
        return Err(shape_err(
            "fully_connected",
            format!("weight must be 2-D, got {:?}", weight.shape()),
        ));
    }
    let (rows, cols) = (weight.shape()[0], weight.shape()[1]);
    if cols != input.len() || rows != bias.len() {
        return Err(shape_err(
            "fully_connected",
            format!("weight {rows}x{cols}, input {}, bias {}", input.len(), bias.len()),
        ));
    }
    Ok((rows, cols))
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    out.data_mut()
        .iter_mut()
        .for_each(|v| *v = if *v > T::zero() { *v } else { T::zero() });
    out
}

/// Gradient of relu given its *input*; the derivative at 0 is taken as 0.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    let mut out = grad.clone();
    for (g, &x) in out.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *g = T::zero();
        }
    }
    out
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Gradient of sigmoid given its *output*.
pub fn sigmoid_backward<T: Scalar>(output: T, grad: T) -> T {
    grad * output * (T::one() - output)
}

/// Zeroes each component independently with probability `p`. Surviving
/// components are not rescaled.
pub fn dropout<T: Scalar>(x: &Tensor<T>, p: f64, rng: &mut Rng) -> Result<Tensor<T>, NumError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(NumError::Argument {
            op: "dropout",
            detail: format!("probability {p} outside [0, 1]"),
        });
    }
    let mut out = x.clone();
    if p == 0.0 {
        return Ok(out);
    }
    for v in out.data_mut() {
        if rng.gen_bool(p) {
            *v = T::zero();
        }
    }
    Ok(out)
}
