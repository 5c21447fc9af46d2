//! Minimal CHW convolution, transposed convolution and dense kernels over flat
//! parameter buffers. Kernels are 3×3 with padding 1.

use crate::scalar::Real;

pub const KERNEL: usize = 3;
const PAD: usize = 1;

/// Geometry of a strided 3×3 convolution between a `big` and a `small` feature map.
/// A forward convolution maps big → small; its transpose maps small → big.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub big_channels: usize,
    pub small_channels: usize,
    pub big: (usize, usize),
    pub small: (usize, usize),
    pub stride: (usize, usize),
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl ConvShape {
    pub fn out_len(size: usize, stride: usize) -> usize {
        (size - 1) / stride + 1
    }

    pub fn weight_len(&self) -> usize {
        self.big_channels * self.small_channels * KERNEL * KERNEL
    }

    pub fn big_len(&self) -> usize {
        self.big_channels * self.big.0 * self.big.1
    }

    pub fn small_len(&self) -> usize {
        self.small_channels * self.small.0 * self.small.1
    }

    /// Valid output index range along one axis for kernel tap `k`: the small-map
    /// positions `y` with `0 <= y*stride + k - PAD < big`.
    #[inline]
    fn tap_range(small: usize, big: usize, stride: usize, k: usize) -> (usize, usize) {
        let lo = if k < PAD { (PAD - k).div_ceil(stride) } else { 0 };
        // y*stride + k - PAD <= big - 1  =>  y <= (big - 1 + PAD - k) / stride
        let top = big - 1 + PAD;
        if top < k {
            return (0, 0);
        }
        let hi = ((top - k) / stride + 1).min(small);
        (lo.min(hi), hi)
    }
}

/// Forward convolution: `big` input (channels `big_channels`) → `small` output.
/// Weight layout `[out=small_channels][in=big_channels][ky][kx]`.
pub fn conv_forward<T: Real>(s: &ConvShape, params: &[T], input: &[T], out: &mut [T]) {
    let (bh, bw) = s.big;
    let (sh, sw) = s.small;
    let (st_y, st_x) = s.stride;
    let w = &params[s.weight_offset..s.weight_offset + s.weight_len()];
    let b = &params[s.bias_offset..s.bias_offset + s.small_channels];
    for o in 0..s.small_channels {
        out[o * sh * sw..(o + 1) * sh * sw].fill(b[o]);
    }
    for o in 0..s.small_channels {
        let out_o = &mut out[o * sh * sw..(o + 1) * sh * sw];
        for c in 0..s.big_channels {
            let in_c = &input[c * bh * bw..(c + 1) * bh * bw];
            for ky in 0..KERNEL {
                let (y0, y1) = ConvShape::tap_range(sh, bh, st_y, ky);
                for kx in 0..KERNEL {
                    let wv = w[((o * s.big_channels + c) * KERNEL + ky) * KERNEL + kx];
                    let (x0, x1) = ConvShape::tap_range(sw, bw, st_x, kx);
                    for y in y0..y1 {
                        let iy = y * st_y + ky - PAD;
                        let row_in = &in_c[iy * bw..(iy + 1) * bw];
                        let row_out = &mut out_o[y * sw..(y + 1) * sw];
                        for x in x0..x1 {
                            row_out[x] += wv * row_in[x * st_x + kx - PAD];
                        }
                    }
                }
            }
        }
    }
}

/// Backward of [`conv_forward`]: accumulates weight/bias gradients into `grad`
/// and, if requested, writes the input gradient.
pub fn conv_backward<T: Real>(
    s: &ConvShape,
    params: &[T],
    input: &[T],
    d_out: &[T],
    grad: &mut [T],
    d_input: Option<&mut [T]>,
) {
    let (bh, bw) = s.big;
    let (sh, sw) = s.small;
    let (st_y, st_x) = s.stride;
    let w = &params[s.weight_offset..s.weight_offset + s.weight_len()];
    for o in 0..s.small_channels {
        let sum: T = d_out[o * sh * sw..(o + 1) * sh * sw].iter().copied().sum();
        grad[s.bias_offset + o] += sum;
    }
    let mut d_input = d_input;
    if let Some(di) = d_input.as_deref_mut() {
        di.fill(T::zero());
    }
    for o in 0..s.small_channels {
        let dout_o = &d_out[o * sh * sw..(o + 1) * sh * sw];
        for c in 0..s.big_channels {
            let in_c = &input[c * bh * bw..(c + 1) * bh * bw];
            for ky in 0..KERNEL {
                let (y0, y1) = ConvShape::tap_range(sh, bh, st_y, ky);
                for kx in 0..KERNEL {
                    let wi = ((o * s.big_channels + c) * KERNEL + ky) * KERNEL + kx;
                    let (x0, x1) = ConvShape::tap_range(sw, bw, st_x, kx);
                    let mut gw = T::zero();
                    for y in y0..y1 {
                        let iy = y * st_y + ky - PAD;
                        let row_in = &in_c[iy * bw..(iy + 1) * bw];
                        let row_d = &dout_o[y * sw..(y + 1) * sw];
                        for x in x0..x1 {
                            gw += row_d[x] * row_in[x * st_x + kx - PAD];
                        }
                    }
                    grad[s.weight_offset + wi] += gw;
                    if let Some(di) = d_input.as_deref_mut() {
                        let wv = w[wi];
                        let di_c = &mut di[c * bh * bw..(c + 1) * bh * bw];
                        for y in y0..y1 {
                            let iy = y * st_y + ky - PAD;
                            let row_d = &dout_o[y * sw..(y + 1) * sw];
                            let row_di = &mut di_c[iy * bw..(iy + 1) * bw];
                            for x in x0..x1 {
                                row_di[x * st_x + kx - PAD] += wv * row_d[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Transposed convolution: `small` input (channels `small_channels`) → `big`
/// output (channels `big_channels`). Weight layout `[in=small][out=big][ky][kx]`.
pub fn conv_t_forward<T: Real>(s: &ConvShape, params: &[T], input: &[T], out: &mut [T]) {
    let (bh, bw) = s.big;
    let (sh, sw) = s.small;
    let (st_y, st_x) = s.stride;
    let w = &params[s.weight_offset..s.weight_offset + s.weight_len()];
    let b = &params[s.bias_offset..s.bias_offset + s.big_channels];
    for o in 0..s.big_channels {
        out[o * bh * bw..(o + 1) * bh * bw].fill(b[o]);
    }
    for i in 0..s.small_channels {
        let in_i = &input[i * sh * sw..(i + 1) * sh * sw];
        for o in 0..s.big_channels {
            let out_o = &mut out[o * bh * bw..(o + 1) * bh * bw];
            for ky in 0..KERNEL {
                let (y0, y1) = ConvShape::tap_range(sh, bh, st_y, ky);
                for kx in 0..KERNEL {
                    let wv = w[((i * s.big_channels + o) * KERNEL + ky) * KERNEL + kx];
                    let (x0, x1) = ConvShape::tap_range(sw, bw, st_x, kx);
                    for y in y0..y1 {
                        let oy = y * st_y + ky - PAD;
                        let row_in = &in_i[y * sw..(y + 1) * sw];
                        let row_out = &mut out_o[oy * bw..(oy + 1) * bw];
                        for x in x0..x1 {
                            row_out[x * st_x + kx - PAD] += wv * row_in[x];
                        }
                    }
                }
            }
        }
    }
}

/// Backward of [`conv_t_forward`].
pub fn conv_t_backward<T: Real>(
    s: &ConvShape,
    params: &[T],
    input: &[T],
    d_out: &[T],
    grad: &mut [T],
    d_input: Option<&mut [T]>,
) {
    let (bh, bw) = s.big;
    let (sh, sw) = s.small;
    let (st_y, st_x) = s.stride;
    let w = &params[s.weight_offset..s.weight_offset + s.weight_len()];
    for o in 0..s.big_channels {
        let sum: T = d_out[o * bh * bw..(o + 1) * bh * bw].iter().copied().sum();
        grad[s.bias_offset + o] += sum;
    }
    let mut d_input = d_input;
    if let Some(di) = d_input.as_deref_mut() {
        di.fill(T::zero());
    }
    for i in 0..s.small_channels {
        let in_i = &input[i * sh * sw..(i + 1) * sh * sw];
        for o in 0..s.big_channels {
            let dout_o = &d_out[o * bh * bw..(o + 1) * bh * bw];
            for ky in 0..KERNEL {
                let (y0, y1) = ConvShape::tap_range(sh, bh, st_y, ky);
                for kx in 0..KERNEL {
                    let wi = ((i * s.big_channels + o) * KERNEL + ky) * KERNEL + kx;
                    let (x0, x1) = ConvShape::tap_range(sw, bw, st_x, kx);
                    let wv = w[wi];
                    let mut gw = T::zero();
                    for y in y0..y1 {
                        let oy = y * st_y + ky - PAD;
                        let row_in = &in_i[y * sw..(y + 1) * sw];
                        let row_d = &dout_o[oy * bw..(oy + 1) * bw];
                        for x in x0..x1 {
                            gw += row_d[x * st_x + kx - PAD] * row_in[x];
                        }
                    }
                    grad[s.weight_offset + wi] += gw;
                    if let Some(di) = d_input.as_deref_mut() {
                        let di_i = &mut di[i * sh * sw..(i + 1) * sh * sw];
                        for y in y0..y1 {
                            let oy = y * st_y + ky - PAD;
                            let row_d = &dout_o[oy * bw..(oy + 1) * bw];
                            let row_di = &mut di_i[y * sw..(y + 1) * sw];
                            for x in x0..x1 {
                                row_di[x] += wv * row_d[x * st_x + kx - PAD];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseShape {
    pub inputs: usize,
    pub outputs: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl DenseShape {
    pub fn weight_len(&self) -> usize {
        self.inputs * self.outputs
    }
}

/// `out = W·x + b`, `W` row-major `[outputs][inputs]`.
pub fn dense_forward<T: Real>(s: &DenseShape, params: &[T], input: &[T], out: &mut [T]) {
    let w = &params[s.weight_offset..s.weight_offset + s.weight_len()];
    let b = &params[s.bias_offset..s.bias_offset + s.outputs];
    for (o, slot) in out.iter_mut().enumerate().take(s.outputs) {
        let row = &w[o * s.inputs..(o + 1) * s.inputs];
        let mut acc = b[o];
        for (wv, xv) in row.iter().zip(input) {
            acc += *wv * *xv;
        }
        *slot = acc;
    }
}

pub fn dense_backward<T: Real>(
    s: &DenseShape,
    params: &[T],
    input: &[T],
    d_out: &[T],
    grad: &mut [T],
    d_input: Option<&mut [T]>,
) {
    for o in 0..s.outputs {
        let g = d_out[o];
        grad[s.bias_offset + o] += g;
        let gw = &mut grad[s.weight_offset + o * s.inputs..s.weight_offset + (o + 1) * s.inputs];
        for (gwv, xv) in gw.iter_mut().zip(input) {
            *gwv += g * *xv;
        }
    }
    if let Some(di) = d_input {
        let w = &params[s.weight_offset..s.weight_offset + s.weight_len()];
        di.fill(T::zero());
        for o in 0..s.outputs {
            let g = d_out[o];
            let row = &w[o * s.inputs..(o + 1) * s.inputs];
            for (d, wv) in di.iter_mut().zip(row) {
                *d += g * *wv;
            }
        }
    }
}

#[inline]
pub fn elu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

/// ELU derivative expressed through the pre-activation.
#[inline]
pub fn elu_grad<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        x.exp()
    }
}

#[inline]
pub fn relu<T: Real>(x: T) -> T {
    x.max(T::zero())
}

#[inline]
pub fn relu_grad<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        T::zero()
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
