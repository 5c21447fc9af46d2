use rand::Rng;

use super::nn::{self, ConvShape, DenseShape, KERNEL};
use super::{
    check_shape, normalize_input, CodecConfig, CodecError, LossTerms, ScanCodec, SATURATION,
};
use crate::geom::{LidarIntrinsics, RangeImage};
use crate::scalar::Real;

/// Offsets of every tensor inside the flat parameter vector.
///
/// Declaration order: encoder convolutions 1..S (weight, bias), encoder dense
/// head, decoder dense, decoder transposed convolutions S..1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub enc: Vec<ConvShape>,
    pub enc_fc: DenseShape,
    pub dec_fc: DenseShape,
    /// Indexed like `enc`: `dec[k]` maps stage `k+1` features back to stage `k`.
    pub dec: Vec<ConvShape>,
    pub param_count: usize,
}

impl Layout {
    pub fn new(config: &CodecConfig) -> Self {
        let arch = &config.arch;
        let sizes = arch.spatial_sizes();
        let mut chans = vec![1usize];
        chans.extend(arch.stages.iter().map(|s| s.channels));
        let stage_count = arch.stages.len();
        let shape = |k: usize, offset: usize, bias_len_small: bool| {
            let s = ConvShape {
                big_channels: chans[k],
                small_channels: chans[k + 1],
                big: sizes[k],
                small: sizes[k + 1],
                stride: arch.stages[k].stride,
                weight_offset: offset,
                bias_offset: 0,
            };
            let bias_len = if bias_len_small { chans[k + 1] } else { chans[k] };
            let s = ConvShape {
                bias_offset: offset + s.weight_len(),
                ..s
            };
            (s, offset + s.weight_len() + bias_len)
        };
        let mut off = 0;
        let mut enc = Vec::with_capacity(stage_count);
        for k in 0..stage_count {
            let (s, next) = shape(k, off, true);
            enc.push(s);
            off = next;
        }
        let bott = arch.bottleneck_len();
        let n = arch.latent_dim;
        let dense = |inputs: usize, outputs: usize, offset: usize| {
            let d = DenseShape {
                inputs,
                outputs,
                weight_offset: offset,
                bias_offset: offset + inputs * outputs,
            };
            (d, offset + inputs * outputs + outputs)
        };
        let (enc_fc, next) = dense(bott, 2 * n, off);
        off = next;
        let (dec_fc, next) = dense(n, bott, off);
        off = next;
        let mut dec = vec![enc[0]; stage_count];
        for k in (0..stage_count).rev() {
            let (s, next) = shape(k, off, false);
            dec[k] = s;
            off = next;
        }
        Self {
            enc,
            enc_fc,
            dec_fc,
            dec,
            param_count: off,
        }
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Trace<T> {
    pub enc_pre: Vec<Vec<T>>,
    /// `enc_act[0]` is the input, `enc_act[k + 1] = elu(enc_pre[k])`.
    pub enc_act: Vec<Vec<T>>,
    /// `mu` followed by log-variance.
    pub head: Vec<T>,
    pub eps: Vec<T>,
    pub z: Vec<T>,
    pub dec_fc_pre: Vec<T>,
    /// `dec_in[k + 1]` feeds `dec[k]`; `dec_in[0]` is unused.
    pub dec_in: Vec<Vec<T>>,
    pub dec_pre: Vec<Vec<T>>,
    pub output: Vec<T>,
}

/// Variational autoencoder over normalized range images with parameters in a
/// single flat buffer.
#[derive(Debug, Clone)]
pub struct Vae<T> {
    pub config: CodecConfig,
    pub layout: Layout,
    pub params: Vec<T>,
}

impl<T: Real> Vae<T> {
    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(config: CodecConfig, rng: &mut R) -> Self {
        let layout = Layout::new(&config);
        let mut params = vec![T::zero(); layout.param_count];
        let mut fill = |ranges: [(usize, usize); 2], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for (offset, len) in ranges {
                for p in &mut params[offset..offset + len] {
                    *p = T::lit(rng.random_range(-bound..bound));
                }
            }
        };
        let taps = KERNEL * KERNEL;
        for s in &layout.enc {
            fill(
                [(s.weight_offset, s.weight_len()), (s.bias_offset, s.small_channels)],
                s.big_channels * taps,
            );
        }
        for f in [layout.enc_fc, layout.dec_fc] {
            fill([(f.weight_offset, f.weight_len()), (f.bias_offset, f.outputs)], f.inputs);
        }
        for s in layout.dec.iter().rev() {
            fill(
                [(s.weight_offset, s.weight_len()), (s.bias_offset, s.big_channels)],
                s.big_channels * taps,
            );
        }
        Self {
            config,
            layout,
            params,
        }
    }

    pub fn from_params(config: CodecConfig, params: Vec<T>) -> Result<Self, CodecError> {
        let layout = Layout::new(&config);
        if params.len() != layout.param_count {
            return Err(CodecError::LengthMismatch {
                expected: layout.param_count,
                got: params.len(),
            });
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn cast<U: Real>(&self) -> Vae<U> {
        Vae {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|p| p.cast()).collect(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.config.arch.latent_dim
    }

    fn check_input(&self, len: usize) -> Result<(), CodecError> {
        let n = self.config.arch.pixel_count();
        if len != n {
            return Err(CodecError::LengthMismatch {
                expected: n,
                got: len,
            });
        }
        Ok(())
    }

    fn check_latent(&self, len: usize) -> Result<(), CodecError> {
        if len != self.latent_dim() {
            return Err(CodecError::LengthMismatch {
                expected: self.latent_dim(),
                got: len,
            });
        }
        Ok(())
    }

    fn encode_trace(&self, input: &[T]) -> (Vec<Vec<T>>, Vec<Vec<T>>, Vec<T>) {
        let mut enc_pre = Vec::with_capacity(self.layout.enc.len());
        let mut enc_act = vec![input.to_vec()];
        for s in &self.layout.enc {
            let mut pre = vec![T::zero(); s.small_len()];
            nn::conv_forward(s, &self.params, enc_act.last().expect("input"), &mut pre);
            enc_act.push(pre.iter().map(|&v| nn::elu(v)).collect());
            enc_pre.push(pre);
        }
        let mut head = vec![T::zero(); self.layout.enc_fc.outputs];
        nn::dense_forward(
            &self.layout.enc_fc,
            &self.params,
            enc_act.last().expect("bottleneck"),
            &mut head,
        );
        (enc_pre, enc_act, head)
    }

    fn decode_trace(&self, z: &[T]) -> (Vec<T>, Vec<Vec<T>>, Vec<Vec<T>>, Vec<T>) {
        let stages = self.layout.dec.len();
        let mut fc_pre = vec![T::zero(); self.layout.dec_fc.outputs];
        nn::dense_forward(&self.layout.dec_fc, &self.params, z, &mut fc_pre);
        let mut dec_in = vec![Vec::new(); stages + 1];
        let mut dec_pre = vec![Vec::new(); stages];
        dec_in[stages] = fc_pre.iter().map(|&v| nn::relu(v)).collect();
        for k in (0..stages).rev() {
            let s = &self.layout.dec[k];
            let mut pre = vec![T::zero(); s.big_len()];
            nn::conv_t_forward(s, &self.params, &dec_in[k + 1], &mut pre);
            if k > 0 {
                dec_in[k] = pre.iter().map(|&v| nn::relu(v)).collect();
            }
            dec_pre[k] = pre;
        }
        let output = dec_pre[0].iter().map(|&v| nn::sigmoid(v)).collect();
        (fc_pre, dec_in, dec_pre, output)
    }

    /// Mean and log-variance for a normalized input.
    pub fn encode_normalized(&self, input: &[T]) -> Result<(Vec<T>, Vec<T>), CodecError> {
        self.check_input(input.len())?;
        let (_, _, head) = self.encode_trace(input);
        let n = self.latent_dim();
        Ok((head[..n].to_vec(), head[n..].to_vec()))
    }

    /// `(mu, sigma)` for a raw range image.
    pub fn encode(&self, img: &RangeImage<f32>) -> Result<(Vec<T>, Vec<T>), CodecError> {
        check_shape(&self.config.intrinsics, img)?;
        let (mu, logvar) = self.encode_normalized(&normalize_input(img))?;
        let half = T::lit(0.5);
        Ok((mu, logvar.iter().map(|&lv| (half * lv).exp()).collect()))
    }

    /// Normalized reconstruction in `[0, 1]`.
    pub fn decode_normalized(&self, z: &[T]) -> Result<Vec<T>, CodecError> {
        self.check_latent(z.len())?;
        Ok(self.decode_trace(z).3)
    }

    /// Reconstructed voxel-aware image; saturated pixels become invalid.
    pub fn decode(&self, z: &[T]) -> Result<RangeImage<f32>, CodecError> {
        let out = self.decode_normalized(z)?;
        Ok(denormalize(&self.config.intrinsics, &out))
    }

    /// Forward pass; `eps = None` uses `z = mu`.
    pub(crate) fn forward(&self, input: &[T], eps: Option<&[T]>) -> Trace<T> {
        let n = self.latent_dim();
        let (enc_pre, enc_act, head) = self.encode_trace(input);
        let eps = eps.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
        let half = T::lit(0.5);
        let z: Vec<T> = (0..n)
            .map(|i| head[i] + (half * head[n + i]).exp() * eps[i])
            .collect();
        let (dec_fc_pre, dec_in, dec_pre, output) = self.decode_trace(&z);
        Trace {
            enc_pre,
            enc_act,
            head,
            eps,
            z,
            dec_fc_pre,
            dec_in,
            dec_pre,
            output,
        }
    }

    pub(crate) fn trace_loss(
        &self,
        trace: &Trace<T>,
        target: &[T],
        valid: &[bool],
        beta_norm: T,
    ) -> Result<LossTerms<T>, CodecError> {
        let n = self.latent_dim();
        let mut count = 0usize;
        let mut sum = T::zero();
        for ((&y, &t), &v) in trace.output.iter().zip(target).zip(valid) {
            if v {
                sum += (y - t) * (y - t);
                count += 1;
            }
        }
        if count == 0 {
            return Err(CodecError::AllPixelsInvalid);
        }
        let recon = sum / T::from_usize_lossy(count);
        let half = T::lit(0.5);
        let kl = -half
            * (0..n)
                .map(|i| {
                    let (m, lv) = (trace.head[i], trace.head[n + i]);
                    T::one() + lv - m * m - lv.exp()
                })
                .sum::<T>();
        Ok(LossTerms {
            total: recon + beta_norm * kl,
            recon,
            kl,
        })
    }

    /// Accumulates `scale · ∂L/∂params` for one traced sample into `grad`.
    pub(crate) fn backward(
        &self,
        trace: &Trace<T>,
        target: &[T],
        valid: &[bool],
        beta_norm: T,
        scale: T,
        grad: &mut [T],
    ) {
        let n = self.latent_dim();
        let stages = self.layout.enc.len();
        let count = valid.iter().filter(|&&v| v).count();
        let two_over_n = T::lit(2.0) * scale / T::from_usize_lossy(count.max(1));

        let mut d_pre: Vec<T> = trace
            .output
            .iter()
            .zip(target)
            .zip(valid)
            .map(|((&y, &t), &v)| {
                if v {
                    two_over_n * (y - t) * y * (T::one() - y)
                } else {
                    T::zero()
                }
            })
            .collect();
        for k in 0..stages {
            let s = &self.layout.dec[k];
            let mut d_in = vec![T::zero(); s.small_len()];
            nn::conv_t_backward(s, &self.params, &trace.dec_in[k + 1], &d_pre, grad, Some(&mut d_in));
            let pre = if k + 1 < stages {
                &trace.dec_pre[k + 1]
            } else {
                &trace.dec_fc_pre
            };
            d_pre = d_in
                .iter()
                .zip(pre)
                .map(|(&d, &p)| d * nn::relu_grad(p))
                .collect();
        }
        let mut dz = vec![T::zero(); n];
        nn::dense_backward(&self.layout.dec_fc, &self.params, &trace.z, &d_pre, grad, Some(&mut dz));

        let half = T::lit(0.5);
        let kl_scale = beta_norm * scale;
        let mut d_head = vec![T::zero(); 2 * n];
        for i in 0..n {
            let (m, lv) = (trace.head[i], trace.head[n + i]);
            let sigma = (half * lv).exp();
            d_head[i] = dz[i] + kl_scale * m;
            d_head[n + i] =
                dz[i] * trace.eps[i] * half * sigma + kl_scale * half * (lv.exp() - T::one());
        }
        let mut d_act = vec![T::zero(); self.layout.enc_fc.inputs];
        nn::dense_backward(
            &self.layout.enc_fc,
            &self.params,
            &trace.enc_act[stages],
            &d_head,
            grad,
            Some(&mut d_act),
        );
        for k in (0..stages).rev() {
            let s = &self.layout.enc[k];
            let d_pre: Vec<T> = d_act
                .iter()
                .zip(&trace.enc_pre[k])
                .map(|(&d, &p)| d * nn::elu_grad(p))
                .collect();
            if k > 0 {
                let mut d_in = vec![T::zero(); s.big_len()];
                nn::conv_backward(s, &self.params, &trace.enc_act[k], &d_pre, grad, Some(&mut d_in));
                d_act = d_in;
            } else {
                nn::conv_backward(s, &self.params, &trace.enc_act[k], &d_pre, grad, None);
            }
        }
    }
}

pub(crate) fn denormalize<T: Real>(intr: &LidarIntrinsics<f32>, out: &[T]) -> RangeImage<f32> {
    let r = intr.max_range as f64;
    let ranges = out
        .iter()
        .map(|&v| {
            let v = v.as_f64();
            if v >= SATURATION || v <= 0.0 {
                f32::NAN
            } else {
                let range = (v * r) as f32;
                if range > 0.0 && range <= intr.max_range {
                    range
                } else {
                    f32::NAN
                }
            }
        })
        .collect();
    RangeImage::from_ranges(*intr, ranges).expect("decoded ranges within (0, max_range]")
}

/// [`ScanCodec`] view of a trained VAE: the latent is the encoder mean.
#[derive(Debug, Clone)]
pub struct VaeCodec {
    pub vae: Vae<f32>,
}

impl VaeCodec {
    pub fn new(vae: Vae<f32>) -> Self {
        Self { vae }
    }
}

impl ScanCodec for VaeCodec {
    fn name(&self) -> String {
        format!("vae{}", self.vae.latent_dim())
    }

    fn intrinsics(&self) -> &LidarIntrinsics<f32> {
        &self.vae.config.intrinsics
    }

    fn fixed_latent_len(&self) -> Option<usize> {
        Some(self.vae.latent_dim())
    }

    fn encode(&self, raw: &RangeImage<f32>) -> Result<Vec<f32>, CodecError> {
        Ok(self.vae.encode(raw)?.0)
    }

    fn decode(&self, latent: &[f32]) -> Result<RangeImage<f32>, CodecError> {
        self.vae.decode(latent)
    }
}
