use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::{Fft, Spectrogram, StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::tensor::{CustomBackward, Tape, Tensor, Var};

/// Smallest overlap-add normaliser accepted by [`istft`].
const COLA_FLOOR: f64 = 1e-8;

/// Reflection about the first and last sample, repeated as often as needed
/// so arbitrarily short signals still pad deterministically.
fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Precomputed FFT and window for one [`StftConfig`].
pub struct StftPlan {
    cfg: StftConfig,
    fft: Fft,
    window: Vec<f64>,
}

impl StftPlan {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(StftPlan {
            cfg,
            fft: Fft::new(cfg.n_fft),
            window: cfg.window.coefficients(cfg.n_fft),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    fn pad(&self) -> usize {
        self.cfg.n_fft / 2
    }

    /// `x`: `[channels, len]` → `[2 * channels, full_bins, frames]`.
    fn analyze(&self, x: &[f64], channels: usize, len: usize) -> Vec<f64> {
        let n = self.cfg.n_fft;
        let (bins, frames) = (self.cfg.full_bins(), self.cfg.frames(len));
        let pad = self.pad() as isize;
        let mut out = vec![0.0; 2 * channels * bins * frames];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..channels {
            let sig = &x[c * len..(c + 1) * len];
            for t in 0..frames {
                let base = (t * self.cfg.hop) as isize - pad;
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = Complex64::new(sig[reflect(base + j as isize, len)] * self.window[j], 0.0);
                }
                self.fft.forward(&buf, &mut spec);
                for (k, v) in spec[..bins].iter().enumerate() {
                    out[((2 * c) * bins + k) * frames + t] = v.re;
                    out[((2 * c + 1) * bins + k) * frames + t] = v.im;
                }
            }
        }
        out
    }

    /// Adjoint of [`StftPlan::analyze`].
    fn analyze_adjoint(&self, g: &[f64], channels: usize, len: usize) -> Vec<f64> {
        let n = self.cfg.n_fft;
        let (bins, frames) = (self.cfg.full_bins(), self.cfg.frames(len));
        let pad = self.pad() as isize;
        let mut gx = vec![0.0; channels * len];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut time = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..channels {
            for t in 0..frames {
                buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
                for k in 0..bins {
                    let re = g[((2 * c) * bins + k) * frames + t];
                    let im = g[((2 * c + 1) * bins + k) * frames + t];
                    buf[k] = Complex64::new(re, -im);
                }
                self.fft.forward(&buf, &mut time);
                let base = (t * self.cfg.hop) as isize - pad;
                for (j, v) in time.iter().enumerate() {
                    gx[c * len + reflect(base + j as isize, len)] += self.window[j] * v.re;
                }
            }
        }
        gx
    }

    fn normalizer(&self, frames: usize) -> Vec<f64> {
        let n = self.cfg.n_fft;
        let mut norm = vec![0.0; (frames - 1) * self.cfg.hop + n];
        for t in 0..frames {
            for (j, w) in self.window.iter().enumerate() {
                norm[t * self.cfg.hop + j] += w * w;
            }
        }
        norm
    }

    fn check_synthesis(&self, shape: &[usize], out_len: usize) -> Result<(usize, usize, Vec<f64>)> {
        if shape.len() != 3 || !shape[0].is_multiple_of(2) || shape[1] != self.cfg.full_bins() || shape[2] == 0 {
            return Err(Error::dim("istft", shape, &[self.cfg.full_bins()]));
        }
        let frames = shape[2];
        let norm = self.normalizer(frames);
        let pad = self.pad();
        if pad + out_len > norm.len() {
            return Err(Error::contract(alloc::format!(
                "istft of {frames} frames cannot produce {out_len} samples"
            )));
        }
        if let Some(i) = norm[pad..pad + out_len].iter().position(|&v| v < COLA_FLOOR) {
            return Err(Error::config(alloc::format!(
                "window/hop pair violates overlap-add coverage at sample {i} (n_fft {}, hop {})",
                self.cfg.n_fft,
                self.cfg.hop
            )));
        }
        Ok((shape[0] / 2, frames, norm))
    }

    /// `[2 * channels, full_bins, frames]` → `[channels, out_len]`.
    fn synthesize(&self, s: &[f64], shape: &[usize], out_len: usize) -> Result<Vec<f64>> {
        let (channels, frames, norm) = self.check_synthesis(shape, out_len)?;
        let n = self.cfg.n_fft;
        let bins = self.cfg.full_bins();
        let pad = self.pad();
        let mut out = vec![0.0; channels * out_len];
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        let mut time = vec![Complex64::new(0.0, 0.0); n];
        let mut ola = vec![0.0; norm.len()];
        for c in 0..channels {
            ola.iter_mut().for_each(|v| *v = 0.0);
            for t in 0..frames {
                for k in 0..bins {
                    let re = s[((2 * c) * bins + k) * frames + t];
                    let im = s[((2 * c + 1) * bins + k) * frames + t];
                    spec[k] = Complex64::new(re, if k == 0 || k == n / 2 { 0.0 } else { im });
                }
                for k in 1..n / 2 {
                    spec[n - k] = spec[k].conj();
                }
                self.fft.inverse_unnormalized(&spec, &mut time);
                for (j, v) in time.iter().enumerate() {
                    ola[t * self.cfg.hop + j] += self.window[j] * v.re / n as f64;
                }
            }
            for i in 0..out_len {
                out[c * out_len + i] = ola[pad + i] / norm[pad + i];
            }
        }
        Ok(out)
    }

    /// Adjoint of [`StftPlan::synthesize`].
    fn synthesize_adjoint(&self, g: &[f64], shape: &[usize], out_len: usize) -> Vec<f64> {
        let (channels, bins, frames) = (shape[0] / 2, shape[1], shape[2]);
        let n = self.cfg.n_fft;
        let pad = self.pad();
        let norm = self.normalizer(frames);
        let mut gs = vec![0.0; shape.iter().product()];
        let mut gola = vec![0.0; norm.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..channels {
            gola.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..out_len {
                gola[pad + i] = g[c * out_len + i] / norm[pad + i];
            }
            for t in 0..frames {
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = Complex64::new(self.window[j] * gola[t * self.cfg.hop + j], 0.0);
                }
                self.fft.forward(&buf, &mut spec);
                for k in 0..bins {
                    let edge = k == 0 || k == n / 2;
                    let scale = if edge { 1.0 } else { 2.0 } / n as f64;
                    gs[((2 * c) * bins + k) * frames + t] = scale * spec[k].re;
                    gs[((2 * c + 1) * bins + k) * frames + t] = if edge { 0.0 } else { scale * spec[k].im };
                }
            }
        }
        gs
    }
}

/// Centre-padded STFT of every channel, all `n_fft / 2 + 1` bins.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    if w.is_empty() {
        return Err(Error::contract("stft of an empty signal"));
    }
    let plan = StftPlan::new(*cfg)?;
    let data = plan.analyze(w.samples(), w.channels(), w.len());
    let t = Tensor::new([2 * w.channels(), cfg.full_bins(), cfg.frames(w.len())], data)?;
    Spectrogram::new(t, *cfg)
}

/// Overlap-add inverse of [`stft`] with squared-window normalisation.
pub fn istft(s: &Spectrogram, out_len: usize, sample_rate: u32) -> Result<Waveform> {
    let plan = StftPlan::new(*s.config())?;
    let data = plan.synthesize(s.data().data(), s.data().shape(), out_len)?;
    Ok(Waveform::from_parts_unchecked(s.audio_channels(), data, sample_rate))
}

/// Keeps the lowest `dim_f` bins.
pub fn freq_cut(s: &Spectrogram, dim_f: usize) -> Result<Spectrogram> {
    let sh = s.data().shape();
    if dim_f > sh[1] {
        return Err(Error::contract(alloc::format!(
            "cannot keep {dim_f} bins of a {}-bin spectrogram",
            sh[1]
        )));
    }
    let (rows, bins, frames) = (sh[0], sh[1], sh[2]);
    let mut out = Vec::with_capacity(rows * dim_f * frames);
    for r in 0..rows {
        out.extend_from_slice(&s.data().data()[r * bins * frames..(r * bins + dim_f) * frames]);
    }
    Spectrogram::new(Tensor::new([rows, dim_f, frames], out)?, *s.config())
}

/// Zero-fills bins `dim_f..full_bins`.
pub fn freq_pad(s: &Spectrogram, full_bins: usize) -> Result<Spectrogram> {
    let sh = s.data().shape();
    if full_bins < sh[1] || full_bins > s.full_bins() {
        return Err(Error::contract(alloc::format!(
            "cannot pad {} bins to {full_bins}",
            sh[1]
        )));
    }
    let (rows, bins, frames) = (sh[0], sh[1], sh[2]);
    let mut out = vec![0.0; rows * full_bins * frames];
    for r in 0..rows {
        out[r * full_bins * frames..(r * full_bins + bins) * frames]
            .copy_from_slice(&s.data().data()[r * bins * frames..(r + 1) * bins * frames]);
    }
    Spectrogram::new(Tensor::new([rows, full_bins, frames], out)?, *s.config())
}

struct StftBackward {
    plan: Arc<StftPlan>,
    channels: usize,
    len: usize,
}

impl CustomBackward for StftBackward {
    fn backward(&self, _: &[&Tensor], _: &Tensor, grad_out: &[f64]) -> Vec<Vec<f64>> {
        vec![self.plan.analyze_adjoint(grad_out, self.channels, self.len)]
    }
}

struct IstftBackward {
    plan: Arc<StftPlan>,
    shape: [usize; 3],
    out_len: usize,
}

impl CustomBackward for IstftBackward {
    fn backward(&self, _: &[&Tensor], _: &Tensor, grad_out: &[f64]) -> Vec<Vec<f64>> {
        vec![self.plan.synthesize_adjoint(grad_out, &self.shape, self.out_len)]
    }
}

/// [`stft`] on a tape; `x` is `[channels, len]`.
pub fn stft_op(tape: &mut Tape, x: Var, plan: &Arc<StftPlan>) -> Result<Var> {
    let shape = tape.shape(x);
    if shape.len() != 2 || shape[1] == 0 {
        return Err(Error::dim("stft", shape, &[]));
    }
    let (channels, len) = (shape[0], shape[1]);
    let cfg = plan.config();
    let data = plan.analyze(tape.value(x).data(), channels, len);
    let out = Tensor::new([2 * channels, cfg.full_bins(), cfg.frames(len)], data)?;
    let rule = StftBackward {
        plan: plan.clone(),
        channels,
        len,
    };
    Ok(tape.custom(&[x], out, Box::new(rule)))
}

/// [`istft`] on a tape; `s` is `[2 * channels, full_bins, frames]`.
pub fn istft_op(tape: &mut Tape, s: Var, plan: &Arc<StftPlan>, out_len: usize) -> Result<Var> {
    let shape: Vec<usize> = tape.shape(s).into();
    let data = plan.synthesize(tape.value(s).data(), &shape, out_len)?;
    let out = Tensor::new([shape[0] / 2, out_len], data)?;
    let rule = IstftBackward {
        plan: plan.clone(),
        shape: [shape[0], shape[1], shape[2]],
        out_len,
    };
    Ok(tape.custom(&[s], out, Box::new(rule)))
}

pub fn freq_cut_op(tape: &mut Tape, s: Var, dim_f: usize) -> Result<Var> {
    tape.narrow(s, 1, 0, dim_f)
}

pub fn freq_pad_op(tape: &mut Tape, s: Var, full_bins: usize) -> Result<Var> {
    tape.zero_pad(s, 1, full_bins)
}
