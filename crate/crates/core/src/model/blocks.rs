use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use super::init::he_uniform;
use crate::error::{Error, Result};
use crate::tensor::{Module, Parameter, Tape, Tensor, Var};

/// Two linear layers along the frequency axis with a `ceil(F / bn)` bottleneck.
///
/// Operates on `[channels, bins, frames]`; every (channel, frame) column is
/// mapped by the same weights. A relu sits between the layers, nothing
/// follows the second, and there is no residual path.
#[derive(Clone, Debug, PartialEq)]
pub struct TdfBlock {
    name: String,
    bins: usize,
    bn: usize,
    w1: Parameter,
    b1: Parameter,
    w2: Parameter,
    b2: Parameter,
}

impl TdfBlock {
    pub fn hidden_size(bins: usize, bn: usize) -> usize {
        bins.div_ceil(bn)
    }

    pub fn new(name: &str, bins: usize, bn: usize, rng: &mut ChaCha8Rng) -> Self {
        let h = Self::hidden_size(bins, bn);
        let w1 = Tensor::new([h, bins], he_uniform(rng, h * bins, bins)).unwrap();
        let w2 = Tensor::new([bins, h], he_uniform(rng, bins * h, h)).unwrap();
        Self::from_tensors(name, bn, w1, Tensor::zeros([h]), w2, Tensor::zeros([bins])).unwrap()
    }

    pub fn from_tensors(name: &str, bn: usize, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Result<Self> {
        let (h, bins) = match w1.shape() {
            [h, f] => (*h, *f),
            s => return Err(Error::dim("tdf w1", s, &[2])),
        };
        if w2.shape() != [bins, h] || b1.shape() != [h] || b2.shape() != [bins] {
            return Err(Error::dim("tdf w2", w2.shape(), &[bins, h]));
        }
        Ok(TdfBlock {
            name: name.into(),
            bins,
            bn,
            w1: Parameter::new(format!("{name}.w1"), w1),
            b1: Parameter::new(format!("{name}.b1"), b1),
            w2: Parameter::new(format!("{name}.w2"), w2),
            b2: Parameter::new(format!("{name}.b2"), b2),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn bottleneck_factor(&self) -> usize {
        self.bn
    }

    pub fn hidden(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let s = tape.shape(x);
        if s.len() != 3 || s[1] != self.bins {
            return Err(Error::dim("tdf", s, &[self.bins]));
        }
        let xt = tape.swap_last2(x)?;
        let (w1, b1) = (tape.param(&self.w1), tape.param(&self.b1));
        let (w2, b2) = (tape.param(&self.w2), tape.param(&self.b2));
        let h = tape.linear(xt, w1, b1)?;
        let h = tape.relu(h);
        let y = tape.linear(h, w2, b2)?;
        tape.swap_last2(y)
    }

    /// The `F x F` product `W2 * W1`, row-major.
    pub fn composed(&self) -> Vec<f64> {
        let (f, h) = (self.bins, self.hidden());
        let (w1, w2) = (self.w1.tensor().data(), self.w2.tensor().data());
        let mut out = vec![0.0; f * f];
        for i in 0..f {
            for k in 0..h {
                let a = w2[i * h + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..f {
                    out[i * f + j] += a * w1[k * f + j];
                }
            }
        }
        out
    }
}

impl Module for TdfBlock {
    fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// A stack of 3x3, stride-1, padding-1 convolutions, each followed by relu.
#[derive(Clone, Debug, PartialEq)]
pub struct TfcBlock {
    convs: Vec<Parameter>,
}

impl TfcBlock {
    pub fn new(name: &str, c_in: usize, c_out: usize, num_convs: usize, rng: &mut ChaCha8Rng) -> Self {
        let convs = (0..num_convs)
            .map(|i| {
                let ci = if i == 0 { c_in } else { c_out };
                let k = Tensor::new([c_out, ci, 3, 3], he_uniform(rng, c_out * ci * 9, ci * 9)).unwrap();
                Parameter::new(format!("{name}.conv{i}"), k)
            })
            .collect();
        TfcBlock { convs }
    }

    pub fn num_convs(&self) -> usize {
        self.convs.len()
    }

    pub fn out_channels(&self) -> usize {
        self.convs.last().map_or(0, |k| k.shape()[0])
    }

    pub fn forward(&self, tape: &mut Tape, mut x: Var) -> Result<Var> {
        for k in &self.convs {
            let kv = tape.param(k);
            let y = tape.conv2d(x, kv, (1, 1), (1, 1))?;
            x = tape.relu(y);
        }
        Ok(x)
    }
}

impl Module for TfcBlock {
    fn parameters(&self) -> Vec<&Parameter> {
        self.convs.iter().collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.convs.iter_mut().collect()
    }
}

/// Time-frequency convolutions followed by a TDF.
#[derive(Clone, Debug, PartialEq)]
pub struct TfcTdfBlock {
    pub tfc: TfcBlock,
    pub tdf: TdfBlock,
}

impl TfcTdfBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        num_convs: usize,
        bins: usize,
        bn: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let tfc = TfcBlock::new(&format!("{name}.tfc"), c_in, c_out, num_convs, rng);
        let tdf = TdfBlock::new(&format!("{name}.tdf"), bins, bn, rng);
        TfcTdfBlock { tfc, tdf }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let y = self.tfc.forward(tape, x)?;
        self.tdf.forward(tape, y)
    }
}

impl Module for TfcTdfBlock {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut v = self.tfc.parameters();
        v.extend(self.tdf.parameters());
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = self.tfc.parameters_mut();
        v.extend(self.tdf.parameters_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn hidden_sizes() {
        assert_eq!(TdfBlock::hidden_size(2048, 8), 256);
        assert_eq!(TdfBlock::hidden_size(2048, 16), 128);
        assert_eq!(TdfBlock::hidden_size(10, 4), 3);
    }

    #[test]
    fn tdf_param_count_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let blk = TdfBlock::new("t", 64, 8, &mut rng);
        assert_eq!(blk.param_count(), 64 * 8 + 8 + 8 * 64 + 64);
        assert_eq!(blk.param_count(), 1096);
    }

    #[test]
    fn tdf_rejects_bin_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let blk = TdfBlock::new("t", 8, 2, &mut rng);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros([1, 7, 3]));
        assert!(matches!(blk.forward(&mut tape, x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_input_gives_zero_output_with_zero_biases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let blk = TfcTdfBlock::new("b", 32, 32, 3, 64, 8, &mut rng);
        let mut tape = Tape::inference();
        let x = tape.constant(Tensor::zeros([32, 64, 32]));
        let y = blk.forward(&mut tape, x).unwrap();
        assert_eq!(tape.shape(y), [32, 64, 32]);
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_channels_follow_config() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let blk = TfcTdfBlock::new("b", 32, 48, 2, 64, 8, &mut rng);
        let mut tape = Tape::inference();
        let x = tape.constant(Tensor::full([32, 64, 32], 0.1));
        let y = blk.forward(&mut tape, x).unwrap();
        assert_eq!(tape.shape(y), [48, 64, 32]);
    }

    #[test]
    fn no_internal_residual() {
        // One identity 3x3 conv and an all-zero TDF: a residual around the TDF
        // would leak relu(x) through, none does.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut blk = TfcTdfBlock::new("b", 1, 1, 1, 4, 2, &mut rng);
        let mut k = [0.0; 9];
        k[4] = 1.0;
        blk.tfc.parameters_mut()[0].assign(&k).unwrap();
        for p in blk.tdf.parameters_mut() {
            let z = vec![0.0; p.numel()];
            p.assign(&z).unwrap();
        }
        let mut tape = Tape::inference();
        let x = tape.constant(Tensor::new([1, 4, 3], (1..=12).map(f64::from).collect()).unwrap());
        let y = blk.forward(&mut tape, x).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn composed_matrix_of_identity_fixture_is_identity() {
        let eye = |n: usize| {
            let mut d = vec![0.0; n * n];
            (0..n).for_each(|i| d[i * n + i] = 1.0);
            Tensor::new([n, n], d).unwrap()
        };
        let blk = TdfBlock::from_tensors("t", 1, eye(5), Tensor::zeros([5]), eye(5), Tensor::zeros([5])).unwrap();
        assert_eq!(blk.composed(), eye(5).into_data());
    }
}
