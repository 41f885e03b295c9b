use std::io::{Read, Write};

use rand::Rng;

use super::loss::softmax;
use crate::binio::{BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::label::{SoftLabel, NUM_CLASSES};
use crate::tensor::Matrix;

const HEAD_MAGIC: &[u8; 8] = b"CCHEAD\0\0";
const HEAD_VERSION: u32 = 1;

/// Linear layer mapping a sentence vector to class logits. No dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    /// classes × dim
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl ClassifierHead {
    pub fn zeros(dim: usize) -> Self {
        ClassifierHead {
            weight: Matrix::zeros(NUM_CLASSES, dim),
            bias: vec![0.0; NUM_CLASSES],
        }
    }

    pub fn init<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        ClassifierHead {
            weight: Matrix::glorot(NUM_CLASSES, dim, rng),
            bias: vec![0.0; NUM_CLASSES],
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn logits(&self, feature: &[f64]) -> Result<[f64; NUM_CLASSES]> {
        if feature.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: feature.len(),
            });
        }
        let mut z = [0.0; NUM_CLASSES];
        self.weight.affine(feature, &self.bias, &mut z);
        Ok(z)
    }

    /// Accumulates weight and bias gradients for logit gradient `g` at input
    /// `feature`, returning the gradient with respect to `feature`.
    pub fn backward(
        &self,
        feature: &[f64],
        g: &[f64; NUM_CLASSES],
        grads: &mut ClassifierHead,
    ) -> Vec<f64> {
        grads.weight.add_outer(g, feature);
        crate::tensor::axpy(1.0, g, &mut grads.bias);
        let mut g_feature = vec![0.0; self.dim()];
        self.weight.add_transposed_product(g, &mut g_feature);
        g_feature
    }

    pub fn tensors(&self) -> [&[f64]; 2] {
        [self.weight.as_slice(), &self.bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weight.as_mut_slice(), &mut self.bias]
    }

    pub fn write_to<W: Write>(&self, w: &mut BinWriter<W>) -> Result<()> {
        w.bytes(HEAD_MAGIC)?;
        w.u32(HEAD_VERSION)?;
        w.matrix(&self.weight)?;
        w.vector(&self.bias)
    }

    pub fn read_from<R: Read>(r: &mut BinReader<R>) -> Result<Self> {
        r.expect_magic(HEAD_MAGIC)?;
        let version = r.u32()?;
        if version != HEAD_VERSION {
            return Err(Error::ModelFormat(format!("unsupported head version {version}")));
        }
        let head = ClassifierHead {
            weight: r.matrix()?,
            bias: r.vector()?,
        };
        if head.weight.rows() != NUM_CLASSES || head.bias.len() != NUM_CLASSES {
            return Err(Error::ModelFormat(format!(
                "head has {} classes, expected {NUM_CLASSES}",
                head.weight.rows()
            )));
        }
        Ok(head)
    }
}

/// Class distribution for a sentence vector.
pub fn softmax_forward(feature: &[f64], head: &ClassifierHead) -> Result<SoftLabel> {
    head.logits(feature).map(|z| softmax(&z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_head_is_uniform() {
        let p = softmax_forward(&[0.4, -2.0, 1.0], &ClassifierHead::zeros(3)).unwrap();
        assert_eq!(p, SoftLabel::uniform());
    }

    #[test]
    fn wrong_feature_width_is_rejected() {
        let err = softmax_forward(&[1.0], &ClassifierHead::zeros(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 3, actual: 1 }));
    }
}
