//! Desk-scale sentence encoder.
//!
//! Each token is embedded, passed through a position-wise `tanh` feed-forward
//! layer, mean-pooled over the unpadded positions and projected through
//! `tanh` to the sentence vector consumed by the classifier head:
//!
//! ```text
//! h_t = tanh(W_mix · E[x_t] + b_mix)
//! u   = mean_t h_t
//! f   = tanh(W_proj · u + b_proj)
//! ```

mod vocab;

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub use vocab::{
    tokenize, word_tokens, TokenSequence, Vocabulary, CLS, CLS_ID, PAD, PAD_ID, UNK, UNK_ID,
};

/// Encoder shape and tokenizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Embedding and output dimension.
    pub dim: usize,
    /// Width of the feed-forward mixing layer.
    pub hidden: usize,
    /// Maximum sequence length including `[CLS]`.
    pub max_len: usize,
    pub min_freq: usize,
    /// Embedding entries are initialised uniformly in `[-init_scale, init_scale]`.
    pub init_scale: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 64,
            hidden: 64,
            max_len: 200,
            min_freq: 1,
            init_scale: 1.0,
        }
    }
}

const ENCODER_MAGIC: &[u8; 8] = b"CCENCDR\0";
const ENCODER_VERSION: u32 = 1;

/// Trainable encoder tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// vocab × dim
    pub embedding: Matrix,
    /// hidden × dim
    pub mix_weight: Matrix,
    pub mix_bias: Vec<f64>,
    /// dim × hidden
    pub proj_weight: Matrix,
    pub proj_bias: Vec<f64>,
}

/// Per-sequence activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    tokens: Vec<u32>,
    /// true_length × hidden, row-major
    hidden: Vec<f64>,
    pooled: Vec<f64>,
    output: Vec<f64>,
}

impl EncoderCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl EncoderParams {
    pub fn zeros(vocab_size: usize, dim: usize, hidden: usize) -> Self {
        EncoderParams {
            embedding: Matrix::zeros(vocab_size, dim),
            mix_weight: Matrix::zeros(hidden, dim),
            mix_bias: vec![0.0; hidden],
            proj_weight: Matrix::zeros(dim, hidden),
            proj_bias: vec![0.0; dim],
        }
    }

    pub fn init<R: Rng + ?Sized>(vocab_size: usize, config: &EncoderConfig, rng: &mut R) -> Self {
        let mut embedding = Matrix::uniform(vocab_size, config.dim, config.init_scale, rng);
        if vocab_size > 0 {
            embedding.row_mut(PAD_ID as usize).fill(0.0);
        }
        EncoderParams {
            embedding,
            mix_weight: Matrix::glorot(config.hidden, config.dim, rng),
            mix_bias: vec![0.0; config.hidden],
            proj_weight: Matrix::glorot(config.dim, config.hidden, rng),
            proj_bias: vec![0.0; config.dim],
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn hidden(&self) -> usize {
        self.mix_weight.rows()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (d, h) = (self.dim(), self.hidden());
        let ok = self.mix_weight.shape() == (h, d)
            && self.mix_bias.len() == h
            && self.proj_weight.shape() == (d, h)
            && self.proj_bias.len() == d;
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "embedding {:?}, mix {:?}+{}, proj {:?}+{}",
                self.embedding.shape(),
                self.mix_weight.shape(),
                self.mix_bias.len(),
                self.proj_weight.shape(),
                self.proj_bias.len()
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Tensors in a fixed order shared with [`EncoderGrads::tensors`].
    pub fn tensors(&self) -> [&[f64]; 5] {
        [
            self.embedding.as_slice(),
            self.mix_weight.as_slice(),
            &self.mix_bias,
            self.proj_weight.as_slice(),
            &self.proj_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.embedding.as_mut_slice(),
            self.mix_weight.as_mut_slice(),
            &mut self.mix_bias,
            self.proj_weight.as_mut_slice(),
            &mut self.proj_bias,
        ]
    }

    pub fn forward(&self, seq: &TokenSequence) -> Result<(Vec<f64>, EncoderCache)> {
        let (d, h, v) = (self.dim(), self.hidden(), self.vocab_size());
        let tokens = seq.tokens();
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= v) {
            return Err(Error::ShapeMismatch(format!(
                "token index {bad} outside vocabulary of {v}"
            )));
        }
        let mut hidden = vec![0.0; tokens.len() * h];
        let mut pooled = vec![0.0; h];
        for (t, &tok) in tokens.iter().enumerate() {
            let row = &mut hidden[t * h..(t + 1) * h];
            self.mix_weight
                .affine(self.embedding.row(tok as usize), &self.mix_bias, row);
            for (p, a) in pooled.iter_mut().zip(row.iter_mut()) {
                *a = a.tanh();
                *p += *a;
            }
        }
        if !tokens.is_empty() {
            let inv = 1.0 / tokens.len() as f64;
            pooled.iter_mut().for_each(|p| *p *= inv);
        }
        let mut output = vec![0.0; d];
        self.proj_weight.affine(&pooled, &self.proj_bias, &mut output);
        output.iter_mut().for_each(|o| *o = o.tanh());
        let cache = EncoderCache {
            tokens: tokens.to_vec(),
            hidden,
            pooled,
            output: output.clone(),
        };
        Ok((output, cache))
    }

    pub fn encode(&self, seq: &TokenSequence) -> Result<Vec<f64>> {
        self.forward(seq).map(|(out, _)| out)
    }

    /// Accumulates into `grads` the gradient of a scalar whose gradient with
    /// respect to the encoder output is `upstream`.
    pub fn backward(
        &self,
        cache: &EncoderCache,
        upstream: &[f64],
        grads: &mut EncoderGrads,
    ) -> Result<()> {
        let (d, h) = (self.dim(), self.hidden());
        if upstream.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: upstream.len(),
            });
        }
        if upstream.iter().all(|g| *g == 0.0) || cache.tokens.is_empty() {
            return Ok(());
        }
        let g_proj: Vec<f64> = upstream
            .iter()
            .zip(&cache.output)
            .map(|(g, s)| g * (1.0 - s * s))
            .collect();
        grads.proj_weight.add_outer(&g_proj, &cache.pooled);
        crate::tensor::axpy(1.0, &g_proj, &mut grads.proj_bias);

        let mut g_pooled = vec![0.0; h];
        self.proj_weight.add_transposed_product(&g_proj, &mut g_pooled);
        let inv = 1.0 / cache.tokens.len() as f64;

        let mut g_mix = vec![0.0; h];
        for (t, &tok) in cache.tokens.iter().enumerate() {
            let act = &cache.hidden[t * h..(t + 1) * h];
            for ((g, &gp), &a) in g_mix.iter_mut().zip(&g_pooled).zip(act) {
                *g = gp * inv * (1.0 - a * a);
            }
            grads
                .mix_weight
                .add_outer(&g_mix, self.embedding.row(tok as usize));
            crate::tensor::axpy(1.0, &g_mix, &mut grads.mix_bias);
            self.mix_weight
                .add_transposed_product(&g_mix, grads.embedding.row_mut(tok as usize));
        }
        Ok(())
    }

    /// Gradient of `upstream · encode(seq)` with respect to every parameter.
    pub fn encode_backward(&self, seq: &TokenSequence, upstream: &[f64]) -> Result<EncoderGrads> {
        let (_, cache) = self.forward(seq)?;
        let mut grads = EncoderGrads::zeros_like(self);
        self.backward(&cache, upstream, &mut grads)?;
        Ok(grads)
    }

    pub fn write_to<W: Write>(&self, w: &mut BinWriter<W>) -> Result<()> {
        w.bytes(ENCODER_MAGIC)?;
        w.u32(ENCODER_VERSION)?;
        w.len(self.vocab_size())?;
        w.len(self.dim())?;
        w.len(self.hidden())?;
        w.matrix(&self.embedding)?;
        w.matrix(&self.mix_weight)?;
        w.vector(&self.mix_bias)?;
        w.matrix(&self.proj_weight)?;
        w.vector(&self.proj_bias)
    }

    pub fn read_from<R: Read>(r: &mut BinReader<R>) -> Result<Self> {
        r.expect_magic(ENCODER_MAGIC)?;
        let version = r.u32()?;
        if version != ENCODER_VERSION {
            return Err(Error::ModelFormat(format!("unsupported encoder version {version}")));
        }
        let (vocab, dim, hidden) = (r.len()?, r.len()?, r.len()?);
        let params = EncoderParams {
            embedding: r.matrix()?,
            mix_weight: r.matrix()?,
            mix_bias: r.vector()?,
            proj_weight: r.matrix()?,
            proj_bias: r.vector()?,
        };
        params.check_shapes()?;
        if params.embedding.shape() != (vocab, dim) || params.hidden() != hidden {
            return Err(Error::ModelFormat("encoder header disagrees with tensors".into()));
        }
        Ok(params)
    }
}

/// Gradients with the same layout as [`EncoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub embedding: Matrix,
    pub mix_weight: Matrix,
    pub mix_bias: Vec<f64>,
    pub proj_weight: Matrix,
    pub proj_bias: Vec<f64>,
}

impl EncoderGrads {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        let z = EncoderParams::zeros(params.vocab_size(), params.dim(), params.hidden());
        EncoderGrads {
            embedding: z.embedding,
            mix_weight: z.mix_weight,
            mix_bias: z.mix_bias,
            proj_weight: z.proj_weight,
            proj_bias: z.proj_bias,
        }
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [
            self.embedding.as_slice(),
            self.mix_weight.as_slice(),
            &self.mix_bias,
            self.proj_weight.as_slice(),
            &self.proj_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.embedding.as_mut_slice(),
            self.mix_weight.as_mut_slice(),
            &mut self.mix_bias,
            self.proj_weight.as_mut_slice(),
            &mut self.proj_bias,
        ]
    }

    pub fn clear(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}
