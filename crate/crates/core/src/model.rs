//! A trained classifier: vocabulary, encoder and softmax head in one file.
//!
//! File layout (little-endian):
//!
//! ```text
//! "CCMODEL\0"  u32 version  u32 max_len
//! vocabulary section   ("CCVOCAB\0", version, token count, length-prefixed UTF-8 tokens)
//! encoder section      ("CCENCDR\0", version, vocab, dim, hidden, tensors)
//! head section         ("CCHEAD\0\0", version, tensors)
//! ```
//!
//! Every tensor is written as `u32 rows, u32 cols` (or `u32 len`) followed by
//! `f64` entries in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::{BinReader, BinWriter};
use crate::calibration::PredictionRecord;
use crate::encoder::{tokenize, EncoderConfig, EncoderParams, TokenSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::label::{Label, SoftLabel};
use crate::training::{softmax_forward, ClassifierHead};

const MODEL_MAGIC: &[u8; 8] = b"CCMODEL\0";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub vocab: Vocabulary,
    pub max_len: usize,
    pub encoder: EncoderParams,
    pub head: ClassifierHead,
}

impl Classifier {
    /// Fresh parameters drawn from `seed`.
    pub fn init(vocab: Vocabulary, config: &EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::init(vocab.len(), config, &mut rng);
        let head = ClassifierHead::init(config.dim, &mut rng);
        Classifier {
            vocab,
            max_len: config.max_len,
            encoder,
            head,
        }
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        tokenize(text, &self.vocab, self.max_len)
    }

    pub fn probs(&self, seq: &TokenSequence) -> Result<SoftLabel> {
        let feature = self.encoder.encode(seq)?;
        softmax_forward(&feature, &self.head)
    }

    pub fn predict_text(&self, text: &str) -> Result<SoftLabel> {
        self.probs(&self.tokenize(text))
    }

    pub fn predict_record(
        &self,
        example_id: &str,
        text: &str,
        gold: Option<Label>,
    ) -> Result<PredictionRecord> {
        Ok(PredictionRecord::new(example_id, self.predict_text(text)?, gold))
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.head.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Encoder tensors followed by head tensors.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.encoder.tensors_mut().into_iter().collect();
        out.extend(self.head.tensors_mut());
        out
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<W> {
        let mut w = BinWriter::new(w);
        w.bytes(MODEL_MAGIC)?;
        w.u32(MODEL_VERSION)?;
        w.len(self.max_len)?;
        self.vocab.write_to(&mut w)?;
        self.encoder.write_to(&mut w)?;
        self.head.write_to(&mut w)?;
        Ok(w.into_inner())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BinReader::new(r);
        r.expect_magic(MODEL_MAGIC)?;
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported model version {version}")));
        }
        let max_len = r.len()?;
        let vocab = Vocabulary::read_from(&mut r)?;
        let encoder = EncoderParams::read_from(&mut r)?;
        let head = ClassifierHead::read_from(&mut r)?;
        if encoder.vocab_size() != vocab.len() || head.dim() != encoder.dim() {
            return Err(Error::ModelFormat(format!(
                "inconsistent sections: vocab {}, encoder {}x{}, head dim {}",
                vocab.len(),
                encoder.vocab_size(),
                encoder.dim(),
                head.dim()
            )));
        }
        Ok(Classifier {
            vocab,
            max_len,
            encoder,
            head,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = self.write_to(BufWriter::new(file))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}
