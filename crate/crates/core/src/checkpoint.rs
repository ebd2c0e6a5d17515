//! Binary model files.
//!
//! Layout, all integers `u32` little-endian and all reals `f64`
//! little-endian:
//!
//! ```text
//! "G2LM" | version = 1
//! vocab_size | embed_dim | hidden_dim | num_layers | gate tag | tau (f64)
//! tie flag | dropout_p (f64)
//! token count | (byte length | UTF-8 bytes) per token
//! tensors in Model::tensors order, row-major
//! ```

use std::path::Path;

use crate::cell::GateMode;
use crate::corpus::{TokenizerKind, Vocabulary};
use crate::error::{Error, Result};
use crate::network::{Model, ModelConfig};

pub const MAGIC: [u8; 4] = *b"G2LM";
pub const VERSION: u32 = 1;

pub fn save_checkpoint(model: &Model, vocab: &Vocabulary) -> Result<Vec<u8>> {
    model.validate()?;
    let c = &model.config;
    if vocab.len() != c.vocab_size {
        return Err(Error::shape(format!(
            "vocabulary has {} tokens, model expects {}",
            vocab.len(),
            c.vocab_size
        )));
    }
    let mut out = Vec::with_capacity(64 + 8 * c.num_params());
    out.extend_from_slice(&MAGIC);
    let mut put = |v: u32| out.extend_from_slice(&v.to_le_bytes());
    put(VERSION);
    for v in [c.vocab_size, c.embed_dim, c.hidden_dim, c.num_layers] {
        put(u32::try_from(v).map_err(|_| Error::invalid("dimension exceeds u32"))?);
    }
    put(c.gate_mode.tag());
    out.extend_from_slice(&c.gate_mode.tau().to_le_bytes());
    out.extend_from_slice(&u32::from(c.tie_embeddings).to_le_bytes());
    out.extend_from_slice(&c.dropout_p.to_le_bytes());
    out.extend_from_slice(&(vocab.len() as u32).to_le_bytes());
    for tok in vocab.tokens() {
        out.extend_from_slice(&(tok.len() as u32).to_le_bytes());
        out.extend_from_slice(tok.as_bytes());
    }
    for (_, t) in model.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Checkpoint {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!(
                "truncated while reading {what}: need {n} bytes, {} left",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<(Model, Vocabulary)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        r.pos = 0;
        return Err(r.fail("bad magic, not a G2LM checkpoint"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        r.pos -= 4;
        return Err(r.fail(format!("unsupported version {version}, expected {VERSION}")));
    }
    let vocab_size = r.u32("vocab_size")? as usize;
    let embed_dim = r.u32("embed_dim")? as usize;
    let hidden_dim = r.u32("hidden_dim")? as usize;
    let num_layers = r.u32("num_layers")? as usize;
    let tag_at = r.pos;
    let tag = r.u32("gate mode tag")?;
    let tau = r.f64("tau")?;
    let gate_mode = GateMode::from_tag(tag, tau).map_err(|e| Error::Checkpoint {
        offset: tag_at,
        msg: e.to_string(),
    })?;
    let tie = match r.u32("tie flag")? {
        0 => false,
        1 => true,
        v => {
            r.pos -= 4;
            return Err(r.fail(format!("tie flag must be 0 or 1, got {v}")));
        }
    };
    let dropout_p = r.f64("dropout_p")?;
    let config = ModelConfig {
        vocab_size,
        embed_dim,
        hidden_dim,
        num_layers,
        gate_mode,
        tie_embeddings: tie,
        dropout_p,
    };
    config.validate().map_err(|e| Error::Checkpoint {
        offset: 8,
        msg: e.to_string(),
    })?;

    let count_at = r.pos;
    let count = r.u32("token count")? as usize;
    if count != vocab_size {
        r.pos = count_at;
        return Err(r.fail(format!("vocabulary has {count} tokens, header says {vocab_size}")));
    }
    let mut tokens = Vec::with_capacity(count.min(bytes.len()));
    for i in 0..count {
        let len = r.u32("token length")? as usize;
        let at = r.pos;
        let raw = r.take(len, "token bytes")?;
        let tok = std::str::from_utf8(raw).map_err(|_| Error::Checkpoint {
            offset: at,
            msg: format!("token {i} is not valid UTF-8"),
        })?;
        tokens.push(tok.to_string());
    }
    let vocab = Vocabulary::from_tokens(tokens).map_err(|e| Error::Checkpoint {
        offset: count_at,
        msg: e.to_string(),
    })?;

    let expected = {
        let mut untied = config;
        untied.tie_embeddings = false;
        untied.num_params()
    };
    if (bytes.len() - r.pos) / 8 < expected {
        return Err(r.fail(format!(
            "truncated parameters: need {expected} values, {} bytes left",
            bytes.len() - r.pos
        )));
    }
    let mut model = Model::zeros(config)?;
    for (name, t) in model.tensors_mut() {
        for v in t.iter_mut() {
            *v = r.f64(&name)?;
        }
    }
    if r.pos != bytes.len() {
        return Err(r.fail(format!("{} trailing bytes after parameters", bytes.len() - r.pos)));
    }
    model.validate().map_err(|e| Error::Checkpoint {
        offset: r.pos,
        msg: e.to_string(),
    })?;
    Ok((model, vocab))
}

pub fn write_checkpoint(path: &Path, model: &Model, vocab: &Vocabulary) -> Result<()> {
    let bytes = save_checkpoint(model, vocab)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(Model, Vocabulary)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_checkpoint(&bytes)
}

/// The file format does not record the tokenizer. A vocabulary whose
/// ordinary entries are all single characters came from the char
/// tokenizer; anything else is treated as word level.
pub fn infer_tokenizer(vocab: &Vocabulary) -> TokenizerKind {
    let single = vocab.tokens()[2..].iter().all(|t| t.chars().count() == 1);
    if single && vocab.len() > 2 {
        TokenizerKind::Char
    } else {
        TokenizerKind::Word
    }
}
