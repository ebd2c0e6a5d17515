//! Text ingestion: vocabularies, char/word tokenizers and the unigram
//! baseline that trained models must beat.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub const UNK: u32 = 0;
pub const EOS: u32 = 1;
const SPECIALS: [&str; 2] = ["<unk>", "<eos>"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenizerKind {
    /// Every Unicode scalar value is a token, newlines included.
    Char,
    /// Whitespace-separated words; each line ends with `<eos>`.
    Word,
}

impl TokenizerKind {
    pub fn tag(self) -> u32 {
        match self {
            TokenizerKind::Char => 0,
            TokenizerKind::Word => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<TokenizerKind> {
        match tag {
            0 => Some(TokenizerKind::Char),
            1 => Some(TokenizerKind::Word),
            _ => None,
        }
    }

    /// Splits text into token strings without mapping them to ids.
    pub fn split(self, text: &str) -> Vec<String> {
        match self {
            TokenizerKind::Char => text.chars().map(String::from).collect(),
            TokenizerKind::Word => {
                let mut out = Vec::new();
                for line in text.lines() {
                    out.extend(line.split_whitespace().map(String::from));
                    out.push(SPECIALS[EOS as usize].to_string());
                }
                out
            }
        }
    }
}

impl fmt::Display for TokenizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenizerKind::Char => "char",
            TokenizerKind::Word => "word",
        })
    }
}

/// Dense id ↔ token map. Ids 0 and 1 are `<unk>` and `<eos>`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds from explicit tokens, which must start with the two specials
    /// and contain no duplicates.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocabulary> {
        if tokens.len() < 2 || tokens[0] != SPECIALS[0] || tokens[1] != SPECIALS[1] {
            return Err(Error::Corpus("vocabulary must start with <unk> and <eos>".into()));
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if token_to_id.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Corpus(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Vocabulary {
            id_to_token: tokens,
            token_to_id,
        })
    }

    /// Keeps tokens seen at least `min_freq` times, most frequent first
    /// (ties in string order).
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>, min_freq: usize) -> Vocabulary {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, n)| n >= min_freq.max(1) && !SPECIALS.contains(&t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let list = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t.to_string()))
            .collect();
        Vocabulary::from_tokens(list).expect("specials first, counts keyed uniquely")
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Id of `token`, or [`UNK`] when absent.
    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, kind: TokenizerKind, text: &str) -> Vec<u32> {
        kind.split(text).iter().map(|t| self.id(t)).collect()
    }

    /// Inverse of [`encode`](Self::encode) for in-vocabulary text. Word mode
    /// joins with single spaces and turns `<eos>` into a newline.
    pub fn decode(&self, kind: TokenizerKind, ids: &[u32]) -> String {
        let mut out = String::new();
        let mut line_start = true;
        for &id in ids {
            let tok = self.token(id).unwrap_or(SPECIALS[0]);
            match kind {
                TokenizerKind::Char => out.push_str(tok),
                TokenizerKind::Word if id == EOS => {
                    out.push('\n');
                    line_start = true;
                }
                TokenizerKind::Word => {
                    if !line_start {
                        out.push(' ');
                    }
                    out.push_str(tok);
                    line_start = false;
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub train: Vec<u32>,
    pub valid: Vec<u32>,
    pub test: Vec<u32>,
    pub vocab: Vocabulary,
    pub tokenizer: TokenizerKind,
}

impl Corpus {
    /// Tokenizes three texts with a vocabulary built from `train` alone.
    pub fn from_texts(
        train: &str,
        valid: &str,
        test: &str,
        tokenizer: TokenizerKind,
        min_freq: usize,
    ) -> Result<Corpus> {
        let train_tokens = tokenizer.split(train);
        if train_tokens.is_empty() {
            return Err(Error::Corpus("training split is empty".into()));
        }
        let vocab = Vocabulary::build(train_tokens.iter().map(String::as_str), min_freq);
        let encode = |toks: &[String]| toks.iter().map(|t| vocab.id(t)).collect::<Vec<u32>>();
        Ok(Corpus {
            train: encode(&train_tokens),
            valid: encode(&tokenizer.split(valid)),
            test: encode(&tokenizer.split(test)),
            vocab,
            tokenizer,
        })
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn build_corpus(
    train_path: &Path,
    valid_path: &Path,
    test_path: &Path,
    tokenizer: TokenizerKind,
    min_freq: usize,
) -> Result<Corpus> {
    Corpus::from_texts(
        &read_text(train_path)?,
        &read_text(valid_path)?,
        &read_text(test_path)?,
        tokenizer,
        min_freq,
    )
}

/// `train.txt`, `valid.txt` and `test.txt` inside `dir`.
pub fn load_corpus_dir(dir: &Path, tokenizer: TokenizerKind, min_freq: usize) -> Result<Corpus> {
    build_corpus(
        &dir.join("train.txt"),
        &dir.join("valid.txt"),
        &dir.join("test.txt"),
        tokenizer,
        min_freq,
    )
}

/// Add-one smoothed unigram model estimated from training counts.
#[derive(Clone, Debug, PartialEq)]
pub struct UnigramModel {
    log_probs: Vec<f64>,
}

impl UnigramModel {
    pub fn fit(train: &[u32], vocab_size: usize) -> Result<UnigramModel> {
        let mut counts = vec![0u64; vocab_size];
        for &t in train {
            let slot = counts
                .get_mut(t as usize)
                .ok_or(Error::TokenOutOfRange { id: t, vocab_size })?;
            *slot += 1;
        }
        let denom = (train.len() + vocab_size) as f64;
        Ok(UnigramModel {
            log_probs: counts.iter().map(|&c| ((c + 1) as f64 / denom).ln()).collect(),
        })
    }

    pub fn log_prob(&self, id: u32) -> f64 {
        self.log_probs[id as usize]
    }

    /// Perplexity over the same `n − 1` next-token targets the language
    /// model is scored on.
    pub fn perplexity(&self, tokens: &[u32]) -> Result<f64> {
        if tokens.len() < 2 {
            return Err(Error::invalid("perplexity needs at least two tokens"));
        }
        let v = self.log_probs.len();
        let mut nll = 0.0;
        for &t in &tokens[1..] {
            if t as usize >= v {
                return Err(Error::TokenOutOfRange { id: t, vocab_size: v });
            }
            nll -= self.log_probs[t as usize];
        }
        Ok((nll / (tokens.len() - 1) as f64).exp())
    }
}
