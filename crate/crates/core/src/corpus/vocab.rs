use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Bidirectional token/id map with the four reserved ids in front.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    ids: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<&str>())
    }
}

impl Vocabulary {
    /// Reserved entries followed by `tokens` in order; repeats are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocabulary { ids: HashMap::new(), tokens: Vec::new() };
        for r in RESERVED {
            v.insert(r);
        }
        for t in tokens {
            v.insert(t.as_ref());
        }
        v
    }

    fn insert(&mut self, token: &str) {
        if !self.ids.contains_key(token) {
            self.ids.insert(token.to_owned(), self.tokens.len());
            self.tokens.push(token.to_owned());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= RESERVED.len()
    }

    /// Id of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Tokens for `ids`, with out-of-range ids rendered as the UNK symbol.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(RESERVED[UNK]).to_owned())
            .collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; line number is the id.
    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in r.lines() {
            tokens.push(line?);
        }
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::Parse {
                line: 1,
                msg: "vocabulary file must start with the reserved symbols".into(),
            });
        }
        let v = Self::from_tokens(&tokens[RESERVED.len()..]);
        if v.len() != tokens.len() {
            return Err(Error::Parse { line: 1, msg: "duplicate vocabulary entry".into() });
        }
        Ok(v)
    }
}

/// Counts whitespace tokens over `lines` and keeps those seen at least
/// `min_freq` times, most frequent first with ties in lexicographic order.
/// `max_size` caps the number of non-reserved entries.
pub fn build_vocab<I, S>(lines: I, min_freq: usize, max_size: Option<usize>) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if min_freq == 0 {
        return Err(Error::Config("min_freq must be at least 1".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for line in lines {
        for tok in line.as_ref().split_whitespace() {
            *counts.entry(tok.to_owned()).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_freq && !RESERVED.contains(&t.as_str()))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyVocab);
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if let Some(cap) = max_size {
        kept.truncate(cap);
    }
    Ok(Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t)))
}
