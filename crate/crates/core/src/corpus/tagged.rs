use std::io::{self, BufRead, Write};

use super::tagset::TagSet;
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

/// Tokens with one aligned tag id each. Never empty.
///
/// `T` is the token representation: surface strings after reading a file,
/// vocabulary ids once encoded.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TaggedSentence<T = usize> {
    tokens: Vec<T>,
    tags: Vec<usize>,
}

impl<T> TaggedSentence<T> {
    pub fn new(tokens: Vec<T>, tags: Vec<usize>) -> Result<Self> {
        if tokens.is_empty() || tokens.len() != tags.len() {
            return Err(Error::Contract(format!(
                "tagged sentence needs equal non-zero lengths, got {} tokens and {} tags",
                tokens.len(),
                tags.len()
            )));
        }
        Ok(TaggedSentence { tokens, tags })
    }

    /// Every token carries `tag`.
    pub fn uniform(tokens: Vec<T>, tag: usize) -> Result<Self> {
        let tags = vec![tag; tokens.len()];
        Self::new(tokens, tags)
    }

    pub fn tokens(&self) -> &[T] {
        &self.tokens
    }

    pub fn tags(&self) -> &[usize] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl TaggedSentence<String> {
    pub fn encode(&self, vocab: &Vocabulary) -> TaggedSentence<usize> {
        TaggedSentence { tokens: vocab.encode(&self.tokens), tags: self.tags.clone() }
    }
}

impl TaggedSentence<usize> {
    pub fn decode(&self, vocab: &Vocabulary) -> TaggedSentence<String> {
        TaggedSentence { tokens: vocab.decode(&self.tokens), tags: self.tags.clone() }
    }
}

/// Reads the vertical format: `token<TAB>TAG` per line, a blank line between
/// sentences.
pub fn read_tagged_corpus<R: BufRead>(r: R, tagset: &TagSet) -> Result<Vec<TaggedSentence<String>>> {
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut pending_blank: Option<usize> = None;
    for (idx, line) in r.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            if tokens.is_empty() {
                pending_blank.get_or_insert(lineno);
            } else {
                out.push(TaggedSentence::new(std::mem::take(&mut tokens), std::mem::take(&mut tags))?);
                pending_blank = None;
            }
            continue;
        }
        if let Some(blank) = pending_blank.take() {
            return Err(Error::Parse { line: blank, msg: "empty sentence block".into() });
        }
        let mut fields = line.split('\t');
        let (Some(token), Some(tag), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected `token<TAB>TAG`, got {line:?}"),
            });
        };
        if token.is_empty() {
            return Err(Error::Parse { line: lineno, msg: "empty token".into() });
        }
        let Some(tag_id) = tagset.id(tag) else {
            return Err(Error::Parse { line: lineno, msg: format!("unknown tag {tag:?}") });
        };
        tokens.push(token.to_owned());
        tags.push(tag_id);
    }
    if !tokens.is_empty() {
        out.push(TaggedSentence::new(tokens, tags)?);
    }
    Ok(out)
}

/// Inverse of [`read_tagged_corpus`]; every sentence is followed by a blank line.
pub fn write_tagged_corpus<W: Write>(
    mut w: W,
    sentences: &[TaggedSentence<String>],
    tagset: &TagSet,
) -> Result<()> {
    for s in sentences {
        for (tok, &tag) in s.tokens().iter().zip(s.tags()) {
            let name = tagset.name(tag).ok_or(Error::Range {
                what: "tag id",
                index: tag,
                limit: tagset.len(),
            })?;
            writeln!(w, "{tok}\t{name}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// One whitespace-tokenized sentence per line. Blank lines yield empty sentences.
pub fn read_plain_corpus<R: BufRead>(r: R) -> io::Result<Vec<Vec<String>>> {
    r.lines()
        .map(|l| l.map(|l| l.split_whitespace().map(str::to_owned).collect()))
        .collect()
}
