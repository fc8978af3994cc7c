use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};

/// The 36 Penn Treebank word-class tags, in their conventional numbering.
pub const PENN_TAGS: [&str; 36] = [
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP",
    "NNPS", "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB",
    "VBD", "VBG", "VBN", "VBP", "VBZ", "WDT", "WP", "WP$", "WRB",
];

/// Penn Treebank punctuation tags appended after [`PENN_TAGS`].
pub const PUNCTUATION_TAGS: [&str; 9] = ["#", "$", "''", "``", "(", ")", ",", ".", ":"];

/// Fixed tag inventory with dense ids `0..len()`.
///
/// Id `len()` is reserved as the neutral tag fed where no real tag exists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagSet {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Default for TagSet {
    fn default() -> Self {
        Self::penn()
    }
}

impl TagSet {
    pub fn penn() -> Self {
        Self::from_names(PENN_TAGS.iter().chain(PUNCTUATION_TAGS.iter()))
            .expect("built-in inventory has no duplicates")
    }

    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = TagSet { names: Vec::new(), ids: HashMap::new() };
        for (line, name) in names.into_iter().enumerate() {
            let name = name.as_ref();
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(Error::Parse { line: line + 1, msg: format!("invalid tag name {name:?}") });
            }
            if set.ids.insert(name.to_owned(), set.names.len()).is_some() {
                return Err(Error::Parse { line: line + 1, msg: format!("duplicate tag {name}") });
            }
            set.names.push(name.to_owned());
        }
        if set.names.is_empty() {
            return Err(Error::Config("tag inventory is empty".into()));
        }
        Ok(set)
    }

    /// Tag inventory file: one name per line, line order defines ids.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let lines = r.lines().collect::<io::Result<Vec<_>>>()?;
        Self::from_names(lines)
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        for n in &self.names {
            writeln!(w, "{n}")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn neutral_id(&self) -> usize {
        self.names.len()
    }
}
