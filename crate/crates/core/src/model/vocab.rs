use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};

pub const UNKNOWN_WORD: &str = "<unk>";
pub const UNKNOWN_ID: usize = 0;

/// Word to id mapping with id 0 reserved for unknown words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    ids: IndexMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let mut ids = IndexMap::new();
        ids.insert(UNKNOWN_WORD.to_string(), UNKNOWN_ID);
        Self { ids }
    }
}

impl Vocabulary {
    /// Vocabulary of every word in `sentences`, in first-seen order.
    pub fn build<'a, I, S>(sentences: I) -> Self
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        let mut v = Self::default();
        for s in sentences {
            for w in s.as_ref() {
                let next = v.ids.len();
                v.ids.entry(w.clone()).or_insert(next);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.len() <= 1
    }

    pub fn id(&self, word: &str) -> usize {
        self.ids.get(word).copied().unwrap_or(UNKNOWN_ID)
    }

    pub fn encode(&self, words: &[String]) -> Vec<usize> {
        words.iter().map(|w| self.id(w)).collect()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.ids.keys().map(String::as_str)
    }

    /// One word per line, line number = id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = String::new();
        for w in self.ids.keys() {
            s.push_str(w);
            s.push('\n');
        }
        fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::MissingResource(format!("{}: {e}", path.display())))?;
        let mut ids = IndexMap::new();
        for (i, line) in text.lines().enumerate() {
            if ids.insert(line.to_string(), i).is_some() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("duplicate word {line:?}"),
                });
            }
        }
        if ids.get(UNKNOWN_WORD) != Some(&UNKNOWN_ID) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("first entry must be {UNKNOWN_WORD}"),
            });
        }
        Ok(Self { ids })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_words_map_to_reserved_id() {
        let s = vec![vec!["a".to_string(), "dog".to_string()]];
        let v = Vocabulary::build(&s);
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("dog"), 2);
        assert_eq!(v.id("cat"), UNKNOWN_ID);
    }
}
