//! Shared text normalization behind every n-gram metric and answer parser.

use std::fmt;

/// An ordered sequence of normalized tokens: lowercase, drawn from
/// `[a-z0-9]+` only.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSeq {
    tokens: Vec<String>,
}

impl TokenSeq {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// Lowercases, maps every character outside `[a-z0-9]` to a space, and splits
/// on whitespace.
pub fn tokenize(text: &str) -> TokenSeq {
    let normalized: String = text
        .to_lowercase()
        .chars()
        .map(|c| {
            if c.is_ascii_lowercase() || c.is_ascii_digit() {
                c
            } else {
                ' '
            }
        })
        .collect();
    TokenSeq {
        tokens: normalized.split_whitespace().map(str::to_string).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punctuation_becomes_spaces() {
        let seq = tokenize("A road; was Built.");
        assert_eq!(seq.tokens(), ["a", "road", "was", "built"]);
    }

    #[test]
    fn empty_text_is_empty() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  ;;  ").is_empty());
    }

    #[test]
    fn digits_are_retained() {
        let seq = tokenize("10 houses");
        assert_eq!(seq.tokens(), ["10", "houses"]);
    }

    #[test]
    fn tokens_satisfy_the_alphabet_invariant() {
        let seq = tokenize("Île-de-France: 42 buildings & 1 road!");
        for t in seq.tokens() {
            assert!(!t.is_empty());
            assert!(t
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()));
        }
    }
}
