//! Fixed-vocabulary one-hot encoding of SMILES strings.

/// Character classes (rows of the one-hot matrix).
pub const SMILES_CLASSES: usize = 64;
/// Encoded positions (columns); longer strings are truncated.
pub const SMILES_LENGTH: usize = 100;
/// Class index for characters outside the vocabulary.
pub const UNKNOWN_CLASS: u8 = 63;

/// Vocabulary version 1: 63 symbols, class `i` is the `i`-th character.
pub const SMILES_VOCAB_V1: &str =
    "ABCDEFGHIKLMNOPRSTUVWXYZabcdegilnorstu0123456789#%()*+-./:=@[\\]";

pub fn char_class(ch: char) -> u8 {
    SMILES_VOCAB_V1
        .chars()
        .position(|v| v == ch)
        .map_or(UNKNOWN_CLASS, |p| p as u8)
}

/// `64 × 100` one-hot matrix stored as one class index per occupied
/// position; all columns past `len()` are zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SmilesMatrix {
    classes: Vec<u8>,
}

impl SmilesMatrix {
    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    /// Number of nonzero columns.
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Entry `(class, position)` of the one-hot matrix.
    pub fn get(&self, class: usize, position: usize) -> f64 {
        match self.classes.get(position) {
            Some(&c) if c as usize == class => 1.0,
            _ => 0.0,
        }
    }

    pub fn class_at(&self, position: usize) -> Option<u8> {
        self.classes.get(position).copied()
    }

    /// Dense `SMILES_CLASSES × SMILES_LENGTH` rows.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..SMILES_CLASSES)
            .map(|c| (0..SMILES_LENGTH).map(|p| self.get(c, p)).collect())
            .collect()
    }
}

pub fn encode_smiles(s: &str) -> SmilesMatrix {
    SmilesMatrix {
        classes: s.chars().take(SMILES_LENGTH).map(char_class).collect(),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn vocabulary_has_63_distinct_symbols() {
        let chars: Vec<char> = SMILES_VOCAB_V1.chars().collect();
        assert_eq!(chars.len(), 63);
        let mut sorted = chars.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 63);
    }

    #[test]
    fn short_string_is_zero_padded() {
        let m = encode_smiles("CCO");
        let dense = m.to_dense();
        for p in 0..SMILES_LENGTH {
            let ones: f64 = (0..SMILES_CLASSES).map(|c| dense[c][p]).sum();
            assert_eq!(ones, if p < 3 { 1.0 } else { 0.0 });
        }
        assert_eq!(m.get(char_class('C') as usize, 0), 1.0);
        assert_eq!(m.get(char_class('O') as usize, 2), 1.0);
    }

    #[test]
    fn long_string_is_truncated() {
        let s: String = "CN(".repeat(50);
        let m = encode_smiles(&s);
        assert_eq!(m.len(), 100);
        let dense = m.to_dense();
        let nonzero_cols = (0..SMILES_LENGTH)
            .filter(|&p| (0..SMILES_CLASSES).any(|c| dense[c][p] != 0.0))
            .count();
        assert_eq!(nonzero_cols, 100);
    }

    #[test]
    fn empty_and_unknown() {
        assert!(encode_smiles("")
            .to_dense()
            .iter()
            .flatten()
            .all(|&v| v == 0.0));
        assert_eq!(
            encode_smiles("Cé").classes(),
            &[char_class('C'), UNKNOWN_CLASS]
        );
    }

    proptest! {
        #[test]
        fn injective_up_to_truncation(a in "[CNOcno()=#1-9]{0,120}", b in "[CNOcno()=#1-9]{0,120}") {
            let ta: String = a.chars().take(SMILES_LENGTH).collect();
            let tb: String = b.chars().take(SMILES_LENGTH).collect();
            prop_assert_eq!(encode_smiles(&a) == encode_smiles(&b), ta == tb);
        }
    }
}
