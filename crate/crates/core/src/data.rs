//! Word sets and templates compiled into the library.

use crate::embedding::WordList;
use crate::error::Result;
use crate::testgen::{parse_attributes, Articles, AttributeWord, SetKind, TemplateBank};

pub const VERBS: &str = include_str!("../data/verbs.txt");
pub const OBJECTS: &str = include_str!("../data/objects.tsv");
pub const PAIRING: &str = include_str!("../data/pairing.tsv");
pub const ARTICLES: &str = include_str!("../data/articles.tsv");
pub const GENDER_WORDS: &str = include_str!("../data/gender_words.tsv");
pub const NAMES: &str = include_str!("../data/names.tsv");
pub const OCCUPATIONS: &str = include_str!("../data/occupations.tsv");
pub const NAMES_MALE: &str = include_str!("../data/names_male.txt");
pub const NAMES_FEMALE: &str = include_str!("../data/names_female.txt");
pub const GENDER_SPECIFIC: &str = include_str!("../data/gender_specific.txt");

/// The shipped bank, checked to yield exactly 1968 premises.
pub fn template_bank() -> Result<TemplateBank> {
    TemplateBank::parse(
        ("verbs.txt", VERBS),
        ("objects.tsv", OBJECTS),
        ("pairing.tsv", PAIRING),
        true,
    )
}

pub fn articles() -> Articles {
    Articles::parse("articles.tsv", ARTICLES).expect("shipped article table parses")
}

/// Attribute words for a test-set kind.
pub fn attributes(kind: SetKind) -> Vec<AttributeWord> {
    let (name, text) = match kind {
        SetKind::Explicit => ("gender_words.tsv", GENDER_WORDS),
        SetKind::Name => ("names.tsv", NAMES),
        SetKind::Occupation => ("occupations.tsv", OCCUPATIONS),
    };
    parse_attributes(name, text).expect("shipped attribute words parse")
}

/// Male and female given names used to build name-pair subspaces.
pub fn subspace_names() -> (WordList, WordList) {
    (
        WordList::parse("names_female", NAMES_FEMALE),
        WordList::parse("names_male", NAMES_MALE),
    )
}

/// Gender-specific words excluded from evaluation vocabularies.
pub fn gender_specific() -> WordList {
    WordList::parse("gender_specific", GENDER_SPECIFIC)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_bank_counts() {
        let bank = template_bank().unwrap();
        assert_eq!(bank.verbs.len(), 27);
        assert_eq!(bank.objects.len(), 184);
        assert_eq!(bank.premise_count(), 1968);
    }

    #[test]
    fn shipped_word_sets() {
        assert_eq!(attributes(SetKind::Explicit).len(), 8);
        assert_eq!(attributes(SetKind::Name).len(), 64);
        assert_eq!(attributes(SetKind::Occupation).len(), 32);
        let (f, m) = subspace_names();
        assert_eq!((f.len(), m.len()), (100, 100));
        assert!(gender_specific().contains("he"));
    }
}
