//! Resources bundled into the binary.

use std::sync::OnceLock;

use crate::pattern::{parse_pattern_defs, Pattern, PatternSet};

pub const LEXICON: &str = include_str!("../data/lexicon.tsv");
pub const TAG_RULES: &str = include_str!("../data/tag_rules.tsv");
pub const DICTIONARY: &str = include_str!("../data/dictionary.txt");
pub const TAXONOMY: &str = include_str!("../data/taxonomy.tsv");
pub const CATEGORIES: &str = include_str!("../data/categories.tsv");
pub const NOUN_PHRASE_GRAMMAR: &str = include_str!("../data/noun_phrase.pat");

/// The bundled description grammar, entry `NOUN_PHRASE`.
pub fn noun_phrase_grammar() -> &'static PatternSet {
    static GRAMMAR: OnceLock<PatternSet> = OnceLock::new();
    GRAMMAR.get_or_init(|| parse_pattern_defs(NOUN_PHRASE_GRAMMAR).expect("bundled grammar parses"))
}

/// [`noun_phrase_grammar`] compiled once.
pub fn noun_phrase_pattern() -> &'static Pattern {
    static PATTERN: OnceLock<Pattern> = OnceLock::new();
    PATTERN.get_or_init(|| noun_phrase_grammar().compile())
}
