//! Tokens, part-of-speech tags and the `word@TAG` tagged-text format.
//!
//! Tagged text is a whitespace-separated list of `word@TAG` items, e.g.
//! `Italy@NPNP 's@$ former@JJ prime@JJ minister@NN`. The alias `NPNP` is
//! accepted on input and normalized to `NP`; rendering only emits canonical
//! symbols. A tagged corpus file holds one or more documents:
//!
//! ```text
//! #DOC id=r001 source=reuters date=1995-06-25
//! Addis@NP Ababa@NP ,@, the@DT Ethiopian@JJ capital@NN .@PUNCT
//!
//! ```

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TextError {
    #[error("format error: {0}")]
    Format(String),
    #[error("missing resource: {0}")]
    MissingResource(&'static str),
    #[error("invalid token {0:?}")]
    InvalidToken(String),
}

/// Part-of-speech tag inventory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    /// Proper noun.
    NP,
    NN,
    NNS,
    JJ,
    CD,
    DT,
    /// Personal pronoun.
    PRP,
    /// Possessive marker, rendered `$`.
    POS,
    IN,
    CC,
    VB,
    COMMA,
    PUNCT,
    UNK,
}

impl Tag {
    pub const ALL: [Tag; 14] = [
        Tag::NP,
        Tag::NN,
        Tag::NNS,
        Tag::JJ,
        Tag::CD,
        Tag::DT,
        Tag::PRP,
        Tag::POS,
        Tag::IN,
        Tag::CC,
        Tag::VB,
        Tag::COMMA,
        Tag::PUNCT,
        Tag::UNK,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Tag::NP => "NP",
            Tag::NN => "NN",
            Tag::NNS => "NNS",
            Tag::JJ => "JJ",
            Tag::CD => "CD",
            Tag::DT => "DT",
            Tag::PRP => "PRP",
            Tag::POS => "$",
            Tag::IN => "IN",
            Tag::CC => "CC",
            Tag::VB => "VB",
            Tag::COMMA => ",",
            Tag::PUNCT => "PUNCT",
            Tag::UNK => "UNK",
        }
    }

    pub fn is_noun(self) -> bool {
        matches!(self, Tag::NP | Tag::NN | Tag::NNS)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Tag {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tag = match s {
            "NP" | "NPNP" => Tag::NP,
            "NN" => Tag::NN,
            "NNS" => Tag::NNS,
            "JJ" => Tag::JJ,
            "CD" => Tag::CD,
            "DT" => Tag::DT,
            "PRP" => Tag::PRP,
            "$" | "POS" => Tag::POS,
            "IN" => Tag::IN,
            "CC" => Tag::CC,
            "VB" => Tag::VB,
            "," | "COMMA" => Tag::COMMA,
            "PUNCT" => Tag::PUNCT,
            "UNK" => Tag::UNK,
            other => return Err(TextError::Format(format!("unknown tag {other}"))),
        };
        Ok(tag)
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A word form paired with its tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    word: String,
    pub tag: Tag,
}

impl Token {
    pub fn new(word: impl Into<String>, tag: Tag) -> Result<Self, TextError> {
        let word = word.into();
        if word.is_empty() || word.contains('@') || word.chars().any(char::is_whitespace) {
            return Err(TextError::InvalidToken(word));
        }
        Ok(Token { word, tag })
    }

    pub fn word(&self) -> &str {
        &self.word
    }

    /// True for `.`, `!` and `?` punctuation tokens.
    pub fn ends_sentence(&self) -> bool {
        self.tag == Tag::PUNCT && matches!(self.word.as_str(), "." | "!" | "?")
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.word, self.tag)
    }
}

/// Parses whitespace-separated `word@TAG` items.
pub fn parse_tagged(line: &str) -> Result<Vec<Token>, TextError> {
    line.split_whitespace().map(parse_item).collect()
}

fn parse_item(item: &str) -> Result<Token, TextError> {
    let (word, tag) = item
        .rsplit_once('@')
        .ok_or_else(|| TextError::Format(format!("missing '@' in item {item:?}")))?;
    if word.is_empty() {
        return Err(TextError::Format(format!("empty word in item {item:?}")));
    }
    let tag: Tag = tag.parse()?;
    Token::new(word, tag).map_err(|_| TextError::Format(format!("invalid word in item {item:?}")))
}

pub fn render_tagged(tokens: &[Token]) -> String {
    let items: Vec<String> = tokens.iter().map(Token::to_string).collect();
    items.join(" ")
}

/// Joins token words the way they read in running text: no space before
/// possessive markers or commas.
pub fn surface(tokens: &[Token]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let glue = matches!(tok.tag, Tag::POS | Tag::COMMA) || tok.word == "'s";
        if !out.is_empty() && !glue {
            out.push(' ');
        }
        out.push_str(&tok.word);
    }
    out
}

/// Indices `[start, end)` of each sentence; a sentence-final punctuation
/// token belongs to the sentence it closes.
pub fn sentence_spans(tokens: &[Token]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, tok) in tokens.iter().enumerate() {
        if tok.ends_sentence() {
            spans.push((start, i + 1));
            start = i + 1;
        }
    }
    if start < tokens.len() {
        spans.push((start, tokens.len()));
    }
    spans
}

const LEADING_PUNCT: &[char] = &['"', '\'', '(', '[', '`', '\u{201c}', '\u{2018}'];
const TRAILING_PUNCT: &[char] = &[
    ',', '.', ';', ':', '!', '?', '"', '\'', ')', ']', '\u{201d}', '\u{2019}',
];

/// Splits raw text into words.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        split_chunk(chunk, &mut out);
    }
    out
}

fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    if chunk == "'s" || chunk == "\u{2019}s" {
        out.push("'s".to_string());
        return;
    }
    let mut rest = chunk;
    while let Some(c) = rest.chars().next() {
        if rest.len() > c.len_utf8() && LEADING_PUNCT.contains(&c) {
            out.push(c.to_string());
            rest = &rest[c.len_utf8()..];
        } else {
            break;
        }
    }

    let mut trailing = Vec::new();
    while let Some(c) = rest.chars().last() {
        if !TRAILING_PUNCT.contains(&c) {
            break;
        }
        let cut = rest.len() - c.len_utf8();
        if cut == 0 {
            break;
        }
        if c == '.' && is_abbreviation(rest) {
            break;
        }
        // `'s` is a possessive, not a closing quote followed by `s`.
        trailing.push(c.to_string());
        rest = &rest[..cut];
    }

    let possessive = ["'s", "\u{2019}s"]
        .iter()
        .find(|p| rest.len() > p.len() && rest.ends_with(*p))
        .map(|p| p.len());
    match possessive {
        Some(len) => {
            out.push(rest[..rest.len() - len].to_string());
            out.push("'s".to_string());
        }
        None => out.push(rest.to_string()),
    }
    out.extend(trailing.into_iter().rev());
}

// "U.S." and "J." keep their final period.
fn is_abbreviation(word: &str) -> bool {
    let body = &word[..word.len() - 1];
    body.contains('.')
        || (body.chars().count() == 1 && body.chars().all(|c| c.is_ascii_uppercase()))
}

/// Word → tag table.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, Tag>,
}

impl Lexicon {
    /// Parses `word<TAB>TAG` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, TextError> {
        let mut entries = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .ok_or_else(|| TextError::Format(format!("lexicon line {}: expected word<TAB>TAG", n + 1)))?;
            entries.insert(word.to_string(), tag.trim().parse()?);
        }
        Ok(Lexicon { entries })
    }

    pub fn insert(&mut self, word: impl Into<String>, tag: Tag) {
        self.entries.insert(word.into(), tag);
    }

    pub fn get(&self, word: &str) -> Option<Tag> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A suffix rule: words ending in `suffix` get `tag`. When `base` is set the
/// rule only fires if the word minus its suffix is in the lexicon with that tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixRule {
    pub suffix: String,
    pub tag: Tag,
    pub base: Option<Tag>,
}

#[derive(Debug, Clone, Default)]
pub struct TagRules {
    pub suffixes: Vec<SuffixRule>,
}

impl TagRules {
    /// Parses `suffix<TAB>TAG[<TAB>base=TAG]` lines, tried in file order.
    pub fn parse(text: &str) -> Result<Self, TextError> {
        let mut suffixes = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = || TextError::Format(format!("rules line {}: {line:?}", n + 1));
            let (suffix, tag) = match fields.as_slice() {
                [s, t] | [s, t, _] => (s.trim_start_matches('-'), t.parse::<Tag>()?),
                _ => return Err(bad()),
            };
            let base = match fields.get(2) {
                Some(f) => Some(f.strip_prefix("base=").ok_or_else(bad)?.parse::<Tag>()?),
                None => None,
            };
            if suffix.is_empty() {
                return Err(bad());
            }
            suffixes.push(SuffixRule { suffix: suffix.to_string(), tag, base });
        }
        Ok(TagRules { suffixes })
    }
}

/// Priority rule tagger: lexicon, then shape rules, then suffix rules, then `UNK`.
#[derive(Debug, Clone, Default)]
pub struct Tagger {
    lexicon: Option<Lexicon>,
    rules: Option<TagRules>,
}

impl Tagger {
    pub fn new(lexicon: Lexicon, rules: TagRules) -> Self {
        Tagger { lexicon: Some(lexicon), rules: Some(rules) }
    }

    /// The tagger backed by the lexicon and rules bundled with the crate.
    pub fn shipped() -> Self {
        Tagger::new(
            Lexicon::parse(crate::data::LEXICON).expect("bundled lexicon parses"),
            TagRules::parse(crate::data::TAG_RULES).expect("bundled tag rules parse"),
        )
    }

    pub fn tag(&self, words: &[String]) -> Result<Vec<Token>, TextError> {
        let lexicon = self.lexicon.as_ref().ok_or(TextError::MissingResource("lexicon"))?;
        let rules = self.rules.as_ref().ok_or(TextError::MissingResource("tag rules"))?;
        let mut tokens = Vec::with_capacity(words.len());
        let mut sentence_initial = true;
        for (i, word) in words.iter().enumerate() {
            let mut tag = tag_word(word, sentence_initial, lexicon, rules);
            // "Prime Minister John Major ..." opening a sentence: a capitalized
            // open-class word before another capitalized word is a title.
            if sentence_initial
                && matches!(tag, Tag::NN | Tag::NNS | Tag::JJ)
                && word.starts_with(char::is_uppercase)
                && words.get(i + 1).is_some_and(|w| w.starts_with(char::is_uppercase))
            {
                tag = Tag::NP;
            }
            let token = Token::new(word.clone(), tag)?;
            sentence_initial = token.ends_sentence()
                || (sentence_initial && tag == Tag::PUNCT);
            tokens.push(token);
        }
        Ok(tokens)
    }

    pub fn tag_text(&self, text: &str) -> Result<Vec<Token>, TextError> {
        self.tag(&tokenize(text))
    }
}

fn tag_word(word: &str, sentence_initial: bool, lexicon: &Lexicon, rules: &TagRules) -> Tag {
    if let Some(tag) = lexicon.get(word) {
        return tag;
    }
    let lower = word.to_lowercase();
    let lower_hit = lexicon.get(&lower);
    // Capitalized closed-class words and sentence-initial words fall back to
    // their lowercase entry; other capitalized words are proper nouns.
    if let Some(tag) = lower_hit {
        if sentence_initial || matches!(tag, Tag::DT | Tag::PRP | Tag::IN | Tag::CC) {
            return tag;
        }
    }

    if word == "," {
        return Tag::COMMA;
    }
    if word == "'s" {
        return Tag::POS;
    }
    if is_number(word) {
        return Tag::CD;
    }
    if word.chars().all(|c| !c.is_alphanumeric()) {
        return Tag::PUNCT;
    }
    if word.chars().next().is_some_and(char::is_uppercase) {
        return Tag::NP;
    }

    for rule in &rules.suffixes {
        if let Some(base) = lower.strip_suffix(rule.suffix.as_str()) {
            if base.is_empty() {
                continue;
            }
            match rule.base {
                Some(want) if lexicon.get(base) != Some(want) => continue,
                _ => return rule.tag,
            }
        }
    }
    Tag::UNK
}

fn is_number(word: &str) -> bool {
    let mut digits = false;
    for c in word.chars() {
        match c {
            '0'..='9' => digits = true,
            ',' | '.' => {}
            _ => return false,
        }
    }
    digits && word.starts_with(|c: char| c.is_ascii_digit())
}

/// One document of a tagged corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedDoc {
    pub id: String,
    pub source: String,
    pub date: NaiveDate,
    pub tokens: Vec<Token>,
}

impl TaggedDoc {
    pub fn sentences(&self) -> Vec<(usize, usize)> {
        sentence_spans(&self.tokens)
    }
}

/// Parses the `#DOC` corpus format. Document ids must be unique.
pub fn parse_corpus(text: &str) -> Result<Vec<TaggedDoc>, TextError> {
    let mut docs: Vec<TaggedDoc> = Vec::new();
    let mut open = false;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(header) = line.strip_prefix("#DOC") {
            docs.push(parse_header(header, n + 1)?);
            open = true;
        } else if line.is_empty() {
            open = false;
        } else if line.starts_with('#') {
            continue;
        } else if open {
            let doc = docs.last_mut().expect("open document");
            let tokens = parse_tagged(line)
                .map_err(|e| TextError::Format(format!("line {}: {e}", n + 1)))?;
            doc.tokens.extend(tokens);
        } else {
            return Err(TextError::Format(format!("line {}: tokens outside a #DOC block", n + 1)));
        }
    }
    let mut seen = std::collections::HashSet::new();
    for doc in &docs {
        if !seen.insert(doc.id.as_str()) {
            return Err(TextError::Format(format!("duplicate document id {}", doc.id)));
        }
    }
    Ok(docs)
}

fn parse_header(header: &str, line: usize) -> Result<TaggedDoc, TextError> {
    let mut id = None;
    let mut source = None;
    let mut date = None;
    for field in header.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| TextError::Format(format!("line {line}: bad header field {field:?}")))?;
        match k {
            "id" => id = Some(v.to_string()),
            "source" => source = Some(v.to_string()),
            "date" => {
                date = Some(NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|_| {
                    TextError::Format(format!("line {line}: bad date {v:?}"))
                })?)
            }
            _ => {}
        }
    }
    let missing = |what| TextError::Format(format!("line {line}: #DOC header missing {what}"));
    Ok(TaggedDoc {
        id: id.ok_or_else(|| missing("id"))?,
        source: source.ok_or_else(|| missing("source"))?,
        date: date.ok_or_else(|| missing("date"))?,
        tokens: Vec::new(),
    })
}

/// Renders documents in the `#DOC` corpus format, one sentence per line.
pub fn render_corpus(docs: &[TaggedDoc]) -> String {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&format!(
            "#DOC id={} source={} date={}\n",
            doc.id,
            doc.source,
            doc.date.format("%Y-%m-%d")
        ));
        for (start, end) in doc.sentences() {
            out.push_str(&render_tagged(&doc.tokens[start..end]));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// True when `text` is a tagged corpus (its first non-blank line is a `#DOC` header).
pub fn is_tagged_corpus(text: &str) -> bool {
    text.lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().starts_with("#DOC"))
}

/// Loads a corpus from a file or a directory of files (sorted by name).
/// Files starting with a `#DOC` header are read as tagged corpora; any other
/// file is one plain-text document, tokenized and tagged with `tagger`.
pub fn load_corpus(path: &Path, source: &str, tagger: &Tagger) -> Result<Vec<TaggedDoc>, CorpusError> {
    let mut files = Vec::new();
    if path.is_dir() {
        for entry in std::fs::read_dir(path)? {
            let p = entry?.path();
            if p.is_file() {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }
    let mut docs = Vec::new();
    for file in files {
        let text = std::fs::read_to_string(&file)?;
        docs.extend(read_document_text(&text, &file, source, tagger)?);
    }
    Ok(docs)
}

/// Turns the contents of one file (tagged or plain) into documents.
pub fn read_document_text(
    text: &str,
    origin: &Path,
    source: &str,
    tagger: &Tagger,
) -> Result<Vec<TaggedDoc>, CorpusError> {
    if is_tagged_corpus(text) {
        return parse_corpus(text).map_err(|e| CorpusError::Text(origin.display().to_string(), e));
    }
    let id = origin
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| origin.display().to_string());
    let date = date_in_name(&id).unwrap_or_default();
    let tokens = tagger
        .tag_text(text)
        .map_err(|e| CorpusError::Text(origin.display().to_string(), e))?;
    Ok(vec![TaggedDoc { id, source: source.to_string(), date, tokens }])
}

// Picks up a `YYYY-MM-DD` fragment in a file name, if any.
fn date_in_name(name: &str) -> Option<NaiveDate> {
    let bytes = name.as_bytes();
    (0..bytes.len().saturating_sub(9))
        .find_map(|i| name.get(i..i + 10).and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()))
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}: {1}")]
    Text(String, TextError),
}
