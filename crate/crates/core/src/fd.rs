//! Functional descriptions: feature structures for noun phrases, built from
//! extracted descriptions and linearized by a small NP realizer.
//!
//! Text form is the usual s-expression notation:
//!
//! ```text
//! ((cat np)
//!  (complex apposition)
//!  (restrictive no)
//!  (distinct ~(((cat common) (head ((lex "minister"))))
//!              ((cat person-name) ...))))
//! ```
//!
//! `lex` values print double-quoted; the parser also accepts ``` ``x'' ```.

use std::fmt;

use crate::data;
use crate::extract::DescriptionKind;
use crate::store::ProfileEntry;
use crate::text::{self, Tag, TextError, Token};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FdError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("description does not parse as a noun phrase: {0:?}")]
    UnparsableDescription(String),
    #[error("unsupported entity shape: {0} tokens")]
    UnsupportedEntityShape(usize),
    #[error("cannot realize FD: missing {0}")]
    UnrealizableFd(String),
    #[error("not aggregatable: {0}")]
    NotAggregatable(String),
    #[error("invalid FD: {0}")]
    Invalid(String),
    #[error(transparent)]
    Text(#[from] TextError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Atom(String),
    Fd(Fd),
    List(Vec<Fd>),
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Atom(s.to_string())
    }
}

impl From<Fd> for Value {
    fn from(fd: Fd) -> Self {
        Value::Fd(fd)
    }
}

/// Ordered feature list; names are unique within one level.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Fd {
    features: Vec<(String, Value)>,
}

impl Fd {
    pub fn new() -> Self {
        Fd::default()
    }

    /// Leaf `((lex "word"))`.
    pub fn lex(word: &str) -> Self {
        Fd::new().with("lex", word)
    }

    /// Builder form of [`Fd::set`].
    pub fn with(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.set(name, value);
        self
    }

    /// Replaces the value of `name` in place, or appends it.
    pub fn set(&mut self, name: &str, value: impl Into<Value>) {
        let value = value.into();
        match self.features.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value,
            None => self.features.push((name.to_string(), value)),
        }
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        let i = self.features.iter().position(|(n, _)| n == name)?;
        Some(self.features.remove(i).1)
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.features.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn atom(&self, name: &str) -> Option<&str> {
        match self.get(name)? {
            Value::Atom(a) => Some(a),
            _ => None,
        }
    }

    pub fn fd(&self, name: &str) -> Option<&Fd> {
        match self.get(name)? {
            Value::Fd(fd) => Some(fd),
            _ => None,
        }
    }

    pub fn list(&self, name: &str) -> Option<&[Fd]> {
        match self.get(name)? {
            Value::List(items) => Some(items),
            _ => None,
        }
    }

    pub fn features(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.features.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn cat(&self) -> Option<&str> {
        self.atom("cat")
    }

    /// Multi-line rendering, nested features aligned under their parent.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        write_fd(&mut out, self, 0);
        out
    }
}

impl fmt::Display for Fd {
    /// Single-line rendering.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, (name, value)) in self.features.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "({name} ")?;
            match value {
                Value::Atom(a) => f.write_str(&quote(name, a))?,
                Value::Fd(fd) => write!(f, "{fd}")?,
                Value::List(items) => {
                    f.write_str("~(")?;
                    for (j, item) in items.iter().enumerate() {
                        if j > 0 {
                            f.write_str(" ")?;
                        }
                        write!(f, "{item}")?;
                    }
                    f.write_str(")")?;
                }
            }
            f.write_str(")")?;
        }
        f.write_str(")")
    }
}

fn is_bare(atom: &str) -> bool {
    !atom.is_empty()
        && atom
            .chars()
            .all(|c| !c.is_whitespace() && !matches!(c, '(' | ')' | '"' | '`' | '\'' | '~' | ';' | '\\'))
}

fn quote(name: &str, atom: &str) -> String {
    if name != "lex" && is_bare(atom) {
        return atom.to_string();
    }
    let mut out = String::from("\"");
    for c in atom.chars() {
        if matches!(c, '"' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn write_fd(out: &mut String, fd: &Fd, col: usize) {
    let flat = fd.features.len() == 1 && matches!(fd.features[0].1, Value::Atom(_));
    if flat || fd.features.is_empty() {
        out.push_str(&fd.to_string());
        return;
    }
    out.push('(');
    for (i, (name, value)) in fd.features.iter().enumerate() {
        if i > 0 {
            out.push('\n');
            out.push_str(&" ".repeat(col + 1));
        }
        out.push('(');
        out.push_str(name);
        out.push(' ');
        let vcol = col + 1 + name.len() + 2;
        match value {
            Value::Atom(a) => out.push_str(&quote(name, a)),
            Value::Fd(inner) => write_fd(out, inner, vcol),
            Value::List(items) => {
                out.push_str("~(");
                for (j, item) in items.iter().enumerate() {
                    if j > 0 {
                        out.push('\n');
                        out.push_str(&" ".repeat(vcol + 2));
                    }
                    write_fd(out, item, vcol + 2);
                }
                out.push(')');
            }
        }
        out.push(')');
    }
    out.push(')');
}

// ---------------------------------------------------------------------------
// parsing

struct Reader<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> FdError {
        FdError::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        loop {
            let rest = &self.src[self.pos..];
            let trimmed = rest.trim_start();
            self.pos += rest.len() - trimmed.len();
            if trimmed.starts_with(';') {
                self.pos += trimmed.find('\n').unwrap_or(trimmed.len());
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<(), FdError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn fd(&mut self) -> Result<Fd, FdError> {
        self.expect('(')?;
        let mut fd = Fd::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(')') => {
                    self.pos += 1;
                    return Ok(fd);
                }
                Some('(') => {
                    self.pos += 1;
                    let at = self.pos;
                    self.skip_ws();
                    let name = self.bare()?;
                    let value = self.value()?;
                    self.expect(')')?;
                    if fd.get(&name).is_some() {
                        return Err(FdError::Parse {
                            offset: at,
                            message: format!("duplicate feature {name}"),
                        });
                    }
                    fd.features.push((name, value));
                }
                Some(_) => return Err(self.err("expected '(' or ')'")),
                None => return Err(self.err("unexpected end of input")),
            }
        }
    }

    fn value(&mut self) -> Result<Value, FdError> {
        self.skip_ws();
        match self.peek() {
            Some('(') => Ok(Value::Fd(self.fd()?)),
            Some('~') => {
                self.pos += 1;
                self.expect('(')?;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(')') => {
                            self.pos += 1;
                            return Ok(Value::List(items));
                        }
                        Some('(') => items.push(self.fd()?),
                        _ => return Err(self.err("expected FD in list")),
                    }
                }
            }
            Some('"') => {
                self.pos += 1;
                let mut out = String::new();
                let mut chars = self.src[self.pos..].char_indices();
                while let Some((i, c)) = chars.next() {
                    match c {
                        '"' => {
                            self.pos += i + 1;
                            return Ok(Value::Atom(out));
                        }
                        '\\' => match chars.next() {
                            Some((_, e)) => out.push(e),
                            None => break,
                        },
                        c => out.push(c),
                    }
                }
                Err(self.err("unterminated string"))
            }
            Some('`') if self.src[self.pos..].starts_with("``") => {
                self.pos += 2;
                let rest = &self.src[self.pos..];
                let end = rest.find("''").ok_or_else(|| self.err("unterminated ``string''"))?;
                self.pos += end + 2;
                Ok(Value::Atom(rest[..end].to_string()))
            }
            Some(_) => Ok(Value::Atom(self.bare()?)),
            None => Err(self.err("missing value")),
        }
    }

    fn bare(&mut self) -> Result<String, FdError> {
        let rest = &self.src[self.pos..];
        let len = rest
            .char_indices()
            .find(|&(_, c)| c.is_whitespace() || matches!(c, '(' | ')' | '"' | ';'))
            .map_or(rest.len(), |(i, _)| i);
        if len == 0 {
            return Err(self.err("expected atom"));
        }
        self.pos += len;
        Ok(rest[..len].to_string())
    }
}

/// Parses exactly one FD.
pub fn parse_fd(text: &str) -> Result<Fd, FdError> {
    let mut all = parse_fd_blocks(text)?;
    match all.len() {
        1 => Ok(all.remove(0)),
        0 => Err(FdError::Parse {
            offset: 0,
            message: "no FD found".into(),
        }),
        n => Err(FdError::Parse {
            offset: 0,
            message: format!("expected one FD, found {n}"),
        }),
    }
}

/// Parses a sequence of top-level FDs; `;` starts a comment.
pub fn parse_fd_blocks(text: &str) -> Result<Vec<Fd>, FdError> {
    let mut r = Reader { src: text, pos: 0 };
    let mut out = Vec::new();
    loop {
        r.skip_ws();
        if r.peek().is_none() {
            return Ok(out);
        }
        out.push(r.fd()?);
    }
}

// ---------------------------------------------------------------------------
// compilation

fn lexical(word: &str) -> Fd {
    Fd::lex(word)
}

/// Right-nested noun-compound over the premodifier chain.
fn classifier_chain(words: &[&str]) -> Fd {
    match words {
        [only] => lexical(only),
        [first, rest @ ..] => Fd::new()
            .with("cat", "noun-compound")
            .with("classifier", lexical(first))
            .with("head", classifier_chain(rest)),
        [] => Fd::new(),
    }
}

fn compile_np(tokens: &[Token]) -> Fd {
    let of_at = tokens
        .iter()
        .position(|t| t.tag == Tag::IN && t.word().eq_ignore_ascii_case("of"));
    let (main, pp) = match of_at {
        Some(i) => (&tokens[..i], Some(&tokens[i + 1..])),
        None => (tokens, None),
    };

    let mut fd = Fd::new().with("cat", "common");
    let rest = match main.iter().rposition(|t| t.tag == Tag::POS) {
        Some(p) => {
            fd.set("possessor", compile_possessor(&main[..p]));
            &main[p + 1..]
        }
        None => match main.first() {
            Some(t) if t.tag == Tag::DT => {
                fd.set("determiner", lexical(t.word()));
                &main[1..]
            }
            _ => {
                fd.set("determiner", "none");
                main
            }
        },
    };
    if let Some((head, premods)) = rest.split_last() {
        if !premods.is_empty() {
            let words: Vec<&str> = premods.iter().map(Token::word).collect();
            fd.set("classifier", classifier_chain(&words));
        }
        fd.set("head", lexical(head.word()));
    }
    if let Some(pp) = pp {
        let qualifier = Fd::new()
            .with("cat", "pp")
            .with("prep", lexical("of"))
            .with("np", compile_np(pp));
        fd.set("qualifier", qualifier);
    }
    fd
}

/// A one-word possessor carries its `lex` directly.
fn compile_possessor(tokens: &[Token]) -> Fd {
    let mut fd = compile_np(tokens);
    let single = fd.get("classifier").is_none()
        && fd.get("possessor").is_none()
        && fd.get("qualifier").is_none();
    if single {
        if let Some(Value::Fd(head)) = fd.remove("head") {
            if let Some(word) = head.atom("lex") {
                fd.set("lex", word);
            }
        }
    }
    fd
}

fn compile_entity(entity: &[Token]) -> Result<Fd, FdError> {
    let words: Vec<&str> = entity.iter().map(Token::word).collect();
    match words.as_slice() {
        [one] => Ok(Fd::new().with("cat", "proper").with("lex", *one)),
        [first, last] => Ok(person_name(first, last)),
        [first, middle, last] => Ok(person_name(&format!("{first} {middle}"), last)),
        _ => Err(FdError::UnsupportedEntityShape(words.len())),
    }
}

fn person_name(first: &str, last: &str) -> Fd {
    Fd::new()
        .with("cat", "person-name")
        .with("first-name", lexical(first))
        .with("last-name", lexical(last))
}

/// Builds the FD for a description attached to an entity.
///
/// A one-word premodifier becomes a title over the name
/// (`president Bill Clinton`); everything else becomes a non-restrictive
/// apposition whose members follow their order in the source text.
pub fn compile_fd(description: &[Token], kind: DescriptionKind, entity: &[Token]) -> Result<Fd, FdError> {
    let entity_fd = compile_entity(entity)?;
    if description.is_empty() || !data::noun_phrase_pattern().accepts(description) {
        return Err(FdError::UnparsableDescription(text::render_tagged(description)));
    }

    if kind == DescriptionKind::Premodifier && description.len() == 1 && description[0].tag.is_noun() {
        return Ok(Fd::new()
            .with("cat", "np")
            .with("classifier", lexical(description[0].word()))
            .with("head", entity_fd));
    }

    let desc_fd = compile_np(description);
    let members = match kind {
        DescriptionKind::Premodifier => vec![desc_fd, entity_fd],
        DescriptionKind::Apposition => vec![entity_fd, desc_fd],
    };
    Ok(Fd::new()
        .with("cat", "np")
        .with("complex", "apposition")
        .with("restrictive", "no")
        .with("distinct", Value::List(members)))
}

/// Compiles a stored entry. Entries imported without tags are re-tagged
/// with the bundled tagger; entries without a kind count as premodifiers.
pub fn compile_entry(entry: &ProfileEntry, entity: &[Token]) -> Result<Fd, FdError> {
    let tokens = if entry.tokens.iter().any(|t| t.tag == Tag::UNK) {
        let words: Vec<String> = entry.tokens.iter().map(|t| t.word().to_string()).collect();
        text::Tagger::shipped().tag(&words)?
    } else {
        entry.tokens.clone()
    };
    compile_fd(&tokens, entry.kind.unwrap_or(DescriptionKind::Premodifier), entity)
}

// ---------------------------------------------------------------------------
// realization

fn missing(feature: &str) -> FdError {
    FdError::UnrealizableFd(feature.to_string())
}

/// Regular English plural of the last word.
pub fn pluralize(phrase: &str) -> String {
    let (prefix, word) = match phrase.rfind(' ') {
        Some(i) => phrase.split_at(i + 1),
        None => ("", phrase),
    };
    let lower = word.to_lowercase();
    let plural = if ["s", "x", "z", "ch", "sh"].iter().any(|s| lower.ends_with(s)) {
        format!("{word}es")
    } else if lower.ends_with('y') && !lower.ends_with("ay") && !lower.ends_with("ey") && !lower.ends_with("oy") && !lower.ends_with("uy") && word.len() > 1 {
        format!("{}ies", &word[..word.len() - 1])
    } else {
        format!("{word}s")
    };
    format!("{prefix}{plural}")
}

fn conjoin(parts: &[String]) -> String {
    match parts {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn realize_value(value: &Value, feature: &str) -> Result<String, FdError> {
    match value {
        Value::Fd(fd) => realize(fd),
        Value::Atom(a) => Ok(a.clone()),
        Value::List(_) => Err(FdError::UnrealizableFd(format!("{feature} (unexpected list)"))),
    }
}

fn realize_members(fd: &Fd) -> Result<Vec<String>, FdError> {
    fd.list("distinct")
        .ok_or_else(|| missing("distinct"))?
        .iter()
        .map(realize)
        .collect()
}

/// Linearizes an FD into English.
pub fn realize(fd: &Fd) -> Result<String, FdError> {
    let out = match fd.cat() {
        Some("person-name") => {
            let first = fd.fd("first-name").ok_or_else(|| missing("first-name"))?;
            let last = fd.fd("last-name").ok_or_else(|| missing("last-name"))?;
            format!("{} {}", realize(first)?, realize(last)?)
        }
        Some("proper") => fd.atom("lex").ok_or_else(|| missing("lex"))?.to_string(),
        Some("conjunction") => conjoin(&realize_members(fd)?),
        Some("noun-compound") => {
            let classifier = fd.get("classifier").ok_or_else(|| missing("classifier"))?;
            let head = fd.get("head").ok_or_else(|| missing("head"))?;
            format!("{} {}", realize_value(classifier, "classifier")?, realize_value(head, "head")?)
        }
        Some("pp") => {
            let prep = fd.get("prep").ok_or_else(|| missing("prep"))?;
            let np = fd.get("np").ok_or_else(|| missing("np"))?;
            format!("{} {}", realize_value(prep, "prep")?, realize_value(np, "np")?)
        }
        _ if fd.atom("complex") == Some("apposition") => {
            let sep = if fd.atom("restrictive") == Some("yes") { " " } else { ", " };
            realize_members(fd)?.join(sep)
        }
        Some("np") | Some("common") => realize_nominal(fd)?,
        None => match fd.atom("lex") {
            Some(lex) => lex.to_string(),
            None => return Err(missing("lex")),
        },
        Some(other) => return Err(FdError::UnrealizableFd(format!("rules for cat {other}"))),
    };
    Ok(if fd.atom("number") == Some("plural") {
        pluralize(&out)
    } else {
        out
    })
}

fn realize_nominal(fd: &Fd) -> Result<String, FdError> {
    let mut parts: Vec<String> = Vec::new();
    match fd.get("determiner") {
        None => {}
        Some(Value::Atom(a)) if a == "none" => {}
        Some(v) => parts.push(realize_value(v, "determiner")?),
    }
    if let Some(p) = fd.get("possessor") {
        parts.push(format!("{}'s", realize_value(p, "possessor")?));
    }
    if let Some(c) = fd.get("classifier") {
        parts.push(realize_value(c, "classifier")?);
    }
    match (fd.get("head"), fd.atom("lex")) {
        (Some(h), _) => parts.push(realize_value(h, "head")?),
        (None, Some(lex)) => parts.push(lex.to_string()),
        (None, None) => return Err(missing("head")),
    }
    if let Some(q) = fd.get("qualifier") {
        parts.push(realize_value(q, "qualifier")?);
    }
    Ok(parts.join(" "))
}

// ---------------------------------------------------------------------------
// transformations

fn title_parts(fd: &Fd) -> Option<(Fd, Vec<Fd>)> {
    if fd.cat() != Some("np") || fd.get("complex").is_some() {
        return None;
    }
    let mut title = fd.fd("classifier")?.clone();
    title.remove("number");
    let head = fd.fd("head")?;
    let names = if head.cat() == Some("conjunction") {
        head.list("distinct")?.to_vec()
    } else {
        vec![head.clone()]
    };
    Some((title, names))
}

/// Merges two title+name FDs sharing a title into one plural title over a
/// conjoined name list.
pub fn aggregate(a: &Fd, b: &Fd) -> Result<Fd, FdError> {
    let (ta, mut names) = title_parts(a).ok_or_else(|| FdError::NotAggregatable("first FD is not title + name".into()))?;
    let (tb, more) = title_parts(b).ok_or_else(|| FdError::NotAggregatable("second FD is not title + name".into()))?;
    if ta != tb {
        return Err(FdError::NotAggregatable(format!("titles differ: {ta} vs {tb}")));
    }
    names.extend(more);
    Ok(Fd::new()
        .with("cat", "np")
        .with("classifier", ta.with("number", "plural"))
        .with("head", Fd::new().with("cat", "conjunction").with("distinct", Value::List(names))))
}

/// Prepends "former" to the classifier chain. Applied to an apposition,
/// it changes the first common-noun member.
pub fn enhance_former(fd: &Fd) -> Result<Fd, FdError> {
    if fd.atom("complex") == Some("apposition") {
        let members = fd.list("distinct").ok_or_else(|| missing("distinct"))?;
        let i = members
            .iter()
            .position(|m| m.cat() == Some("common"))
            .ok_or_else(|| missing("head"))?;
        let mut members = members.to_vec();
        members[i] = enhance_former(&members[i])?;
        return Ok(fd.clone().with("distinct", Value::List(members)));
    }
    if fd.get("head").is_none() {
        return Err(missing("head"));
    }
    let former = lexical("former");
    let classifier = match fd.fd("classifier") {
        None => former,
        Some(old) => Fd::new()
            .with("cat", "noun-compound")
            .with("classifier", former)
            .with("head", old.clone()),
    };
    let mut out = fd.clone();
    out.set("classifier", classifier);
    // keep feature order stable: classifier precedes head
    if fd.get("classifier").is_none() {
        let head = out.remove("head").expect("checked above");
        let qualifier = out.remove("qualifier");
        out.set("head", head);
        if let Some(q) = qualifier {
            out.set("qualifier", q);
        }
    }
    Ok(out)
}

/// Most frequent entry carrying `preferred`, else the most frequent entry
/// overall. Ties go to the alphabetically first surface.
pub fn select_by_category<'a>(entries: &'a [ProfileEntry], preferred: &str) -> Option<&'a ProfileEntry> {
    let best = |pool: &mut dyn Iterator<Item = &'a ProfileEntry>| {
        pool.min_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.surface.cmp(&b.surface)))
    };
    best(&mut entries.iter().filter(|e| e.has_category(preferred))).or_else(|| best(&mut entries.iter()))
}

// ---------------------------------------------------------------------------
// validation

/// Structural checks: `cat` on every non-lexical level, at least two
/// `distinct` members, one head (or lex) on each common NP.
pub fn validate(fd: &Fd) -> Result<(), FdError> {
    if fd.get("lex").is_none() && fd.cat().is_none() {
        return Err(FdError::Invalid(format!("no cat at {fd}")));
    }
    if let Some(items) = fd.list("distinct") {
        if items.len() < 2 {
            return Err(FdError::Invalid(format!("distinct has {} member(s)", items.len())));
        }
    }
    if fd.cat() == Some("common") && fd.get("head").is_none() && fd.get("lex").is_none() {
        return Err(FdError::Invalid(format!("common NP without head: {fd}")));
    }
    for (_, value) in fd.features() {
        match value {
            Value::Fd(inner) => validate(inner)?,
            Value::List(items) => items.iter().try_for_each(validate)?,
            Value::Atom(_) => {}
        }
    }
    Ok(())
}
