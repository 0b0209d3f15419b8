//! Token-level finite-state patterns.
//!
//! A pattern file holds `NAME = expr` definitions. Expressions are built from
//! token tests and combinators:
//!
//! | syntax           | meaning                                           |
//! |------------------|---------------------------------------------------|
//! | `word`           | token whose word is exactly `word`                |
//! | `[Ww]ord`        | same, first letter in either case                 |
//! | `@TAG`           | token tagged `TAG`                                |
//! | `word@TAG`       | both                                              |
//! | `{NAME}`         | reference to another definition                   |
//! | `a b`, `a \| b`  | concatenation, alternation                        |
//! | `x?` `x*` `x+`   | repetition                                        |
//! | `(?<lbl> ...)`   | capture group                                     |
//!
//! `{SPACE}` is accepted and ignored and `{COMMA}` is the comma tag. The
//! reference graph must be acyclic, so every pattern stays regular.
//!
//! Matching is leftmost-longest and non-overlapping, and never crosses a
//! sentence boundary.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use indexmap::IndexMap;

use crate::text::{sentence_spans, Tag, TaggedDoc, Token};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatternError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dangling reference {{{0}}}")]
    DanglingRef(String),
    #[error("reference cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("unknown entry pattern {0}")]
    UnknownEntry(String),
    #[error("entity must have at least one non-empty word")]
    EmptyEntity,
    #[error("repeat bounds {min}..{max} are inverted or empty")]
    BadRepeat { min: u32, max: u32 },
}

/// Word literal; `fold_first` makes the first character case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordLit {
    pub text: String,
    pub fold_first: bool,
}

impl WordLit {
    pub fn exact(text: impl Into<String>) -> Self {
        WordLit { text: text.into(), fold_first: false }
    }

    pub fn folded(text: impl Into<String>) -> Self {
        WordLit { text: text.into(), fold_first: true }
    }

    pub fn matches(&self, word: &str) -> bool {
        if !self.fold_first {
            return word == self.text;
        }
        let (mut a, mut b) = (self.text.chars(), word.chars());
        match (a.next(), b.next()) {
            (Some(x), Some(y)) => {
                (x == y || x.to_lowercase().eq(y.to_lowercase())) && a.as_str() == b.as_str()
            }
            (None, None) => true,
            _ => false,
        }
    }
}

/// A single-token predicate. Both parts unset matches any token.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenTest {
    pub word: Option<WordLit>,
    pub tag: Option<Tag>,
}

impl TokenTest {
    pub fn matches(&self, token: &Token) -> bool {
        self.tag.is_none_or(|t| t == token.tag)
            && self.word.as_ref().is_none_or(|w| w.matches(token.word()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternExpr {
    Token(TokenTest),
    Ref(String),
    Seq(Vec<PatternExpr>),
    Alt(Vec<PatternExpr>),
    Repeat { expr: Box<PatternExpr>, min: u32, max: Option<u32> },
    Capture { label: String, expr: Box<PatternExpr> },
}

impl PatternExpr {
    pub fn literal(word: WordLit) -> Self {
        PatternExpr::Token(TokenTest { word: Some(word), tag: None })
    }

    pub fn tag_is(tag: Tag) -> Self {
        PatternExpr::Token(TokenTest { word: None, tag: Some(tag) })
    }

    pub fn word_tag(word: WordLit, tag: Tag) -> Self {
        PatternExpr::Token(TokenTest { word: Some(word), tag: Some(tag) })
    }

    pub fn repeat(expr: PatternExpr, min: u32, max: Option<u32>) -> Self {
        PatternExpr::Repeat { expr: Box::new(expr), min, max }
    }

    pub fn capture(label: impl Into<String>, expr: PatternExpr) -> Self {
        PatternExpr::Capture { label: label.into(), expr: Box::new(expr) }
    }

    fn refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            PatternExpr::Token(_) => {}
            PatternExpr::Ref(name) => out.push(name),
            PatternExpr::Seq(xs) | PatternExpr::Alt(xs) => xs.iter().for_each(|x| x.refs(out)),
            PatternExpr::Repeat { expr, .. } | PatternExpr::Capture { expr, .. } => expr.refs(out),
        }
    }

    fn check_bounds(&self) -> Result<(), PatternError> {
        match self {
            PatternExpr::Repeat { expr, min, max } => {
                if let Some(max) = max {
                    if max < min || *max == 0 {
                        return Err(PatternError::BadRepeat { min: *min, max: *max });
                    }
                }
                expr.check_bounds()
            }
            PatternExpr::Seq(xs) | PatternExpr::Alt(xs) => xs.iter().try_for_each(Self::check_bounds),
            PatternExpr::Capture { expr, .. } => expr.check_bounds(),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PatternExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternExpr::Token(t) => {
                match &t.word {
                    Some(w) if w.fold_first => {
                        let mut cs = w.text.chars();
                        let first = cs.next().unwrap_or(' ');
                        let up: String = first.to_uppercase().collect();
                        let low: String = first.to_lowercase().collect();
                        write!(f, "[{up}{low}]{}", cs.as_str())?;
                    }
                    Some(w) => f.write_str(&w.text)?,
                    None => {}
                }
                match t.tag {
                    Some(tag) => write!(f, "@{tag}"),
                    None if t.word.is_none() => f.write_str("@*"),
                    None => Ok(()),
                }
            }
            PatternExpr::Ref(name) => write!(f, "{{{name}}}"),
            PatternExpr::Seq(xs) => {
                let parts: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
                write!(f, "({})", parts.join(" "))
            }
            PatternExpr::Alt(xs) => {
                let parts: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
                write!(f, "({})", parts.join("|"))
            }
            PatternExpr::Repeat { expr, min, max } => match (min, max) {
                (0, Some(1)) => write!(f, "{expr}?"),
                (0, None) => write!(f, "{expr}*"),
                (1, None) => write!(f, "{expr}+"),
                _ => {
                    // No counted-repeat syntax: spell the copies out.
                    let mut parts: Vec<String> = (0..*min).map(|_| expr.to_string()).collect();
                    match max {
                        Some(max) => parts.extend((*min..*max).map(|_| format!("{expr}?"))),
                        None => parts.push(format!("{expr}*")),
                    }
                    write!(f, "({})", parts.join(" "))
                }
            },
            PatternExpr::Capture { label, expr } => write!(f, "(?<{label}> {expr})"),
        }
    }
}

/// Named definitions with a designated entry pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternSet {
    definitions: IndexMap<String, PatternExpr>,
    entry: String,
}

impl PatternSet {
    /// Builds and validates a set. Fails on dangling references, reference
    /// cycles, inverted repeat bounds, or an entry that is not defined.
    pub fn new(
        definitions: IndexMap<String, PatternExpr>,
        entry: impl Into<String>,
    ) -> Result<Self, PatternError> {
        let entry = entry.into();
        if !definitions.contains_key(&entry) {
            return Err(PatternError::UnknownEntry(entry));
        }
        validate(&definitions)?;
        Ok(PatternSet { definitions, entry })
    }

    /// A single expression with no references as its own set.
    pub fn from_expr(expr: PatternExpr) -> Result<Self, PatternError> {
        let mut defs = IndexMap::new();
        defs.insert("MAIN".to_string(), expr);
        PatternSet::new(defs, "MAIN")
    }

    pub fn entry(&self) -> &str {
        &self.entry
    }

    pub fn get(&self, name: &str) -> Option<&PatternExpr> {
        self.definitions.get(name)
    }

    pub fn definitions(&self) -> impl Iterator<Item = (&str, &PatternExpr)> {
        self.definitions.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Same definitions, different entry.
    pub fn with_entry(&self, entry: &str) -> Result<Self, PatternError> {
        if !self.definitions.contains_key(entry) {
            return Err(PatternError::UnknownEntry(entry.to_string()));
        }
        Ok(PatternSet { definitions: self.definitions.clone(), entry: entry.to_string() })
    }

    /// Adds (or replaces) definitions and revalidates.
    pub fn extend(
        &self,
        extra: impl IntoIterator<Item = (String, PatternExpr)>,
        entry: &str,
    ) -> Result<Self, PatternError> {
        let mut defs = self.definitions.clone();
        defs.extend(extra);
        PatternSet::new(defs, entry)
    }

    pub fn compile(&self) -> Pattern {
        Pattern::compile(self)
    }
}

fn validate(defs: &IndexMap<String, PatternExpr>) -> Result<(), PatternError> {
    for expr in defs.values() {
        expr.check_bounds()?;
        let mut refs = Vec::new();
        expr.refs(&mut refs);
        if let Some(r) = refs.iter().find(|r| !defs.contains_key(**r)) {
            return Err(PatternError::DanglingRef(r.to_string()));
        }
    }
    // Depth-first search for a back edge.
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Fresh,
        Active,
        Done,
    }
    fn visit<'a>(
        name: &'a str,
        defs: &'a IndexMap<String, PatternExpr>,
        marks: &mut HashMap<&'a str, Mark>,
        stack: &mut Vec<&'a str>,
    ) -> Result<(), PatternError> {
        match marks.get(name).copied().unwrap_or(Mark::Fresh) {
            Mark::Done => return Ok(()),
            Mark::Active => {
                let pos = stack.iter().position(|n| *n == name).unwrap_or(0);
                let mut cycle: Vec<String> = stack[pos..].iter().map(|s| s.to_string()).collect();
                cycle.push(name.to_string());
                return Err(PatternError::Cycle(cycle));
            }
            Mark::Fresh => {}
        }
        marks.insert(name, Mark::Active);
        stack.push(name);
        let mut refs = Vec::new();
        defs[name].refs(&mut refs);
        for r in refs {
            visit(r, defs, marks, stack)?;
        }
        stack.pop();
        marks.insert(name, Mark::Done);
        Ok(())
    }
    let mut marks = HashMap::new();
    for name in defs.keys() {
        visit(name, defs, &mut marks, &mut Vec::new())?;
    }
    Ok(())
}

/// Parses a pattern-definition file. The first definition is the entry.
pub fn parse_pattern_defs(source: &str) -> Result<PatternSet, PatternError> {
    let defs = parse_definitions(source)?;
    let entry = defs
        .keys()
        .next()
        .cloned()
        .ok_or(PatternError::Parse { line: 0, message: "no definitions".into() })?;
    PatternSet::new(defs, entry)
}

/// Syntax-only parse of `NAME = expr` lines; references are not resolved.
pub fn parse_definitions(source: &str) -> Result<IndexMap<String, PatternExpr>, PatternError> {
    let mut defs = IndexMap::new();
    for (n, raw) in source.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, body) = line.split_once('=').ok_or_else(|| PatternError::Parse {
            line: line_no,
            message: "expected NAME = expr".into(),
        })?;
        let name = name.trim();
        if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(PatternError::Parse { line: line_no, message: format!("bad name {name:?}") });
        }
        let expr = Parser::new(body, line_no).parse_all()?;
        if defs.insert(name.to_string(), expr).is_some() {
            return Err(PatternError::Parse {
                line: line_no,
                message: format!("{name} defined twice"),
            });
        }
    }
    Ok(defs)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

const SPECIAL: &[char] = &['(', ')', '{', '}', '|', '+', '?', '*', '[', ']', '@'];

impl Parser {
    fn new(src: &str, line: usize) -> Self {
        Parser { chars: src.chars().collect(), pos: 0, line }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, PatternError> {
        Err(PatternError::Parse { line: self.line, message: message.into() })
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn parse_all(mut self) -> Result<PatternExpr, PatternError> {
        let expr = self.parse_alt()?;
        match self.peek() {
            None => Ok(expr),
            Some(c) => self.err(format!("unexpected {c:?}")),
        }
    }

    fn parse_alt(&mut self) -> Result<PatternExpr, PatternError> {
        let mut alts = vec![self.parse_seq()?];
        while self.peek() == Some('|') {
            self.pos += 1;
            alts.push(self.parse_seq()?);
        }
        Ok(if alts.len() == 1 { alts.pop().unwrap() } else { PatternExpr::Alt(alts) })
    }

    fn parse_seq(&mut self) -> Result<PatternExpr, PatternError> {
        let mut items = Vec::new();
        while let Some(c) = self.peek() {
            if c == '|' || c == ')' {
                break;
            }
            if let Some(item) = self.parse_postfix()? {
                items.push(item);
            }
        }
        match items.len() {
            0 => self.err("empty expression"),
            1 => Ok(items.pop().unwrap()),
            _ => Ok(PatternExpr::Seq(items)),
        }
    }

    // Returns None for `{SPACE}`, which contributes nothing.
    fn parse_postfix(&mut self) -> Result<Option<PatternExpr>, PatternError> {
        let Some(mut atom) = self.parse_atom()? else {
            return Ok(None);
        };
        while let Some(&c) = self.chars.get(self.pos) {
            let (min, max) = match c {
                '?' => (0, Some(1)),
                '*' => (0, None),
                '+' => (1, None),
                _ => break,
            };
            self.pos += 1;
            atom = PatternExpr::repeat(atom, min, max);
        }
        Ok(Some(atom))
    }

    fn parse_atom(&mut self) -> Result<Option<PatternExpr>, PatternError> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let label = if self.chars.get(self.pos) == Some(&'?') {
                    self.pos += 1;
                    if self.chars.get(self.pos) != Some(&'<') {
                        return self.err("expected '<' after '(?'");
                    }
                    self.pos += 1;
                    let label = self.take_while(|c| c != '>');
                    if self.chars.get(self.pos) != Some(&'>') || label.is_empty() {
                        return self.err("unterminated capture label");
                    }
                    self.pos += 1;
                    Some(label)
                } else {
                    None
                };
                let inner = self.parse_alt()?;
                if self.peek() != Some(')') {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(Some(match label {
                    Some(l) => PatternExpr::capture(l, inner),
                    None => inner,
                }))
            }
            Some('{') => {
                self.pos += 1;
                let name = self.take_while(|c| c != '}');
                if self.chars.get(self.pos) != Some(&'}') {
                    return self.err("unterminated reference");
                }
                self.pos += 1;
                let name = name.trim();
                Ok(match name {
                    "SPACE" => None,
                    "COMMA" => Some(PatternExpr::tag_is(Tag::COMMA)),
                    _ if name.is_empty() => return self.err("empty reference"),
                    _ => Some(PatternExpr::Ref(name.to_string())),
                })
            }
            Some(_) => self.parse_token_test().map(Some),
            None => self.err("unexpected end of expression"),
        }
    }

    fn parse_token_test(&mut self) -> Result<PatternExpr, PatternError> {
        let mut word = None;
        if self.chars.get(self.pos) == Some(&'[') {
            let (a, b, close) = (
                self.chars.get(self.pos + 1).copied(),
                self.chars.get(self.pos + 2).copied(),
                self.chars.get(self.pos + 3).copied(),
            );
            let (Some(a), Some(b), Some(']')) = (a, b, close) else {
                return self.err("case class must look like [Xx]");
            };
            if a == b || !a.to_lowercase().eq(b.to_lowercase()) {
                return self.err(format!("[{a}{b}] is not a case pair"));
            }
            self.pos += 4;
            let rest = self.take_while(|c| !c.is_whitespace() && !SPECIAL.contains(&c));
            word = Some(WordLit::folded(format!("{a}{rest}")));
        } else {
            let text = self.take_while(|c| !c.is_whitespace() && !SPECIAL.contains(&c));
            if !text.is_empty() {
                word = Some(WordLit::exact(text));
            }
        }
        let mut tag = None;
        if self.chars.get(self.pos) == Some(&'@') {
            self.pos += 1;
            if self.chars.get(self.pos) == Some(&'*') {
                self.pos += 1;
            } else {
                // `,` and `$` are tag symbols; stop at structural characters.
                let sym = self.take_while(|c| !c.is_whitespace() && !"(){}|+?*[]@".contains(c));
                match sym.parse::<Tag>() {
                    Ok(t) => tag = Some(t),
                    Err(_) => return self.err(format!("unknown tag {sym}")),
                }
            }
        } else if word.is_none() {
            let c = self.chars.get(self.pos).copied().unwrap_or(' ');
            return self.err(format!("unexpected {c:?}"));
        }
        Ok(PatternExpr::Token(TokenTest { word, tag }))
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> String {
        let start = self.pos;
        while self.chars.get(self.pos).is_some_and(|&c| f(c)) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }
}

/// Builds the search pattern for one entity name: one token per word, first
/// letter case-insensitive, proper-noun tag.
pub fn compile_entity_pattern<S: AsRef<str>>(entity_words: &[S]) -> Result<PatternExpr, PatternError> {
    if entity_words.is_empty() || entity_words.iter().any(|w| w.as_ref().is_empty()) {
        return Err(PatternError::EmptyEntity);
    }
    let parts: Vec<PatternExpr> = entity_words
        .iter()
        .map(|w| PatternExpr::word_tag(WordLit::folded(w.as_ref()), Tag::NP))
        .collect();
    Ok(if parts.len() == 1 {
        parts.into_iter().next().unwrap()
    } else {
        PatternExpr::Seq(parts)
    })
}

/// Capture label to token span.
pub type Captures = BTreeMap<String, (usize, usize)>;

/// A match of a pattern against a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchSpan {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    pub captures: Captures,
}

#[derive(Debug, Clone)]
enum Inst {
    Test(TokenTest),
    Split(Vec<usize>),
    Jump(usize),
    Save(usize),
    Match,
}

/// A compiled pattern: a Thompson-style program run by a Pike VM.
#[derive(Debug, Clone)]
pub struct Pattern {
    prog: Vec<Inst>,
    labels: Vec<String>,
}

impl Pattern {
    pub fn compile(set: &PatternSet) -> Pattern {
        let mut c = Compiler { prog: Vec::new(), labels: Vec::new(), set };
        let root = set.get(set.entry()).expect("validated entry");
        c.emit(root);
        c.prog.push(Inst::Match);
        Pattern { prog: c.prog, labels: c.labels }
    }

    pub fn from_expr(expr: &PatternExpr) -> Result<Pattern, PatternError> {
        Ok(PatternSet::from_expr(expr.clone())?.compile())
    }

    /// Capture labels in slot order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Runs from `start` and returns the longest non-empty match end, with
    /// the captures of the highest-priority parse reaching it.
    fn run(&self, tokens: &[Token], start: usize, want_end: Option<usize>) -> Option<(usize, Vec<Option<usize>>)> {
        let nslots = self.labels.len() * 2;
        let mut clist: Vec<(usize, Vec<Option<usize>>)> = Vec::new();
        let mut seen = vec![usize::MAX; self.prog.len()];
        let mut best: Option<(usize, Vec<Option<usize>>)> = None;
        let mut step = 0usize;
        self.add_thread(&mut clist, &mut seen, step, 0, vec![None; nslots], start);
        let mut pos = start;
        loop {
            // Highest-priority thread at Match wins for this position.
            if pos > start && want_end.is_none_or(|e| e == pos) {
                if let Some((_, caps)) = clist.iter().find(|(pc, _)| matches!(self.prog[*pc], Inst::Match)) {
                    best = Some((pos, caps.clone()));
                }
            }
            if pos >= tokens.len() || clist.is_empty() || want_end.is_some_and(|e| pos >= e) {
                break;
            }
            step += 1;
            let mut nlist = Vec::new();
            for (pc, caps) in clist {
                if let Inst::Test(t) = &self.prog[pc] {
                    if t.matches(&tokens[pos]) {
                        self.add_thread(&mut nlist, &mut seen, step, pc + 1, caps, pos + 1);
                    }
                }
            }
            clist = nlist;
            pos += 1;
        }
        best
    }

    fn add_thread(
        &self,
        list: &mut Vec<(usize, Vec<Option<usize>>)>,
        seen: &mut [usize],
        step: usize,
        pc: usize,
        mut caps: Vec<Option<usize>>,
        pos: usize,
    ) {
        if seen[pc] == step {
            return;
        }
        seen[pc] = step;
        match &self.prog[pc] {
            Inst::Jump(t) => self.add_thread(list, seen, step, *t, caps, pos),
            Inst::Split(targets) => {
                for &t in targets {
                    self.add_thread(list, seen, step, t, caps.clone(), pos);
                }
            }
            Inst::Save(slot) => {
                caps[*slot] = Some(pos);
                self.add_thread(list, seen, step, pc + 1, caps, pos);
            }
            Inst::Test(_) | Inst::Match => list.push((pc, caps)),
        }
    }

    /// Longest non-empty match starting exactly at `start`, bounded by `limit`.
    pub fn longest_at(&self, tokens: &[Token], start: usize, limit: usize) -> Option<usize> {
        self.run(&tokens[..limit.min(tokens.len())], start, None).map(|(end, _)| end)
    }

    /// True when the whole of `tokens` is accepted.
    pub fn accepts(&self, tokens: &[Token]) -> bool {
        !tokens.is_empty() && self.run(tokens, 0, Some(tokens.len())).is_some()
    }

    fn captures_of(&self, caps: &[Option<usize>]) -> Captures {
        let mut out = BTreeMap::new();
        for (i, label) in self.labels.iter().enumerate() {
            if let (Some(s), Some(e)) = (caps[2 * i], caps[2 * i + 1]) {
                out.insert(label.clone(), (s, e));
            }
        }
        out
    }

    /// Leftmost-longest, non-overlapping matches over a token slice, scanning
    /// each sentence separately.
    pub fn find_in(&self, tokens: &[Token]) -> Vec<(usize, usize, Captures)> {
        let mut out = Vec::new();
        for (s_start, s_end) in sentence_spans(tokens) {
            let sentence = &tokens[..s_end];
            let mut pos = s_start;
            while pos < s_end {
                match self.run(sentence, pos, None) {
                    Some((end, caps)) => {
                        out.push((pos, end, self.captures_of(&caps)));
                        pos = end;
                    }
                    None => pos += 1,
                }
            }
        }
        out
    }

    pub fn find_matches(&self, doc: &TaggedDoc) -> Vec<MatchSpan> {
        self.find_in(&doc.tokens)
            .into_iter()
            .map(|(start, end, captures)| MatchSpan { doc_id: doc.id.clone(), start, end, captures })
            .collect()
    }
}

/// All leftmost-longest, non-overlapping matches of the set's entry pattern.
pub fn find_matches(pattern: &PatternSet, doc: &TaggedDoc) -> Vec<MatchSpan> {
    pattern.compile().find_matches(doc)
}

struct Compiler<'a> {
    prog: Vec<Inst>,
    labels: Vec<String>,
    set: &'a PatternSet,
}

impl Compiler<'_> {
    fn emit(&mut self, expr: &PatternExpr) {
        match expr {
            PatternExpr::Token(t) => self.prog.push(Inst::Test(t.clone())),
            PatternExpr::Ref(name) => {
                let target = self.set.get(name).expect("validated reference");
                self.emit(target);
            }
            PatternExpr::Seq(xs) => xs.iter().for_each(|x| self.emit(x)),
            PatternExpr::Alt(xs) => {
                let split = self.placeholder();
                let mut starts = Vec::new();
                let mut jumps = Vec::new();
                for (i, x) in xs.iter().enumerate() {
                    starts.push(self.prog.len());
                    self.emit(x);
                    if i + 1 < xs.len() {
                        jumps.push(self.placeholder());
                    }
                }
                let end = self.prog.len();
                self.prog[split] = Inst::Split(starts);
                for j in jumps {
                    self.prog[j] = Inst::Jump(end);
                }
            }
            PatternExpr::Repeat { expr, min, max } => {
                for _ in 0..*min {
                    self.emit(expr);
                }
                match max {
                    None => {
                        // loop: Split(body, exit); body; Jump(loop)
                        let split = self.placeholder();
                        self.emit(expr);
                        self.prog.push(Inst::Jump(split));
                        let exit = self.prog.len();
                        self.prog[split] = Inst::Split(vec![split + 1, exit]);
                    }
                    Some(max) => {
                        let mut splits = Vec::new();
                        for _ in *min..*max {
                            splits.push(self.placeholder());
                            self.emit(expr);
                        }
                        let exit = self.prog.len();
                        for s in splits {
                            self.prog[s] = Inst::Split(vec![s + 1, exit]);
                        }
                    }
                }
            }
            PatternExpr::Capture { label, expr } => {
                let slot = match self.labels.iter().position(|l| l == label) {
                    Some(i) => i,
                    None => {
                        self.labels.push(label.clone());
                        self.labels.len() - 1
                    }
                };
                self.prog.push(Inst::Save(2 * slot));
                self.emit(expr);
                self.prog.push(Inst::Save(2 * slot + 1));
            }
        }
    }

    fn placeholder(&mut self) -> usize {
        self.prog.push(Inst::Jump(usize::MAX));
        self.prog.len() - 1
    }
}

/// Lists the names reachable from `name` (itself included), for diagnostics.
pub fn reachable(set: &PatternSet, name: &str) -> HashSet<String> {
    let mut out = HashSet::new();
    let mut stack = vec![name.to_string()];
    while let Some(n) = stack.pop() {
        if !out.insert(n.clone()) {
            continue;
        }
        if let Some(e) = set.get(&n) {
            let mut refs = Vec::new();
            e.refs(&mut refs);
            stack.extend(refs.into_iter().map(String::from));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::parse_tagged;
    use chrono::NaiveDate;

    fn doc(tagged: &str) -> TaggedDoc {
        TaggedDoc {
            id: "d".into(),
            source: "s".into(),
            date: NaiveDate::from_ymd_opt(1995, 6, 25).unwrap(),
            tokens: parse_tagged(tagged).unwrap(),
        }
    }

    #[test]
    fn parses_entity_definition() {
        let set = parse_pattern_defs("A = [Yy]asser@NP [Aa]rafat@NP").unwrap();
        assert_eq!(
            set.get("A").unwrap(),
            &PatternExpr::Seq(vec![
                PatternExpr::word_tag(WordLit::folded("Yasser"), Tag::NP),
                PatternExpr::word_tag(WordLit::folded("Arafat"), Tag::NP),
            ])
        );
    }

    #[test]
    fn parses_repeat() {
        let set = parse_pattern_defs("A = x@NN+").unwrap();
        assert_eq!(
            set.get("A").unwrap(),
            &PatternExpr::repeat(PatternExpr::word_tag(WordLit::exact("x"), Tag::NN), 1, None)
        );
    }

    #[test]
    fn dangling_and_cycles() {
        assert_eq!(parse_pattern_defs("A = {B}").unwrap_err(), PatternError::DanglingRef("B".into()));
        match parse_pattern_defs("A = {B}\nB = x {A}").unwrap_err() {
            PatternError::Cycle(c) => assert_eq!(c, vec!["A", "B", "A"]),
            e => panic!("{e:?}"),
        }
        match parse_pattern_defs("A = x\nB = (y").unwrap_err() {
            PatternError::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e:?}"),
        }
        assert!(matches!(parse_pattern_defs("A = [Xy]z"), Err(PatternError::Parse { .. })));
        assert!(matches!(parse_pattern_defs("A = x@QQ"), Err(PatternError::Parse { .. })));
    }

    #[test]
    fn search_string_parses() {
        let src = "SEARCH_STRING = (({NOUN_PHRASE}{SPACE})+{SEARCH_0})|({SEARCH_0}{SPACE}{COMMA}{SPACE}{NOUN_PHRASE})\n\
                   SEARCH_109 = [Yy]asser@NP{SPACE}[Aa]rafat@NP\n\
                   SEARCH_0 = {SEARCH_109}\n\
                   NOUN_PHRASE = @DT? @JJ* @NN\n";
        let set = parse_pattern_defs(src).unwrap();
        assert_eq!(set.entry(), "SEARCH_STRING");
        let d = doc("the@DT leader@NN Yasser@NP Arafat@NP said@VB .@PUNCT Yasser@NP Arafat@NP ,@, the@DT leader@NN");
        let spans: Vec<(usize, usize)> = find_matches(&set, &d).iter().map(|m| (m.start, m.end)).collect();
        assert_eq!(spans, vec![(0, 4), (6, 11)]);
    }

    #[test]
    fn entity_pattern_matches() {
        let p = Pattern::from_expr(&compile_entity_pattern(&["Yasser", "Arafat"]).unwrap()).unwrap();
        let d = doc("In@IN Gaza@NP Yasser@NP Arafat@NP said@VB");
        let m = p.find_matches(&d);
        assert_eq!((m[0].start, m[0].end), (2, 4));
        assert!(p.accepts(&parse_tagged("yasser@NP arafat@NP").unwrap()));
        assert!(!p.accepts(&parse_tagged("YASSER@NP Arafat@NP").unwrap()));
        assert!(!p.accepts(&parse_tagged("Yasser@NN Arafat@NP").unwrap()));
        assert_eq!(compile_entity_pattern(&["Dole"]).unwrap(), PatternExpr::word_tag(WordLit::folded("Dole"), Tag::NP));
        assert_eq!(compile_entity_pattern::<&str>(&[]).unwrap_err(), PatternError::EmptyEntity);
        assert_eq!(compile_entity_pattern(&["a", ""]).unwrap_err(), PatternError::EmptyEntity);
    }

    #[test]
    fn john_major_span() {
        let p = Pattern::from_expr(&compile_entity_pattern(&["John", "Major"]).unwrap()).unwrap();
        let d = doc("British@JJ Prime@NP Minister@NP John@NP Major@NP said@VB");
        let m = p.find_matches(&d);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].start, m[0].end), (3, 5));
        assert!(p.find_matches(&doc("")).is_empty());
    }

    #[test]
    fn alternation_returns_document_order() {
        let a = compile_entity_pattern(&["Bill", "Clinton"]).unwrap();
        let b = compile_entity_pattern(&["John", "Major"]).unwrap();
        let p = Pattern::from_expr(&PatternExpr::Alt(vec![b, a])).unwrap();
        let d = doc("Bill@NP Clinton@NP met@VB John@NP Major@NP .@PUNCT");
        let spans: Vec<(usize, usize)> = p.find_matches(&d).iter().map(|m| (m.start, m.end)).collect();
        assert_eq!(spans, vec![(0, 2), (3, 5)]);
    }

    #[test]
    fn no_match_across_sentences() {
        let p = Pattern::from_expr(&compile_entity_pattern(&["A", "B"]).unwrap()).unwrap();
        // The period is not NP so this can never match anyway; use a wildcard
        // run to make the boundary the only obstacle.
        let any = PatternExpr::repeat(PatternExpr::Token(TokenTest::default()), 3, Some(3));
        let q = Pattern::from_expr(&any).unwrap();
        let d = doc("a@NN b@NN .@PUNCT c@NN d@NN e@NN");
        let spans: Vec<(usize, usize)> = q.find_matches(&d).iter().map(|m| (m.start, m.end)).collect();
        assert_eq!(spans, vec![(0, 3), (3, 6)]);
        assert!(p.find_matches(&d).is_empty());
    }

    #[test]
    fn captures_record_last_occurrence() {
        let set = parse_pattern_defs("A = ((?<w> @NN))+ @VB").unwrap();
        let d = doc("a@NN b@NN c@NN ran@VB");
        let m = find_matches(&set, &d);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].captures["w"], (2, 3));
    }

    #[test]
    fn display_round_trips_through_parser() {
        let src = "A = the@DT? [Bb]ig@JJ* ({B} | @NN)+ (?<x> @CD)\nB = x@,";
        let set = parse_pattern_defs(src).unwrap();
        let text = format!("A = {}\nB = {}", set.get("A").unwrap(), set.get("B").unwrap());
        assert_eq!(parse_pattern_defs(&text).unwrap(), set);
    }

    #[test]
    fn reachable_names() {
        let set = parse_pattern_defs("A = {B} {C}\nB = x\nC = {B}\nD = y").unwrap();
        let r = reachable(&set, "A");
        assert_eq!(r.len(), 3);
        assert!(!r.contains("D"));
    }
}
