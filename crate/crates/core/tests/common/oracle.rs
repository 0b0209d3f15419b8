//! Brute-force reference semantics for pattern sets: each expression denotes
//! the set of end positions reachable from a start position.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;

use profile::pattern::{PatternExpr, PatternSet, TokenTest, WordLit};
use profile::text::{sentence_spans, Tag, Token};

const WORDS: [&str; 5] = ["a", "b", "Cd", "e", "F"];
const TAGS: [Tag; 4] = [Tag::NP, Tag::NN, Tag::JJ, Tag::DT];

#[derive(Debug, Clone)]
pub struct Instance {
    pub set: PatternSet,
    pub tokens: Vec<Token>,
}

fn ends(set: &PatternSet, e: &PatternExpr, toks: &[Token], i: usize) -> BTreeSet<usize> {
    match e {
        PatternExpr::Token(t) => {
            let hit = toks.get(i).is_some_and(|tok| {
                t.tag.is_none_or(|g| g == tok.tag)
                    && t.word.as_ref().is_none_or(|w| word_eq(w, tok.word()))
            });
            if hit { BTreeSet::from([i + 1]) } else { BTreeSet::new() }
        }
        PatternExpr::Ref(n) => ends(set, set.get(n).expect("defined"), toks, i),
        PatternExpr::Capture { expr, .. } => ends(set, expr, toks, i),
        PatternExpr::Alt(xs) => xs.iter().flat_map(|x| ends(set, x, toks, i)).collect(),
        PatternExpr::Seq(xs) => {
            let mut cur = BTreeSet::from([i]);
            for x in xs {
                cur = cur.iter().flat_map(|&p| ends(set, x, toks, p)).collect();
            }
            cur
        }
        PatternExpr::Repeat { expr, min, max } => {
            let mut out = BTreeSet::new();
            if *min == 0 {
                out.insert(i);
            }
            let mut cur = BTreeSet::from([i]);
            let mut k = 0u32;
            loop {
                k += 1;
                if max.is_some_and(|m| k > m) {
                    break;
                }
                let next: BTreeSet<usize> = cur.iter().flat_map(|&p| ends(set, expr, toks, p)).collect();
                if next.is_empty() {
                    break;
                }
                if k >= *min {
                    let fresh = next.difference(&out).count();
                    out.extend(next.iter().copied());
                    if max.is_none() && fresh == 0 && k > *min {
                        break;
                    }
                }
                cur = next;
            }
            out
        }
    }
}

// Independent of WordLit::matches on purpose.
fn word_eq(w: &WordLit, word: &str) -> bool {
    if !w.fold_first {
        return w.text == word;
    }
    let lower = |s: &str| {
        let mut c = s.chars();
        match c.next() {
            Some(f) => f.to_lowercase().collect::<String>() + c.as_str(),
            None => String::new(),
        }
    };
    lower(&w.text) == lower(word)
}

/// Tests every `(start, end)` substring for acceptance, then keeps the
/// leftmost-longest non-empty matches, per sentence, without overlap.
pub fn oracle_matches(set: &PatternSet, toks: &[Token]) -> Vec<(usize, usize)> {
    let entry = set.get(set.entry()).expect("entry");
    let accepts = |sub: &[Token]| ends(set, entry, sub, 0).contains(&sub.len());
    let mut out = Vec::new();
    for (s, e) in sentence_spans(toks) {
        let mut pos = s;
        while pos < e {
            match (pos + 1..=e).rev().find(|&end| accepts(&toks[pos..end])) {
                Some(end) => {
                    out.push((pos, end));
                    pos = end;
                }
                None => pos += 1,
            }
        }
    }
    out
}

pub fn engine_matches(set: &PatternSet, toks: &[Token]) -> Vec<(usize, usize)> {
    set.compile().find_in(toks).into_iter().map(|(s, e, _)| (s, e)).collect()
}

/// Expression shape with unresolved references; `Ref(r)` is resolved against
/// the definitions that come after the one being built.
#[derive(Debug, Clone)]
enum Shape {
    Test(Option<usize>, Option<usize>, bool),
    Ref(usize),
    Seq(Vec<Shape>),
    Alt(Vec<Shape>),
    Repeat(Box<Shape>, u32, Option<u32>),
    Capture(Box<Shape>),
}

fn shape() -> impl Strategy<Value = Shape> {
    let leaf = prop_oneof![
        4 => (proptest::option::of(0..WORDS.len()), proptest::option::of(0..TAGS.len()), any::<bool>())
            .prop_map(|(w, t, f)| Shape::Test(w, t, f)),
        1 => (0usize..8).prop_map(Shape::Ref),
    ];
    leaf.prop_recursive(3, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..=3).prop_map(Shape::Seq),
            prop::collection::vec(inner.clone(), 1..=3).prop_map(Shape::Alt),
            (inner.clone(), 0u32..=2, proptest::option::of(0u32..=2))
                .prop_map(|(x, min, extra)| Shape::Repeat(Box::new(x), min, extra.map(|d| min.max(1) + d))),
            inner.prop_map(|x| Shape::Capture(Box::new(x))),
        ]
    })
}

fn build(s: &Shape, index: usize, count: usize) -> PatternExpr {
    match s {
        Shape::Test(w, t, fold) => PatternExpr::Token(TokenTest {
            word: w.map(|w| if *fold { WordLit::folded(WORDS[w]) } else { WordLit::exact(WORDS[w]) }),
            tag: t.map(|t| TAGS[t]),
        }),
        Shape::Ref(r) if index + 1 < count => {
            let later = count - index - 1;
            PatternExpr::Ref(format!("D{}", index + 1 + r % later))
        }
        Shape::Ref(r) => PatternExpr::tag_is(TAGS[r % TAGS.len()]),
        Shape::Seq(xs) => PatternExpr::Seq(xs.iter().map(|x| build(x, index, count)).collect()),
        Shape::Alt(xs) => PatternExpr::Alt(xs.iter().map(|x| build(x, index, count)).collect()),
        Shape::Repeat(x, min, max) => PatternExpr::repeat(build(x, index, count), *min, *max),
        Shape::Capture(x) => PatternExpr::capture(format!("c{index}"), build(x, index, count)),
    }
}

fn token() -> impl Strategy<Value = Token> {
    prop_oneof![
        12 => (0..WORDS.len(), 0..TAGS.len(), any::<bool>()).prop_map(|(w, t, up)| {
            let word = if up { capitalize(WORDS[w]) } else { WORDS[w].to_string() };
            Token::new(word, TAGS[t]).unwrap()
        }),
        1 => Just(Token::new(".", Tag::PUNCT).unwrap()),
    ]
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_uppercase().collect::<String>() + c.as_str()).unwrap_or_default()
}

/// Up to four definitions (acyclic by construction), nesting depth at most
/// three, and up to twelve tokens.
pub fn instance() -> impl Strategy<Value = Instance> {
    (prop::collection::vec(shape(), 1..=4), prop::collection::vec(token(), 0..=12)).prop_map(|(shapes, tokens)| {
        let count = shapes.len();
        let defs: IndexMap<String, PatternExpr> =
            shapes.iter().enumerate().map(|(i, s)| (format!("D{i}"), build(s, i, count))).collect();
        Instance { set: PatternSet::new(defs, "D0").expect("acyclic by construction"), tokens }
    })
}

pub struct Agreement {
    pub agree: usize,
    /// Instances where the oracle found at least one match.
    pub nonempty: usize,
    pub first_failure: Option<String>,
}

/// Runs `n` deterministic instances against the oracle.
pub fn agreement(n: usize) -> Agreement {
    let mut runner = TestRunner::deterministic();
    let strategy = instance();
    let mut agree = 0;
    let mut nonempty = 0;
    let mut first = None;
    for _ in 0..n {
        let inst = strategy.new_tree(&mut runner).expect("generate").current();
        let want = oracle_matches(&inst.set, &inst.tokens);
        let got = engine_matches(&inst.set, &inst.tokens);
        nonempty += usize::from(!want.is_empty());
        if want == got {
            agree += 1;
        } else if first.is_none() {
            first = Some(format!("{inst:?}\noracle {want:?}\nengine {got:?}"));
        }
    }
    Agreement { agree, nonempty, first_failure: first }
}
