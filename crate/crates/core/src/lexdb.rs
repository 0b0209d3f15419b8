//! Common-word dictionary, hypernym taxonomy and trigger-based semantic
//! categorization of descriptions.
//!
//! The taxonomy is word-level (`child<TAB>parent`), not synset-level, and is
//! not sense-disambiguated: "Rice University" triggers `food` through "rice".

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::text::{Tag, Token};

/// Reserved anchor for the number-only age rule.
pub const NUMERIC: &str = "NUMERIC";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LexError {
    #[error("{file} line {line}: {message}")]
    Format { file: &'static str, line: usize, message: String },
    #[error("taxonomy cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("rule anchor {anchor:?} for category {category:?} is not in the taxonomy")]
    UnresolvedAnchor { category: String, anchor: String },
    #[error("anchor {anchor:?} has more than one category")]
    DuplicateAnchor { anchor: String },
    #[error("i/o error reading {0}: {1}")]
    Io(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryRule {
    pub category: String,
    pub anchor: String,
}

/// A fired category: which word triggered it and through which anchor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Categorization {
    pub category: String,
    pub trigger: String,
    pub anchor: String,
}

#[derive(Debug, Clone, Default)]
pub struct LexDb {
    dictionary: HashSet<String>,
    hypernyms: HashMap<String, Vec<String>>,
    rules: Vec<CategoryRule>,
}

impl LexDb {
    pub fn from_parts(
        dictionary: HashSet<String>,
        hypernyms: HashMap<String, Vec<String>>,
        rules: Vec<CategoryRule>,
    ) -> Result<Self, LexError> {
        let db = LexDb { dictionary, hypernyms, rules };
        db.check_acyclic()?;
        db.check_rules()?;
        Ok(db)
    }

    /// Parses the three text formats: one word per line; `child<TAB>parent`;
    /// `category<TAB>anchor`.
    pub fn parse(dictionary: &str, taxonomy: &str, rules: &str) -> Result<Self, LexError> {
        let dict = data_lines(dictionary).map(|(_, l)| l.to_lowercase()).collect();

        let mut hypernyms: HashMap<String, Vec<String>> = HashMap::new();
        for (n, line) in data_lines(taxonomy) {
            let (child, parent) = split_pair(line, "taxonomy", n)?;
            let parents = hypernyms.entry(child.to_lowercase()).or_default();
            let parent = parent.to_lowercase();
            if !parents.contains(&parent) {
                parents.push(parent);
            }
        }

        let mut parsed = Vec::new();
        for (n, line) in data_lines(rules) {
            let (category, anchor) = split_pair(line, "rules", n)?;
            let anchor = if anchor == NUMERIC { anchor.to_string() } else { anchor.to_lowercase() };
            parsed.push(CategoryRule { category: category.to_string(), anchor });
        }
        LexDb::from_parts(dict, hypernyms, parsed)
    }

    pub fn load(dictionary: &Path, taxonomy: &Path, rules: &Path) -> Result<Self, LexError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| LexError::Io(p.display().to_string(), e.to_string()))
        };
        LexDb::parse(&read(dictionary)?, &read(taxonomy)?, &read(rules)?)
    }

    /// The dictionary, taxonomy and rules bundled with the crate.
    pub fn shipped() -> Self {
        LexDb::parse(crate::data::DICTIONARY, crate::data::TAXONOMY, crate::data::CATEGORIES)
            .expect("bundled lexical data is valid")
    }

    fn check_acyclic(&self) -> Result<(), LexError> {
        // 0 = unvisited, 1 = on stack, 2 = done
        fn visit<'a>(
            w: &'a str,
            g: &'a HashMap<String, Vec<String>>,
            state: &mut HashMap<&'a str, u8>,
            stack: &mut Vec<&'a str>,
        ) -> Result<(), LexError> {
            match state.get(w) {
                Some(2) => return Ok(()),
                Some(1) => {
                    let at = stack.iter().position(|s| *s == w).unwrap_or(0);
                    let mut cycle: Vec<String> = stack[at..].iter().map(|s| s.to_string()).collect();
                    cycle.push(w.to_string());
                    return Err(LexError::Cycle(cycle));
                }
                _ => {}
            }
            state.insert(w, 1);
            stack.push(w);
            for p in g.get(w).into_iter().flatten() {
                visit(p, g, state, stack)?;
            }
            stack.pop();
            state.insert(w, 2);
            Ok(())
        }
        let mut state = HashMap::new();
        let mut roots: Vec<&String> = self.hypernyms.keys().collect();
        roots.sort();
        for w in roots {
            visit(w, &self.hypernyms, &mut state, &mut Vec::new())?;
        }
        Ok(())
    }

    fn check_rules(&self) -> Result<(), LexError> {
        let nodes: HashSet<&str> = self
            .hypernyms
            .iter()
            .flat_map(|(c, ps)| std::iter::once(c.as_str()).chain(ps.iter().map(String::as_str)))
            .collect();
        let mut seen: HashMap<&str, &str> = HashMap::new();
        for rule in &self.rules {
            if rule.anchor != NUMERIC && !nodes.contains(rule.anchor.as_str()) {
                return Err(LexError::UnresolvedAnchor {
                    category: rule.category.clone(),
                    anchor: rule.anchor.clone(),
                });
            }
            if let Some(prev) = seen.insert(&rule.anchor, &rule.category) {
                if prev != rule.category {
                    return Err(LexError::DuplicateAnchor { anchor: rule.anchor.clone() });
                }
            }
        }
        Ok(())
    }

    pub fn is_common(&self, word: &str) -> bool {
        !word.is_empty() && self.dictionary.contains(&word.to_lowercase())
    }

    /// All ancestors of `word` (not including `word`).
    pub fn hypernym_closure(&self, word: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<&str> = self
            .hypernyms
            .get(&word.to_lowercase())
            .into_iter()
            .flatten()
            .map(String::as_str)
            .collect();
        while let Some(w) = stack.pop() {
            if out.insert(w.to_string()) {
                stack.extend(self.hypernyms.get(w).into_iter().flatten().map(String::as_str));
            }
        }
        out
    }

    /// Category labels in rule order, deduplicated.
    pub fn categories(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rules {
            if !out.contains(&r.category) {
                out.push(r.category.clone());
            }
        }
        out
    }

    pub fn rules(&self) -> &[CategoryRule] {
        &self.rules
    }

    pub fn add_edge(&mut self, child: &str, parent: &str) -> Result<(), LexError> {
        let child = child.to_lowercase();
        let parent = parent.to_lowercase();
        let parents = self.hypernyms.entry(child.clone()).or_default();
        if parents.contains(&parent) {
            return Ok(());
        }
        parents.push(parent);
        let checked = self.check_acyclic();
        if checked.is_err() {
            let parents = self.hypernyms.get_mut(&child).expect("just inserted");
            parents.pop();
            if parents.is_empty() {
                self.hypernyms.remove(&child);
            }
        }
        checked
    }

    /// Assigns semantic categories to a description.
    ///
    /// A description made of a single number fires the `NUMERIC` rule. Any
    /// other word fires a rule when the word itself or one of its hypernyms is
    /// the rule's anchor. Each category is reported once, for its first
    /// trigger in token order. Triggers are lowercased.
    pub fn categorize(&self, description: &[Token]) -> Vec<Categorization> {
        let mut out: Vec<Categorization> = Vec::new();
        let push = |c: Categorization, out: &mut Vec<Categorization>| {
            if !out.iter().any(|x| x.category == c.category) {
                out.push(c);
            }
        };
        if let [only] = description {
            if only.tag == Tag::CD {
                if let Some(rule) = self.rules.iter().find(|r| r.anchor == NUMERIC) {
                    push(
                        Categorization {
                            category: rule.category.clone(),
                            trigger: only.word().to_string(),
                            anchor: NUMERIC.to_string(),
                        },
                        &mut out,
                    );
                }
                return out;
            }
        }
        for tok in description {
            if matches!(tok.tag, Tag::CD | Tag::COMMA | Tag::PUNCT | Tag::POS) {
                continue;
            }
            let lower = tok.word().to_lowercase();
            let mut reach = self.hypernym_closure(&lower);
            reach.insert(lower.clone());
            for rule in &self.rules {
                if rule.anchor != NUMERIC && reach.contains(&rule.anchor) {
                    push(
                        Categorization {
                            category: rule.category.clone(),
                            trigger: lower.clone(),
                            anchor: rule.anchor.clone(),
                        },
                        &mut out,
                    );
                }
            }
        }
        out
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn split_pair<'a>(line: &'a str, file: &'static str, n: usize) -> Result<(&'a str, &'a str), LexError> {
    match line.split('\t').map(str::trim).collect::<Vec<_>>().as_slice() {
        [a, b] if !a.is_empty() && !b.is_empty() => Ok((a, b)),
        _ => Err(LexError::Format { file, line: n, message: format!("expected two tab-separated fields in {line:?}") }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::parse_tagged;

    fn toks(s: &str) -> Vec<Token> {
        parse_tagged(s).unwrap()
    }

    #[test]
    fn leader_anchor_loads() {
        let tax = "minister\tleader\nhead\tleader\nadministrator\tleader\ncommissioner\tleader\n";
        let db = LexDb::parse("", tax, "occupation\tleader\n").unwrap();
        for w in ["minister", "head", "administrator", "commissioner"] {
            assert!(db.hypernym_closure(w).contains("leader"), "{w}");
        }
    }

    #[test]
    fn empty_files_load() {
        let db = LexDb::parse("", "", "").unwrap();
        assert!(db.hypernym_closure("x").is_empty());
        assert!(db.categorize(&toks("x@NN")).is_empty());
    }

    #[test]
    fn cycle_is_rejected() {
        assert!(matches!(LexDb::parse("", "a\tb\nb\ta\n", ""), Err(LexError::Cycle(_))));
        let mut db = LexDb::parse("", "a\tb\n", "").unwrap();
        assert!(matches!(db.add_edge("b", "a"), Err(LexError::Cycle(_))));
    }

    #[test]
    fn unresolved_anchor() {
        let err = LexDb::parse("", "a\tb\n", "x\tzzz\n").unwrap_err();
        assert!(matches!(err, LexError::UnresolvedAnchor { .. }));
        assert!(LexDb::parse("", "", "age\tNUMERIC\n").is_ok());
        assert!(matches!(LexDb::parse("", "a\tb", "x\tb\ny\tb"), Err(LexError::DuplicateAnchor { .. })));
        assert!(matches!(LexDb::parse("", "a b", ""), Err(LexError::Format { .. })));
    }

    #[test]
    fn shipped_dictionary() {
        let db = LexDb::shipped();
        assert!(db.is_common("Prime"));
        assert!(db.is_common("Minister"));
        assert!(!db.is_common("Clinton"));
        assert!(!db.is_common("Bill"));
        assert!(!db.is_common(""));
    }

    #[test]
    fn shipped_closures() {
        let db = LexDb::shipped();
        assert!(db.hypernym_closure("minister").contains("leader"));
        assert!(db.hypernym_closure("zzzq").is_empty());
        assert!(db.hypernym_closure("capital").contains("location"));
        assert!(!db.hypernym_closure("minister").contains("minister"));
    }

    #[test]
    fn categorize_table_rows() {
        let db = LexDb::shipped();
        let c = db.categorize(&toks("the@DT Ethiopian@JJ capital@NN"));
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].category.as_str(), c[0].trigger.as_str()), ("location", "capital"));
        let c = db.categorize(&toks("33@CD"));
        assert_eq!((c[0].category.as_str(), c[0].trigger.as_str()), ("age", "33"));
        let c = db.categorize(&toks("the@DT political@JJ arm@NN of@IN the@DT Irish@NP Republican@NP Army@NP"));
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].category.as_str(), c[0].trigger.as_str()), ("organization", "arm"));
        assert!(db.categorize(&toks("Zqx@NP Vvr@NP")).is_empty());
    }

    #[test]
    fn numbers_only_mean_age_alone() {
        let db = LexDb::shipped();
        let c = db.categorize(&toks("33@CD soldiers@NNS"));
        assert!(c.iter().all(|c| c.category != "age"));
    }

    #[test]
    fn polysemy_is_not_resolved() {
        // "Rice University" is misread through the grain sense of "rice".
        let db = LexDb::shipped();
        let c = db.categorize(&toks("Rice@NP University@NP"));
        assert_eq!(c[0].category, "food");
        assert_eq!(c[0].trigger, "rice");
    }

    #[test]
    fn triggers_occur_in_description() {
        let db = LexDb::shipped();
        let d = toks("Italy@NP 's@$ former@JJ prime@JJ minister@NN");
        for c in db.categorize(&d) {
            assert!(d.iter().any(|t| t.word().to_lowercase() == c.trigger));
        }
    }

    #[test]
    fn adding_edges_never_removes_categories() {
        let mut db = LexDb::parse("", "minister\tleader\nboss\tsupervisor\n", "occupation\tleader\n").unwrap();
        let d = toks("boss@NN and@CC minister@NN");
        let before = db.categorize(&d);
        db.add_edge("supervisor", "leader").unwrap();
        let after = db.categorize(&d);
        assert!(before.iter().all(|b| after.iter().any(|a| a.category == b.category)));
    }
}
