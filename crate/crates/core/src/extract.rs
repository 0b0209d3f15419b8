//! Entity-name candidates and description extraction.
//!
//! Candidates are the 2- and 3-word n-grams of runs of proper-noun tokens;
//! candidates containing a dictionary word are weeded out. Descriptions are
//! noun phrases found next to an entity occurrence: a pre-modifier on the
//! left ("president Bill Clinton") or an apposition after a comma ("Addis
//! Ababa, the Ethiopian capital").

use std::fmt;

use chrono::NaiveDate;
use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lexdb::{Categorization, LexDb};
use crate::pattern::{compile_entity_pattern, Pattern, PatternError, PatternExpr, PatternSet};
use crate::text::{render_tagged, sentence_spans, surface, Tag, TaggedDoc, Token};

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("description grammar: {0}")]
    Grammar(#[from] PatternError),
    #[error("bad description record: {0}")]
    Record(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCandidate {
    pub words: Vec<String>,
    pub occurrences: usize,
}

impl EntityCandidate {
    pub fn key(&self) -> String {
        entity_key(&self.words)
    }
}

/// Normalized profile key: lowercase words joined by single spaces.
pub fn entity_key<S: AsRef<str>>(words: &[S]) -> String {
    let lowered: Vec<String> = words.iter().map(|w| w.as_ref().to_lowercase()).collect();
    lowered.join(" ")
}

/// Normalizes free-form entity text ("John  Major") to a key.
pub fn normalize_key(text: &str) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    entity_key(&words)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionKind {
    Premodifier,
    Apposition,
}

impl DescriptionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DescriptionKind::Premodifier => "premodifier",
            DescriptionKind::Apposition => "apposition",
        }
    }
}

impl std::str::FromStr for DescriptionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "premodifier" => Ok(DescriptionKind::Premodifier),
            "apposition" => Ok(DescriptionKind::Apposition),
            _ => Err(format!("unknown description kind {s:?}")),
        }
    }
}

/// One extracted description occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Description {
    pub entity_key: String,
    /// Entity words as they appeared in the text.
    pub entity: Vec<Token>,
    pub tokens: Vec<Token>,
    pub kind: DescriptionKind,
    pub source: String,
    pub date: NaiveDate,
    pub doc_id: String,
    /// Token span of the description within its document.
    pub span: (usize, usize),
    /// Token span of the entity occurrence it describes.
    pub entity_span: (usize, usize),
}

impl Description {
    pub fn text(&self) -> String {
        surface(&self.tokens)
    }

    /// Tab-separated `entity_key, kind, description_tagged, source, date, doc_id`.
    pub fn to_record(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.entity_key,
            self.kind.as_str(),
            render_tagged(&self.tokens),
            self.source,
            self.date.format("%Y-%m-%d"),
            self.doc_id
        )
    }
}

/// A parsed description record line (spans and entity casing are not part of the record).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptionRecord {
    pub entity_key: String,
    pub kind: DescriptionKind,
    pub tokens: Vec<Token>,
    pub source: String,
    pub date: NaiveDate,
    pub doc_id: String,
}

impl std::str::FromStr for DescriptionRecord {
    type Err = ExtractError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let f: Vec<&str> = line.split('\t').collect();
        let [key, kind, tagged, source, date, doc_id] = f.as_slice() else {
            return Err(ExtractError::Record(format!("expected 6 fields, got {}", f.len())));
        };
        Ok(DescriptionRecord {
            entity_key: key.to_string(),
            kind: kind.parse().map_err(ExtractError::Record)?,
            tokens: crate::text::parse_tagged(tagged).map_err(|e| ExtractError::Record(e.to_string()))?,
            source: source.to_string(),
            date: NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(|e| ExtractError::Record(e.to_string()))?,
            doc_id: doc_id.to_string(),
        })
    }
}

/// Every 2-gram and 3-gram inside maximal runs of proper-noun tokens, with
/// occurrence counts, in order of first appearance.
pub fn extract_candidates(corpus: &[TaggedDoc]) -> Vec<EntityCandidate> {
    let mut counts: IndexMap<Vec<String>, usize> = IndexMap::new();
    for doc in corpus {
        let toks = &doc.tokens;
        let mut i = 0;
        while i < toks.len() {
            if toks[i].tag != Tag::NP {
                i += 1;
                continue;
            }
            let run_start = i;
            while i < toks.len() && toks[i].tag == Tag::NP {
                i += 1;
            }
            let run = &toks[run_start..i];
            // n-grams in text order: at each start, the 2-gram then the 3-gram.
            for s in 0..run.len() {
                for n in [2, 3] {
                    if s + n <= run.len() {
                        let words = run[s..s + n].iter().map(|t| t.word().to_string()).collect();
                        *counts.entry(words).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    counts
        .into_iter()
        .map(|(words, occurrences)| EntityCandidate { words, occurrences })
        .collect()
}

/// Drops candidates containing any dictionary word.
pub fn weed_candidates(cands: &[EntityCandidate], lex: &LexDb) -> Vec<EntityCandidate> {
    cands
        .iter()
        .filter(|c| c.words.iter().all(|w| !lex.is_common(w)))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountCells {
    pub entities: usize,
    pub unique: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub two_word: CountCells,
    pub three_word: CountCells,
}

impl StageCounts {
    pub fn of(cands: &[EntityCandidate]) -> Self {
        let mut s = StageCounts::default();
        for c in cands {
            let cell = match c.words.len() {
                2 => &mut s.two_word,
                3 => &mut s.three_word,
                _ => continue,
            };
            cell.entities += c.occurrences;
            cell.unique += 1;
        }
        s
    }
}

/// Candidate counts before and after dictionary weeding, split by length.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub before: StageCounts,
    pub after: StageCounts,
}

impl CandidateReport {
    pub fn new(before: &[EntityCandidate], after: &[EntityCandidate]) -> Self {
        CandidateReport { before: StageCounts::of(before), after: StageCounts::of(after) }
    }
}

impl fmt::Display for CandidateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "stage\ttwo_word_entities\ttwo_word_unique\tthree_word_entities\tthree_word_unique")?;
        for (name, s) in [("candidates", self.before), ("after_weeding", self.after)] {
            writeln!(
                f,
                "{name}\t{}\t{}\t{}\t{}",
                s.two_word.entities, s.two_word.unique, s.three_word.entities, s.three_word.unique
            )?;
        }
        Ok(())
    }
}

/// Finds descriptions around occurrences of a fixed set of entities.
///
/// All entities are matched together as one alternation, so where one name
/// is contained in a longer one ("Rodriguez Orejuela" in "Gilberto Rodriguez
/// Orejuela") only the longer occurrence is reported.
#[derive(Debug, Clone)]
pub struct DescriptionFinder {
    noun_phrase: Pattern,
    entities: Option<Pattern>,
}

impl DescriptionFinder {
    /// `grammar` must define `NOUN_PHRASE`.
    pub fn new<S: AsRef<str>>(grammar: &PatternSet, entities: &[Vec<S>]) -> Result<Self, ExtractError> {
        let noun_phrase = grammar.with_entry("NOUN_PHRASE")?.compile();
        let alts = entities
            .iter()
            .map(|e| compile_entity_pattern(e))
            .collect::<Result<Vec<_>, _>>()?;
        let entities = match alts.len() {
            0 => None,
            1 => Some(Pattern::from_expr(&alts[0])?),
            _ => Some(Pattern::from_expr(&PatternExpr::Alt(alts))?),
        };
        Ok(DescriptionFinder { noun_phrase, entities })
    }

    pub fn find(&self, doc: &TaggedDoc) -> Vec<Description> {
        let Some(entities) = &self.entities else {
            return Vec::new();
        };
        let toks = &doc.tokens;
        let sentences = sentence_spans(toks);
        let mut out = Vec::new();
        for (start, end, _) in entities.find_in(toks) {
            let &(s0, s1) = sentences
                .iter()
                .find(|(a, b)| *a <= start && end <= *b)
                .expect("matches stay inside a sentence");
            let entity = toks[start..end].to_vec();
            let key = entity_key(&entity.iter().map(Token::word).collect::<Vec<_>>());
            let mut push = |span: (usize, usize), kind| {
                out.push(Description {
                    entity_key: key.clone(),
                    entity: entity.clone(),
                    tokens: toks[span.0..span.1].to_vec(),
                    kind,
                    source: doc.source.clone(),
                    date: doc.date,
                    doc_id: doc.id.clone(),
                    span,
                    entity_span: (start, end),
                });
            };
            if let Some(span) = self.premodifier(toks, s0, start) {
                push(span, DescriptionKind::Premodifier);
            }
            if let Some(span) = self.apposition(toks, &entity, end, s1) {
                push(span, DescriptionKind::Apposition);
            }
        }
        out
    }

    // The widest noun phrase ending right before the entity, or right before
    // a comma that precedes it. The comma form only accepts a singular
    // common-noun head ("South Africa's main black opposition leader, ...").
    fn premodifier(&self, toks: &[Token], s0: usize, entity_start: usize) -> Option<(usize, usize)> {
        if entity_start == s0 {
            return None;
        }
        let comma = toks[entity_start - 1].tag == Tag::COMMA;
        let end = if comma { entity_start - 1 } else { entity_start };
        let start = (s0..end).find(|&s| self.noun_phrase.accepts(&toks[s..end]))?;
        let span = &toks[start..end];
        if comma && span.last().map(|t| t.tag) != Some(Tag::NN) {
            return None;
        }
        // A bare proper name after a preposition is a place or an object
        // ("in Gaza Yasser Arafat"), not a description.
        let after_prep = start > s0 && toks[start - 1].tag == Tag::IN;
        if after_prep && span.iter().all(|t| matches!(t.tag, Tag::NP | Tag::POS)) {
            return None;
        }
        Some((start, end))
    }

    // The longest noun phrase after `entity ,`, stopping at the next comma.
    fn apposition(&self, toks: &[Token], entity: &[Token], entity_end: usize, s1: usize) -> Option<(usize, usize)> {
        if entity_end >= s1 || toks[entity_end].tag != Tag::COMMA {
            return None;
        }
        let start = entity_end + 1;
        let limit = (start..s1).find(|&i| toks[i].tag == Tag::COMMA).unwrap_or(s1);
        if start >= limit {
            return None;
        }
        let end = self.noun_phrase.longest_at(toks, start, limit)?;
        let span = &toks[start..end];
        // "Bill Clinton, Clinton ..." is a name list, not a description;
        // "Maurizio Gucci, the former head of Italy's Gucci fashion dynasty"
        // is a description.
        let same = |a: &Token, b: &Token| a.word().eq_ignore_ascii_case(b.word());
        let repeats_name = span.windows(entity.len()).any(|w| w.iter().zip(entity).all(|(a, b)| same(a, b)));
        let bare_name = span.iter().all(|t| matches!(t.tag, Tag::NP | Tag::POS))
            && span.iter().any(|t| entity.iter().any(|e| same(t, e)));
        (!repeats_name && !bare_name).then_some((start, end))
    }
}

/// Descriptions of one entity across a corpus, in corpus order.
pub fn extract_descriptions<S: AsRef<str>>(
    entity_words: &[S],
    corpus: &[TaggedDoc],
    np_grammar: &PatternSet,
) -> Result<Vec<Description>, ExtractError> {
    let words: Vec<String> = entity_words.iter().map(|w| w.as_ref().to_string()).collect();
    let finder = DescriptionFinder::new(np_grammar, &[words])?;
    Ok(corpus.iter().flat_map(|d| finder.find(d)).collect())
}

/// Search definitions for a set of entities: one
/// `SEARCH_<n>` per entity, their union `SEARCH_0`, and `SEARCH_STRING`
/// matching a pre-modifier or apposition around any of them. The result
/// references `NOUN_PHRASE`, so it is meant to be combined with a grammar.
pub fn search_definitions<S: AsRef<str>>(entities: &[Vec<S>]) -> Result<String, PatternError> {
    let mut out = String::from(
        "SEARCH_STRING = (({NOUN_PHRASE}{SPACE})+{SEARCH_0})|({SEARCH_0}{SPACE}{COMMA}{SPACE}{NOUN_PHRASE})\n",
    );
    let refs: Vec<String> = (1..=entities.len()).map(|i| format!("{{SEARCH_{i}}}")).collect();
    out.push_str(&format!("SEARCH_0 = {}\n", refs.join("|")));
    for (i, e) in entities.iter().enumerate() {
        let expr = compile_entity_pattern(e)?;
        let body = match &expr {
            PatternExpr::Seq(parts) => {
                parts.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("{SPACE}")
            }
            single => single.to_string(),
        };
        out.push_str(&format!("SEARCH_{} = {body}\n", i + 1));
    }
    Ok(out)
}

/// [`search_definitions`] merged with the grammar, entry `SEARCH_STRING`.
pub fn search_pattern_set<S: AsRef<str>>(
    entities: &[Vec<S>],
    grammar: &PatternSet,
) -> Result<PatternSet, PatternError> {
    if entities.is_empty() {
        return Err(PatternError::EmptyEntity);
    }
    let defs = crate::pattern::parse_definitions(&search_definitions(entities)?)?;
    grammar.extend(defs, "SEARCH_STRING")
}

/// A description with the categories it triggered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategorizedDescription {
    pub description: Description,
    pub categories: Vec<Categorization>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: CandidateReport,
    /// Candidates that survived weeding.
    pub entities: Vec<EntityCandidate>,
    pub descriptions: Vec<CategorizedDescription>,
}

/// Candidate extraction, weeding, description extraction for all surviving
/// entities, and categorization. Documents are processed in parallel and
/// merged in corpus order.
pub fn run_pipeline(
    corpus: &[TaggedDoc],
    lex: &LexDb,
    np_grammar: &PatternSet,
) -> Result<PipelineOutput, ExtractError> {
    let candidates = extract_candidates(corpus);
    let entities = weed_candidates(&candidates, lex);
    let report = CandidateReport::new(&candidates, &entities);
    let names: Vec<Vec<String>> = entities.iter().map(|e| e.words.clone()).collect();
    let finder = DescriptionFinder::new(np_grammar, &names)?;
    let per_doc: Vec<Vec<CategorizedDescription>> = corpus
        .par_iter()
        .map(|doc| {
            finder
                .find(doc)
                .into_iter()
                .map(|d| {
                    let categories = lex.categorize(&d.tokens);
                    CategorizedDescription { description: d, categories }
                })
                .collect()
        })
        .collect();
    Ok(PipelineOutput { report, entities, descriptions: per_doc.into_iter().flatten().collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::noun_phrase_grammar;
    use crate::text::parse_tagged;

    fn doc(id: &str, tagged: &str) -> TaggedDoc {
        TaggedDoc {
            id: id.into(),
            source: "test".into(),
            date: NaiveDate::from_ymd_opt(1995, 6, 25).unwrap(),
            tokens: parse_tagged(tagged).unwrap(),
        }
    }

    fn words(c: &EntityCandidate) -> Vec<&str> {
        c.words.iter().map(String::as_str).collect()
    }

    #[test]
    fn candidates_from_np_runs() {
        let c = extract_candidates(&[doc("a", "Bill@NP Clinton@NP said@VB")]);
        assert_eq!(c.len(), 1);
        assert_eq!((words(&c[0]), c[0].occurrences), (vec!["Bill", "Clinton"], 1));
        assert!(extract_candidates(&[doc("a", "the@DT boss@NN said@VB")]).is_empty());
        let c = extract_candidates(&[doc("a", "Palestine@NP Liberation@NP Organization@NP")]);
        let got: Vec<Vec<&str>> = c.iter().map(words).collect();
        assert_eq!(
            got,
            vec![
                vec!["Palestine", "Liberation"],
                vec!["Palestine", "Liberation", "Organization"],
                vec!["Liberation", "Organization"],
            ]
        );
    }

    #[test]
    fn weeding() {
        let lex = LexDb::shipped();
        let cands = vec![
            EntityCandidate { words: vec!["Prime".into(), "Minister".into()], occurrences: 3 },
            EntityCandidate { words: vec!["Bill".into(), "Clinton".into()], occurrences: 2 },
        ];
        let kept = weed_candidates(&cands, &lex);
        assert_eq!(kept, vec![cands[1].clone()]);
        assert!(weed_candidates(&[], &lex).is_empty());
    }

    #[test]
    fn apposition_and_premodifier() {
        let g = noun_phrase_grammar();
        let corpus = [doc("a", "Addis@NP Ababa@NP ,@, the@DT Ethiopian@JJ capital@NN ,@, hosted@VB")];
        let d = extract_descriptions(&["Addis", "Ababa"], &corpus, g).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].text().as_str(), d[0].kind), ("the Ethiopian capital", DescriptionKind::Apposition));

        let corpus = [doc("b", "maverick@JJ French@JJ ex-soccer@JJ boss@NN Bernard@NP Tapie@NP")];
        let d = extract_descriptions(&["Bernard", "Tapie"], &corpus, g).unwrap();
        assert_eq!((d[0].text().as_str(), d[0].kind), ("maverick French ex-soccer boss", DescriptionKind::Premodifier));

        assert!(extract_descriptions(&["Nobody", "Here"], &corpus, g).unwrap().is_empty());
    }

    #[test]
    fn of_phrase_attaches() {
        let corpus = [doc(
            "c",
            "Gilberto@NP Rodriguez@NP Orejuela@NP ,@, the@DT head@NN of@IN the@DT Cali@NP cocaine@NN cartel@NN .@PUNCT",
        )];
        let d = extract_descriptions(&["Gilberto", "Rodriguez", "Orejuela"], &corpus, noun_phrase_grammar()).unwrap();
        assert_eq!(d[0].text(), "the head of the Cali cocaine cartel");
    }

    #[test]
    fn longer_entity_wins_in_union() {
        let corpus = [doc(
            "c",
            "Gilberto@NP Rodriguez@NP Orejuela@NP ,@, the@DT head@NN of@IN the@DT Cali@NP cocaine@NN cartel@NN .@PUNCT",
        )];
        let finder = DescriptionFinder::new(
            noun_phrase_grammar(),
            &[vec!["Rodriguez", "Orejuela"], vec!["Gilberto", "Rodriguez", "Orejuela"]],
        )
        .unwrap();
        let d = finder.find(&corpus[0]);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].entity_key, "gilberto rodriguez orejuela");
    }

    #[test]
    fn prepositional_names_are_not_descriptions() {
        let corpus = [doc("g", "In@IN Gaza@NP Yasser@NP Arafat@NP said@VB .@PUNCT")];
        assert!(extract_descriptions(&["Yasser", "Arafat"], &corpus, noun_phrase_grammar()).unwrap().is_empty());
        let corpus = [doc("g", "by@IN Italy@NP 's@$ former@JJ prime@JJ minister@NN Silvio@NP Berlusconi@NP")];
        let d = extract_descriptions(&["Silvio", "Berlusconi"], &corpus, noun_phrase_grammar()).unwrap();
        assert_eq!(d[0].text(), "Italy's former prime minister");
    }

    #[test]
    fn comma_premodifier_needs_singular_common_head() {
        let g = noun_phrase_grammar();
        let corpus = [doc("l", "world@NN leaders@NNS ,@, Bill@NP Clinton@NP said@VB")];
        assert!(extract_descriptions(&["Bill", "Clinton"], &corpus, g).unwrap().is_empty());
        let corpus = [doc("l", "Italy@NP 's@$ former@JJ prime@JJ minister@NN ,@, Silvio@NP Berlusconi@NP")];
        let d = extract_descriptions(&["Silvio", "Berlusconi"], &corpus, g).unwrap();
        assert_eq!((d[0].text().as_str(), d[0].kind), ("Italy's former prime minister", DescriptionKind::Premodifier));
    }

    #[test]
    fn appositions_never_repeat_the_name() {
        let corpus = [doc("x", "Bill@NP Clinton@NP ,@, Clinton@NP said@VB")];
        assert!(extract_descriptions(&["Bill", "Clinton"], &corpus, noun_phrase_grammar()).unwrap().is_empty());
        let corpus = [doc("y", "Maurizio@NP Gucci@NP ,@, the@DT former@JJ head@NN of@IN Italy@NP 's@$ Gucci@NP fashion@NN dynasty@NN ,@, was@VB")];
        let d = extract_descriptions(&["Maurizio", "Gucci"], &corpus, noun_phrase_grammar()).unwrap();
        assert_eq!(d[0].text(), "the former head of Italy's Gucci fashion dynasty");
        assert_eq!(d[0].tokens.len(), 9);
    }

    #[test]
    fn record_round_trip() {
        let corpus = [doc("r", "Boerge@NP Ousland@NP ,@, 33@CD ,@, reached@VB")];
        let d = extract_descriptions(&["Boerge", "Ousland"], &corpus, noun_phrase_grammar()).unwrap();
        let line = d[0].to_record();
        assert_eq!(line, "boerge ousland\tapposition\t33@CD\ttest\t1995-06-25\tr");
        let rec: DescriptionRecord = line.parse().unwrap();
        assert_eq!(rec.tokens, d[0].tokens);
        assert!("a\tb".parse::<DescriptionRecord>().is_err());
    }

    #[test]
    fn search_string_set_finds_both_forms() {
        let set = search_pattern_set(&[vec!["Yasser", "Arafat"]], noun_phrase_grammar()).unwrap();
        assert_eq!(set.entry(), "SEARCH_STRING");
        let d = doc("s", "Palestinian@JJ leader@NN Yasser@NP Arafat@NP arrived@VB .@PUNCT Yasser@NP Arafat@NP ,@, the@DT leader@NN");
        let spans: Vec<(usize, usize)> = crate::pattern::find_matches(&set, &d).iter().map(|m| (m.start, m.end)).collect();
        assert_eq!(spans, vec![(0, 4), (6, 11)]);
        let text = search_definitions(&[vec!["Yasser", "Arafat"]]).unwrap();
        assert!(text.contains("SEARCH_1 = [Yy]asser@NP{SPACE}[Aa]rafat@NP"));
    }

    #[test]
    fn pipeline_on_empty_corpus() {
        let out = run_pipeline(&[], &LexDb::shipped(), noun_phrase_grammar()).unwrap();
        assert!(out.entities.is_empty() && out.descriptions.is_empty());
        assert_eq!(out.report, CandidateReport::default());
    }
}
