//! Full extraction over a corpus: entity candidates, weeding, descriptions.
//!
//!     cargo run --example extraction -- [CORPUS_PATH]

use std::path::PathBuf;

use profile::extract::run_pipeline;
use profile::lexdb::LexDb;
use profile::text::{load_corpus, Tagger};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus"));
    let docs = load_corpus(&path, "local", &Tagger::shipped())?;
    let out = run_pipeline(&docs, &LexDb::shipped(), profile::data::noun_phrase_grammar())?;

    print!("{}", out.report);
    println!();
    for cd in &out.descriptions {
        let d = &cd.description;
        println!("{:<28} {:<12} {}", d.entity_key, d.kind.as_str(), d.text());
    }
    Ok(())
}
