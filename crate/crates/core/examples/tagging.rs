//! Tag raw text with the bundled lexicon and suffix rules.
//!
//!     cargo run --example tagging -- "Canadian Prime Minister Jean Chretien opened the summit."

use profile::text::{render_tagged, sentence_spans, Tagger};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = std::env::args().nth(1).unwrap_or_else(|| {
        "Addis Ababa, the Ethiopian capital, was calm on Sunday. \
         Prime Minister John Major said he would stay."
            .to_string()
    });
    let tokens = Tagger::shipped().tag_text(&text)?;
    for (start, end) in sentence_spans(&tokens) {
        println!("{}", render_tagged(&tokens[start..end]));
    }
    Ok(())
}
