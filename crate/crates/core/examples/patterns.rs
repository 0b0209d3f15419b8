//! Token-level patterns: define, compile, and scan a tagged sentence.

use profile::pattern::parse_pattern_defs;
use profile::text::parse_tagged;

const DEFS: &str = "\
TITLED = (?<title>{TITLE}+) (?<name>@NP @NP)
TITLE = @JJ | [Pp]resident | [Pp]rime | [Mm]inister
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let set = parse_pattern_defs(DEFS)?;
    let pattern = set.compile();
    let tokens = parse_tagged(
        "Russian@JJ President@NP Boris@NP Yeltsin@NP met@VB Prime@NP Minister@NP John@NP Major@NP .@PUNCT",
    )?;
    for (start, end, captures) in pattern.find_in(&tokens) {
        let words: Vec<&str> = tokens[start..end].iter().map(|t| t.word()).collect();
        println!("[{start}, {end}) {}", words.join(" "));
        for (label, (s, e)) in &captures {
            let part: Vec<&str> = tokens[*s..*e].iter().map(|t| t.word()).collect();
            println!("  {label}: {}", part.join(" "));
        }
    }

    // The bundled description grammar accepts whole noun phrases.
    let np = profile::data::noun_phrase_pattern();
    for phrase in ["the@DT Ethiopian@JJ capital@NN", "was@VB calm@JJ"] {
        println!("{phrase:40} {}", np.accepts(&parse_tagged(phrase)?));
    }
    Ok(())
}
