//! Semantic categories from hypernym chains.

use profile::lexdb::LexDb;
use profile::text::parse_tagged;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lex = LexDb::shipped();
    println!("categories: {}", lex.categories().join(", "));
    for word in ["minister", "capital", "boss"] {
        let chain: Vec<String> = lex.hypernym_closure(word).into_iter().collect();
        println!("{word:>10} -> {}", chain.join(", "));
    }
    println!();
    for desc in [
        "the@DT Ethiopian@JJ capital@NN",
        "South@NP Africa@NP 's@$ main@JJ black@JJ opposition@NN leader@NN",
        "33@CD",
        "maverick@JJ French@JJ ex-soccer@JJ boss@NN",
    ] {
        let tokens = parse_tagged(desc)?;
        let found: Vec<String> = lex
            .categorize(&tokens)
            .into_iter()
            .map(|c| format!("{} (trigger {:?})", c.category, c.trigger))
            .collect();
        println!("{desc}\n    {}", found.join("; "));
    }
    Ok(())
}
