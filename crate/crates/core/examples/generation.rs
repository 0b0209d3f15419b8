//! Descriptions to functional descriptions to English.

use profile::extract::DescriptionKind;
use profile::fd::{aggregate, compile_fd, enhance_former, parse_fd, realize};
use profile::text::parse_tagged;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let desc = parse_tagged("Italy@NP 's@$ former@JJ prime@JJ minister@NN")?;
    let entity = parse_tagged("Silvio@NP Berlusconi@NP")?;
    let fd = compile_fd(&desc, DescriptionKind::Premodifier, &entity)?;
    println!("{}\n", fd.pretty());
    println!("{}", realize(&fd)?);

    let yeltsin = compile_fd(&parse_tagged("president@NN")?, DescriptionKind::Premodifier, &parse_tagged("Yeltsin@NP")?)?;
    let clinton = compile_fd(&parse_tagged("president@NN")?, DescriptionKind::Premodifier, &parse_tagged("Clinton@NP")?)?;
    println!("{}", realize(&aggregate(&yeltsin, &clinton)?)?);

    let pm = parse_fd("((cat common) (determiner none) (classifier ((lex prime))) (head ((lex minister))))")?;
    println!("{}", realize(&enhance_former(&pm)?)?);
    Ok(())
}
