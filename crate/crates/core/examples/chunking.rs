//! Splits a synthetic document into overlapping token windows, each
//! carrying the running summary slot the extractor later fills.
//!
//! ```text
//! cargo run --example chunking -- 1000 400 100
//! ```

use kgen::chunker::{split, SplitConfig};
use kgen::llm::WhitespaceTokenizer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let (words, window, overlap) = match args[..] {
        [w, n, o] => (w, n, o),
        [] => (1000, 400, 100),
        _ => return Err("usage: chunking [WORDS WINDOW OVERLAP]".into()),
    };
    let text: String = (0..words).map(|i| format!("w{i} ")).collect();
    let chunks = split(&text, &SplitConfig::new(window, overlap)?, &WhitespaceTokenizer)?;
    println!(
        "{words} words, window {window}, overlap {overlap}: {} chunk(s)",
        chunks.len()
    );
    for c in &chunks {
        println!(
            "  #{:<2} words [{:>5}, {:>5})  chars [{:>6}, {:>6})  {} tokens",
            c.index, c.first_word, c.end_word, c.start, c.end, c.token_count
        );
    }
    Ok(())
}
