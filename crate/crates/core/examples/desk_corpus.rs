//! Writes the synthetic desk corpus and a matching config file.
//!
//! ```text
//! cargo run -p bugloc --example desk_corpus -- out/desk [seed]
//! bugloc --config out/desk/bugloc.toml ingest
//! ```

use std::path::PathBuf;

use bugloc::synth::{DeskCorpus, SynthConfig};

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "desk".into()));
    let seed = args.next().map(|s| s.parse().expect("seed must be an integer")).unwrap_or(7);
    let corpus = DeskCorpus::generate(&SynthConfig { seed, ..SynthConfig::default() });
    corpus.write_to(&dir)?;
    let config = format!(
        "[paths]\nbugs = \"bugs.jsonl\"\nprojects = \"projects\"\ntool_results = \"tool_results.csv\"\ncache = \"cache\"\n\n\
         [split]\ncutoff_year = {}\n\n[train]\nseed = {seed}\n",
        corpus.config.cutoff_year
    );
    std::fs::write(dir.join("bugloc.toml"), config)?;
    println!(
        "{} reports, {} projects, {} tool-result rows in {}",
        corpus.reports.len(),
        corpus.snapshots.len(),
        corpus.tool_results.len(),
        dir.display()
    );
    Ok(())
}
