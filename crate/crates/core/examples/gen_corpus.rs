//! Generates the default synthetic corpus and prints a summary.
//!
//! cargo run --release --example gen_corpus -- [out.tsv]

use std::time::Instant;

use weaksp::corpus::save_corpus;
use weaksp::search::{coverage_stats, search_corpus, SearchConfig};
use weaksp::syngen::{generate, SynConfig};

fn main() {
    let cfg = SynConfig::default();
    let t0 = Instant::now();
    let (corpus, records) = generate(&cfg).expect("valid config");
    let perturbed = records.iter().filter(|r| r.consistent.is_some()).count();
    println!(
        "{} tables, {} examples, {perturbed}/{} targeted examples perturbed ({:.1}s)",
        corpus.tables.len(),
        corpus.examples.len(),
        records.len(),
        t0.elapsed().as_secs_f64()
    );
    for e in corpus.examples.iter().take(5) {
        let t = corpus.table_of(e);
        println!("  {} | {}", e.question.words().collect::<Vec<_>>().join(" "), e.gold_programs[0].text(t));
    }
    let t1 = Instant::now();
    let sets = search_corpus(&corpus, &SearchConfig::default(), None, 4);
    let stats = coverage_stats(&sets);
    let multi = sets.iter().filter(|s| s.total_count >= 2).count();
    println!(
        "search: coverage {:.3}, mean consistent {:.1}, {} with >=2 programs ({:.1}s)",
        stats.coverage,
        stats.mean_count,
        multi,
        t1.elapsed().as_secs_f64()
    );
    if let Some(path) = std::env::args().nth(1) {
        save_corpus(&corpus, path.as_ref()).expect("write corpus");
        println!("wrote {path}");
    }
}
