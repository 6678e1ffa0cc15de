//! Trains structured and standard attention on the same synthetic corpus
//! and compares the probability each assigns to the gold program among
//! all consistent programs.
//!
//! cargo run --release --example spuriousness_analysis -- [epochs]

use std::time::Instant;

use weaksp::evalkit::{mean_gold_posterior, sets_by_id, split_accuracy};
use weaksp::model::{AttentionMode, ModelConfig, Parser, Vocab};
use weaksp::search::{search_corpus, SearchConfig};
use weaksp::syngen::{generate, SynConfig};
use weaksp::table::Split;
use weaksp::trainer::{train, TrainConfig};

fn main() {
    let epochs: usize = std::env::args().nth(1).map_or(10, |s| s.parse().expect("epochs"));
    let (corpus, _) = generate(&SynConfig::default()).expect("valid config");
    let sets = sets_by_id(&search_corpus(&corpus, &SearchConfig::default(), None, 1));
    let spurious = corpus.split(Split::Train).filter(|e| sets.get(&e.id).is_some_and(|s| s.total_count > 1)).count();
    println!("{spurious} of {} training examples have more than one consistent program", corpus.split(Split::Train).count());

    for mode in [AttentionMode::Structured, AttentionMode::Standard] {
        let t0 = Instant::now();
        let mut p = Parser::new(ModelConfig { attention_mode: mode, ..ModelConfig::default() }, Vocab::build(&corpus), Vocab::build_pos(&corpus));
        let cfg = TrainConfig { epochs, attention_mode: mode, ..TrainConfig::default() };
        train(&mut p, &corpus, &sets, &cfg).expect("training");
        let post = mean_gold_posterior(&p, &corpus, Split::Train, &sets, 1).unwrap_or(f64::NAN);
        let acc = split_accuracy(&p, &corpus, Split::Test, p.config.beam, 1);
        println!("{:<10} mean log p(gold | consistent) {post:.3}  test accuracy {acc:.3}  ({:.0}s)", mode.name(), t0.elapsed().as_secs_f64());
    }
}
