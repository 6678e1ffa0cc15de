//! Trains the parser on the synthetic corpus and reports test accuracy.
//!
//! cargo run --release --example train_parser -- [epochs] [structured|standard]

use std::time::Instant;

use weaksp::evalkit::{evaluate, is_correct, predict_split, sets_by_id};
use weaksp::model::{AttentionMode, ModelConfig, Parser, Vocab};
use weaksp::search::{search_corpus, SearchConfig};
use weaksp::syngen::{generate, SynConfig};
use weaksp::table::Split;
use weaksp::trainer::{train, TrainConfig};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(10, |s| s.parse().expect("epochs"));
    let mode = args.next().map_or(AttentionMode::Structured, |s| AttentionMode::from_name(&s).expect("attention mode"));

    let (corpus, _) = generate(&SynConfig::default()).expect("valid config");
    let sets = sets_by_id(&search_corpus(&corpus, &SearchConfig::default(), None, 4));
    let mut parser = Parser::new(ModelConfig { attention_mode: mode, ..ModelConfig::default() }, Vocab::build(&corpus), Vocab::build_pos(&corpus));
    println!("{} parameters", parser.params.n_values());

    let t0 = Instant::now();
    let cfg = TrainConfig { epochs, attention_mode: mode, eval_workers: 4, ..TrainConfig::default() };
    let report = train(&mut parser, &corpus, &sets, &cfg).expect("training");
    println!("trained in {:.1}s, best dev {:.3} at epoch {}", t0.elapsed().as_secs_f64(), report.best_dev_acc, report.best_epoch);

    let preds = predict_split(&parser, &corpus, Split::Test, parser.config.beam, 4);
    for (i, p) in preds.iter().filter(|(i, p)| !is_correct(p, &corpus.examples[*i])).take(12) {
        let e = &corpus.examples[*i];
        let t = corpus.table_of(e);
        let got = p.program.as_ref().map_or("-".to_string(), |z| z.text(t));
        println!("  {} | gold {} | got {got}", e.question.words().collect::<Vec<_>>().join(" "), e.gold_programs[0].text(t));
    }
    let r = evaluate(&parser, &corpus, Split::Test, &sets, 4);
    println!("test: acc {:.3}, errors abs/inst/cov {}/{}/{}, mean gold posterior {:?}", r.accuracy, r.breakdown.abstraction, r.breakdown.instantiation, r.breakdown.coverage, r.mean_gold_posterior);
}
