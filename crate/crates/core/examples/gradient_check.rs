//! Finite-difference check of the full training loss on a tiny model.
//!
//! cargo run --release --example gradient_check

use weaksp::fixtures::{example, medal_table};
use weaksp::grammar::program_text::parse;
use weaksp::model::{AttentionMode, ModelConfig, Parser, Vocab};
use weaksp::search::ConsistentSet;
use weaksp::table::CellValue;
use weaksp::trainer::grad_check;

fn main() {
    let t = medal_table();
    let gold = "select(filter(all_rows, eq(col:nation, s:\"turkey\")), col:silver)";
    let e = example("0", "how many silver medals did turkey get", &t, vec![CellValue::Number(0.0)], &[gold]);
    let programs: Vec<_> =
        [gold, "select(argmin(all_rows, col:silver), col:silver)"].iter().map(|s| parse(s, &t).unwrap()).collect();
    let set = ConsistentSet::from_programs("0", &programs, &t, true);
    let vocab = Vocab::from_words(e.question.words());
    for mode in [AttentionMode::Structured, AttentionMode::Standard] {
        let p = Parser::new(ModelConfig { attention_mode: mode, ..ModelConfig::micro() }, vocab.clone(), Vocab::from_words([]));
        let r = grad_check(&p, &e, &t, &set, 64, 1).expect("loss is defined");
        println!("{:<10} {} coordinates, max relative error {:.2e}", mode.name(), r.checked, r.max_rel_error);
        if let Some((name, i, a, n)) = r.worst {
            println!("           worst: {name}[{i}] analytic {a:.6e} numeric {n:.6e}");
        }
    }
}
