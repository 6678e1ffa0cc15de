//! Enumerates every program consistent with a denotation.
//!
//! cargo run --release --example search_consistent -- [max_rules]

use weaksp::fixtures::{example, medal_table};
use weaksp::search::{find_consistent, SearchConfig};
use weaksp::table::CellValue;

fn main() {
    let cap: usize = std::env::args().nth(1).map_or(6, |s| s.parse().expect("max_rules"));
    let t = medal_table();
    let e = example("0", "how many silver medals did turkey get", &t, vec![CellValue::Number(0.0)], &[]);
    let cfg = SearchConfig { max_rules: cap, ..SearchConfig::default() };
    let set = find_consistent(&e, &t, &cfg);
    println!("{} consistent programs under {} parents (cap {cap}, complete: {})", set.total_count, set.entries.len(), set.complete);
    for entry in &set.entries {
        println!("{}", entry.abstract_program);
        for a in entry.assignments.iter().take(4) {
            let slots: Vec<String> = a.iter().map(|c| c.to_string()).collect();
            println!("    [{}]", slots.join(" | "));
        }
        if entry.assignments.len() > 4 {
            println!("    ... {} more", entry.assignments.len() - 4);
        }
    }
}
