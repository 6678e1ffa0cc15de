//! Exact span-alignment marginals for a two-slot abstract program, checked
//! against brute-force enumeration.
//!
//! cargo run --example alignment_marginals

use weaksp::entities::build_question;
use weaksp::fixtures::{medal_table, plain_tokens};
use weaksp::grammar::program_text::parse;
use weaksp::grammar::strip;
use weaksp::lattice::{brute_force_marginals, feasible_spans, forward_backward, LatticeConfig};
use weaksp::rng::SplitMix64;

fn main() {
    let t = medal_table();
    let q = build_question(&plain_tokens("how many silver medals did turkey get"), &t);
    let z = parse("select(filter(all_rows, eq(col:nation, s:\"turkey\")), col:silver)", &t).unwrap();
    let (h, _) = strip(&z, &t).unwrap();
    println!("abstract program: {h}");
    let f = feasible_spans(&h.slots, &q, &LatticeConfig::default()).unwrap();
    let mut rng = SplitMix64::new(3);
    let m: Vec<Vec<f64>> = f.spans.iter().map(|ss| ss.iter().map(|_| rng.uniform(-2.0, 2.0)).collect()).collect();

    let dp = forward_backward(&m, &f).unwrap();
    let brute = brute_force_marginals(&m, &f).unwrap();
    let words: Vec<&str> = q.words().collect();
    for (k, ss) in f.spans.iter().enumerate() {
        println!("slot {k} ({:?})", h.slots[k].kind);
        for (s, sp) in ss.iter().enumerate() {
            let text = if sp.start == q.sentinel_index() { "<all_row>".to_string() } else { words[sp.start..=sp.end].join(" ") };
            println!("  [{:>2},{:>2}] {:<24} E = {:.4}", sp.start, sp.end, text, dp.e[k][s]);
        }
        println!("  sum = {:.6}", dp.e[k].iter().sum::<f64>());
    }
    let err = dp.e.iter().flatten().zip(brute.e.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("logZ = {:.6} (brute force {:.6}), max |E_dp - E_brute| = {err:.2e}", dp.log_z, brute.log_z);
}
