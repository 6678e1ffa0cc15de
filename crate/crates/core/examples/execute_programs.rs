//! Parses and runs a few programs against the two-nation medal table.
//!
//! cargo run --example execute_programs

use weaksp::executor::{execute, typecheck};
use weaksp::fixtures::medal_table;
use weaksp::grammar::program_text::parse;

fn main() {
    let t = medal_table();
    let programs = [
        // correct and spurious answers to "how many silver medals did turkey get"
        "select(filter(all_rows, eq(col:nation, s:\"turkey\")), col:silver)",
        "select(previous(argmax(all_rows, col:silver)), col:silver)",
        "count(filter(all_rows, gt(col:silver, n:2)))",
        "sum(all_rows, col:silver)",
        "diff(max(all_rows, col:silver), min(all_rows, col:silver))",
        "select(argmin(all_rows, col:gold), col:nation)",
        // type errors: a string column where a number is demanded
        "sum(all_rows, col:nation)",
    ];
    for text in programs {
        let z = match parse(text, &t) {
            Ok(z) => z,
            Err(e) => {
                println!("{text}\n  parse error: {e}");
                continue;
            }
        };
        let tc = typecheck(&z, &t);
        match execute(&z, &t) {
            Ok(d) => println!("{}\n  -> {d}", z.text(&t)),
            Err(e) => println!("{}\n  error: {e} (typecheck ok: {})", z.text(&t), tc.ok),
        }
    }
}
