//! Small hand-built tables and examples for tests and demos.

use crate::entities::build_question;
use crate::grammar::program_text;
use crate::table::{CellValue, Column, ColumnType, Denotation, Example, Split, Table};

/// Untagged tokens from whitespace-separated text.
pub fn plain_tokens(text: &str) -> Vec<(String, Option<String>)> {
    text.split_whitespace().map(|w| (w.to_string(), None)).collect()
}

/// The two-nation medal table: turkey has 1 gold and 0 silver, norway 0
/// gold and 5 silver.
pub fn medal_table() -> Table {
    let num = |xs: &[f64]| xs.iter().map(|x| CellValue::Number(*x)).collect();
    Table::new(
        "t1",
        vec![
            Column { name_tokens: vec!["nation".into()], ctype: ColumnType::String, cells: vec![CellValue::text("turkey"), CellValue::text("norway")] },
            Column { name_tokens: vec!["gold".into()], ctype: ColumnType::Number, cells: num(&[1.0, 0.0]) },
            Column { name_tokens: vec!["silver".into()], ctype: ColumnType::Number, cells: num(&[0.0, 5.0]) },
        ],
    )
    .expect("valid table")
}

/// An example whose gold programs are given as program text.
pub fn example(id: &str, text: &str, table: &Table, denotation: Vec<CellValue>, gold: &[&str]) -> Example {
    Example {
        id: id.to_string(),
        question: build_question(&plain_tokens(text), table),
        table_id: table.id.clone(),
        split: Split::Train,
        denotation: Denotation::new(denotation),
        gold_programs: gold.iter().map(|g| program_text::parse(g, table).expect("gold program parses")).collect(),
    }
}
