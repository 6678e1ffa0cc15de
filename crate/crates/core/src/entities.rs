//! Entity extraction and token features.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::table::{CellValue, ColumnType, Date, EntityMention, Question, Span, Table, Token, ALL_ROW};

const CURRENCY: [char; 4] = ['$', '€', '£', '¥'];

/// Strips commas and one leading currency symbol, then parses a plain
/// decimal (`-?digits(.digits)?`).
pub fn normalize_number(token: &str) -> Option<f64> {
    let mut s: &str = token;
    if let Some(c) = s.chars().next() {
        if CURRENCY.contains(&c) {
            s = &s[c.len_utf8()..];
        }
    }
    let cleaned: String = s.chars().filter(|c| *c != ',').collect();
    let body = cleaned.strip_prefix('-').unwrap_or(&cleaned);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if let Some(f) = frac {
        if f.is_empty() || !f.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
    }
    cleaned.parse().ok().filter(|x: &f64| x.is_finite())
}

/// Finds string, number and date mentions in lowercase tokens.
///
/// String mentions are the maximal spans whose space-joined text equals a
/// string cell (ignoring case); one mention is emitted per column holding
/// that text. Mentions may overlap.
pub fn extract_entities(raw_tokens: &[String], table: &Table) -> Vec<EntityMention> {
    let mut cells: HashMap<String, BTreeSet<usize>> = HashMap::new();
    for (ci, col) in table.columns.iter().enumerate() {
        if col.ctype != ColumnType::String {
            continue;
        }
        for cell in &col.cells {
            if let CellValue::Text(t) = cell {
                cells.entry(t.to_lowercase()).or_default().insert(ci);
            }
        }
    }

    let n = raw_tokens.len();
    let mut matches: Vec<(Span, String)> = Vec::new();
    for i in 0..n {
        let mut text = String::new();
        for j in i..n {
            if j > i {
                text.push(' ');
            }
            text.push_str(&raw_tokens[j]);
            if cells.contains_key(&text) {
                matches.push((Span::new(i, j), text.clone()));
            }
        }
    }
    let maximal: Vec<&(Span, String)> = matches
        .iter()
        .filter(|(s, _)| {
            !matches.iter().any(|(o, _)| {
                o != s && o.start <= s.start && s.end <= o.end
            })
        })
        .collect();

    let mut out = Vec::new();
    for (span, text) in maximal {
        for &ci in &cells[text] {
            out.push(EntityMention {
                span: *span,
                value: CellValue::Text(text.clone()),
                source_column: Some(ci),
            });
        }
    }

    for (i, tok) in raw_tokens.iter().enumerate() {
        if let Some(x) = normalize_number(tok) {
            out.push(EntityMention {
                span: Span::new(i, i),
                value: CellValue::Number(x),
                source_column: source_of(table, &CellValue::Number(x)),
            });
        }
        if let Some(d) = Date::parse(tok) {
            out.push(EntityMention {
                span: Span::new(i, i),
                value: CellValue::Date(d),
                source_column: source_of(table, &CellValue::Date(d)),
            });
        }
    }
    out.sort_by(|a, b| a.span.cmp(&b.span));
    out
}

/// First column of the matching type that holds `value`.
fn source_of(table: &Table, value: &CellValue) -> Option<usize> {
    table.columns.iter().position(|c| {
        c.ctype == value.column_type() && c.cells.iter().any(|cell| cell.loosely_equals(value))
    })
}

/// Sets the in-table indicator of every token and appends the sentinel.
///
/// A token is in the table when it equals a word of some string cell or a
/// column name token.
pub fn annotate(tokens: &[(String, Option<String>)], entities: Vec<EntityMention>, table: &Table) -> Question {
    let mut vocab: HashSet<String> = HashSet::new();
    for col in &table.columns {
        vocab.extend(col.name_tokens.iter().map(|t| t.to_lowercase()));
        if col.ctype == ColumnType::String {
            for cell in &col.cells {
                if let CellValue::Text(t) = cell {
                    vocab.extend(t.split_whitespace().map(str::to_lowercase));
                }
            }
        }
    }
    let mut out: Vec<Token> = tokens
        .iter()
        .map(|(text, pos)| Token {
            in_table: vocab.contains(text.as_str()),
            text: text.clone(),
            pos: pos.clone(),
        })
        .collect();
    out.push(Token { text: ALL_ROW.to_string(), pos: None, in_table: false });
    let limit = out.len() - 1;
    let entities = entities.into_iter().filter(|e| e.span.end < limit).collect();
    Question { tokens: out, entities }
}

/// Convenience: extract entities and annotate in one step.
pub fn build_question(tokens: &[(String, Option<String>)], table: &Table) -> Question {
    let words: Vec<String> = tokens.iter().map(|(t, _)| t.clone()).collect();
    let entities = extract_entities(&words, table);
    annotate(tokens, entities, table)
}

/// `true` for each column that is the source of some entity mention.
pub fn column_indicator(table: &Table, question: &Question) -> Vec<bool> {
    let mut flags = vec![false; table.columns.len()];
    for e in &question.entities {
        if let Some(c) = e.source_column {
            if c < flags.len() {
                flags[c] = true;
            }
        }
    }
    flags
}
