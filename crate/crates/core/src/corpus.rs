//! Line-oriented corpus files.
//!
//! ```text
//! T <tab> id <tab> name:type ... <tab> #
//! R <tab> id <tab> cell ...
//! Q <tab> table_id <tab> split <tab> token[/POS] ... <tab> # <tab> cell ... <tab> # <tab> program ...
//! ```
//!
//! Cells use the tagged `s:`/`n:`/`d:` form. Multi-word column names are
//! written with `_` between name tokens. A `T` line may carry the first row
//! after its `#`. Rows follow their `T` line; questions may appear anywhere
//! after their table. Example ids are the zero-based position of the `Q`
//! line among all `Q` lines.

use std::collections::BTreeMap;
use std::path::Path;

use crate::entities::build_question;
use crate::error::DataError;
use crate::executor::Program;
use crate::grammar::program_text;
use crate::table::{CellValue, Column, ColumnType, Corpus, Denotation, Example, Split, Table};

struct PendingTable {
    line: usize,
    id: String,
    header: Vec<(Vec<String>, ColumnType)>,
    rows: Vec<Vec<CellValue>>,
}

impl PendingTable {
    fn finish(self) -> Result<Table, DataError> {
        let columns = self
            .header
            .into_iter()
            .enumerate()
            .map(|(ci, (name_tokens, ctype))| Column {
                name_tokens,
                ctype,
                cells: self.rows.iter().map(|r| r[ci].clone()).collect(),
            })
            .collect();
        Table::new(self.id, columns).map_err(|e| match e {
            e @ DataError::TypeMismatch { .. } => e,
            other => DataError::Parse { line: self.line, message: other.to_string() },
        })
    }
}

fn split_pos(token: &str) -> (String, Option<String>) {
    if let Some((word, tag)) = token.rsplit_once('/') {
        let is_tag = !tag.is_empty() && tag.chars().all(|c| c.is_ascii_uppercase() || c == '$');
        if is_tag && !word.is_empty() {
            return (word.to_lowercase(), Some(tag.to_string()));
        }
    }
    (token.to_lowercase(), None)
}

pub fn parse_corpus(text: &str) -> Result<Corpus, DataError> {
    let mut tables: BTreeMap<String, Table> = BTreeMap::new();
    let mut pending: Option<PendingTable> = None;
    // Questions are resolved after all tables are known.
    let mut questions: Vec<(usize, Vec<String>)> = Vec::new();

    let flush = |pending: &mut Option<PendingTable>, tables: &mut BTreeMap<String, Table>| -> Result<(), DataError> {
        if let Some(p) = pending.take() {
            let line = p.line;
            let t = p.finish()?;
            if tables.insert(t.id.clone(), t).is_some() {
                return Err(DataError::Parse { line, message: "duplicate table id".into() });
            }
        }
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let bad = |message: String| DataError::Parse { line, message };
        let fields: Vec<&str> = raw.split('\t').collect();
        match fields[0] {
            "T" => {
                flush(&mut pending, &mut tables)?;
                let id = fields.get(1).filter(|s| !s.is_empty()).ok_or_else(|| bad("missing table id".into()))?;
                let hash = fields.iter().position(|f| *f == "#").ok_or_else(|| bad("missing `#` after columns".into()))?;
                let mut header = Vec::new();
                for f in &fields[2..hash] {
                    let (name, ty) = f.rsplit_once(':').ok_or_else(|| bad(format!("bad column `{f}`")))?;
                    let ty = ColumnType::from_name(ty).ok_or_else(|| bad(format!("unknown column type `{ty}`")))?;
                    let toks: Vec<String> = name.split('_').map(str::to_lowercase).collect();
                    if toks.iter().any(String::is_empty) {
                        return Err(bad(format!("bad column name `{name}`")));
                    }
                    header.push((toks, ty));
                }
                if header.is_empty() {
                    return Err(bad("table has no columns".into()));
                }
                let mut p = PendingTable { line, id: id.to_string(), header, rows: Vec::new() };
                if hash + 1 < fields.len() {
                    p.rows.push(parse_row(&fields[hash + 1..], &p, line)?);
                }
                pending = Some(p);
            }
            "R" => {
                let p = pending.as_mut().ok_or_else(|| bad("row outside a table".into()))?;
                if fields.get(1) != Some(&p.id.as_str()) {
                    return Err(bad(format!("row for table `{}` inside table `{}`", fields.get(1).unwrap_or(&""), p.id)));
                }
                let row = parse_row(&fields[2..], p, line)?;
                p.rows.push(row);
            }
            "Q" => questions.push((line, fields.iter().map(|s| s.to_string()).collect())),
            other => return Err(bad(format!("unknown record kind `{other}`"))),
        }
    }
    flush(&mut pending, &mut tables)?;

    let mut examples = Vec::new();
    for (n, (line, fields)) in questions.into_iter().enumerate() {
        examples.push(parse_question(n, line, &fields, &tables)?);
    }
    Ok(Corpus { tables, examples })
}

fn parse_row(cells: &[&str], p: &PendingTable, line: usize) -> Result<Vec<CellValue>, DataError> {
    if cells.len() != p.header.len() {
        return Err(DataError::Parse {
            line,
            message: format!("row has {} cells, table `{}` has {} columns", cells.len(), p.id, p.header.len()),
        });
    }
    let row = p.rows.len();
    cells
        .iter()
        .zip(&p.header)
        .map(|(c, (name, ty))| {
            let v = CellValue::parse_tagged(c).map_err(|e| DataError::Parse { line, message: e.to_string() })?;
            if v.column_type() != *ty {
                return Err(DataError::TypeMismatch { table: p.id.clone(), column: name.join("_"), row });
            }
            Ok(v)
        })
        .collect()
}

fn parse_question(n: usize, line: usize, f: &[String], tables: &BTreeMap<String, Table>) -> Result<Example, DataError> {
    let bad = |message: String| DataError::Parse { line, message };
    if f.len() < 4 {
        return Err(bad("question record too short".into()));
    }
    let table = tables.get(&f[1]).ok_or_else(|| bad(DataError::UnknownTable(f[1].clone()).to_string()))?;
    let split = Split::from_name(&f[2]).ok_or_else(|| bad(format!("unknown split `{}`", f[2])))?;
    let rest = &f[3..];
    let h1 = rest.iter().position(|s| s == "#").ok_or_else(|| bad("missing `#` after tokens".into()))?;
    let after = &rest[h1 + 1..];
    let h2 = after.iter().position(|s| s == "#").unwrap_or(after.len());
    let tokens: Vec<(String, Option<String>)> = rest[..h1].iter().map(|t| split_pos(t)).collect();
    if tokens.iter().any(|(t, _)| t.is_empty()) {
        return Err(bad("empty token".into()));
    }
    let values = after[..h2]
        .iter()
        .map(|c| CellValue::parse_tagged(c).map_err(|e| bad(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(bad("empty denotation".into()));
    }
    let mut gold_programs = Vec::new();
    if h2 < after.len() {
        for text in &after[h2 + 1..] {
            if text.is_empty() {
                continue;
            }
            let p = program_text::parse(text, table).map_err(|e| bad(e.to_string()))?;
            gold_programs.push(p);
        }
    }
    Ok(Example {
        id: n.to_string(),
        question: build_question(&tokens, table),
        table_id: table.id.clone(),
        split,
        denotation: Denotation::new(values),
        gold_programs,
    })
}

pub fn load_corpus(path: &Path) -> Result<Corpus, DataError> {
    let text = std::fs::read_to_string(path)?;
    parse_corpus(&text)
}

/// Canonical text form; `parse_corpus` of the result reproduces the corpus.
pub fn format_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    for t in corpus.tables.values() {
        format_table(t, &mut out);
    }
    for e in &corpus.examples {
        format_example(e, &corpus.tables[&e.table_id], &mut out);
    }
    out
}

pub fn format_table(t: &Table, out: &mut String) {
    out.push_str("T\t");
    out.push_str(&t.id);
    for c in &t.columns {
        out.push('\t');
        out.push_str(&c.name());
        out.push(':');
        out.push_str(c.ctype.name());
    }
    out.push_str("\t#\n");
    for r in 0..t.n_rows {
        out.push_str("R\t");
        out.push_str(&t.id);
        for c in &t.columns {
            out.push('\t');
            out.push_str(&c.cells[r].to_tagged());
        }
        out.push('\n');
    }
}

fn format_example(e: &Example, table: &Table, out: &mut String) {
    out.push_str("Q\t");
    out.push_str(&e.table_id);
    out.push('\t');
    out.push_str(e.split.name());
    for tok in &e.question.tokens[..e.question.n() - 1] {
        out.push('\t');
        out.push_str(&tok.text);
        if let Some(p) = &tok.pos {
            out.push('/');
            out.push_str(p);
        }
    }
    out.push_str("\t#");
    for v in &e.denotation.values {
        out.push('\t');
        out.push_str(&v.to_tagged());
    }
    if !e.gold_programs.is_empty() {
        out.push_str("\t#");
        for p in &e.gold_programs {
            out.push('\t');
            out.push_str(&program_text::print(p, table));
        }
    }
    out.push('\n');
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, format_corpus(corpus))?;
    Ok(())
}

/// Gold programs for one example, for callers that only hold a table.
pub fn gold_texts(e: &Example, table: &Table) -> Vec<String> {
    e.gold_programs.iter().map(|p: &Program| program_text::print(p, table)).collect()
}
