//! Tables, questions, denotations and corpora.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::error::DataError;
use crate::executor::Program;

/// Reserved text of the token appended to every question.
pub const ALL_ROW: &str = "ALL_ROW";

/// Absolute tolerance used when comparing numbers in denotations.
pub const NUMBER_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Date {
    pub year: i32,
    /// 1-12, or 0 when unknown.
    pub month: u8,
    /// 1-31, or 0 when unknown.
    pub day: u8,
}

impl Date {
    pub fn new(year: i32, month: u8, day: u8) -> Result<Self, DataError> {
        if year == 0 || month > 12 || day > 31 || (month == 0 && day != 0) {
            return Err(DataError::InvalidValue(format!(
                "bad date {year}-{month}-{day}"
            )));
        }
        Ok(Self { year, month, day })
    }

    /// Parses `YYYY`, `YYYY-MM` or `YYYY-MM-DD`.
    pub fn parse(text: &str) -> Option<Self> {
        let parts: Vec<&str> = text.split('-').collect();
        if parts.is_empty() || parts.len() > 3 {
            return None;
        }
        let widths = [4, 2, 2];
        for (p, w) in parts.iter().zip(widths) {
            if p.len() != w || !p.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
        }
        let year: i32 = parts[0].parse().ok()?;
        let month: u8 = parts.get(1).map_or(Some(0), |m| m.parse().ok())?;
        let day: u8 = parts.get(2).map_or(Some(0), |d| d.parse().ok())?;
        if parts.len() >= 2 && month == 0 || parts.len() == 3 && day == 0 {
            return None;
        }
        Date::new(year, month, day).ok()
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}", self.year)?;
        if self.month != 0 {
            write!(f, "-{:02}", self.month)?;
            if self.day != 0 {
                write!(f, "-{:02}", self.day)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CellValue {
    Text(String),
    Number(f64),
    Date(Date),
}

impl CellValue {
    pub fn number(x: f64) -> Result<Self, DataError> {
        if x.is_finite() {
            Ok(CellValue::Number(x))
        } else {
            Err(DataError::InvalidValue(format!("non-finite number {x}")))
        }
    }

    pub fn text(s: impl Into<String>) -> Self {
        CellValue::Text(s.into())
    }

    pub fn column_type(&self) -> ColumnType {
        match self {
            CellValue::Text(_) => ColumnType::String,
            CellValue::Number(_) => ColumnType::Number,
            CellValue::Date(_) => ColumnType::Date,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            CellValue::Number(x) => Some(*x),
            _ => None,
        }
    }

    /// Equality used by denotation comparison.
    pub fn loosely_equals(&self, other: &CellValue) -> bool {
        match (self, other) {
            (CellValue::Number(a), CellValue::Number(b)) => (a - b).abs() <= NUMBER_TOLERANCE,
            (CellValue::Text(a), CellValue::Text(b)) => a.to_lowercase() == b.to_lowercase(),
            (CellValue::Date(a), CellValue::Date(b)) => a == b,
            _ => false,
        }
    }

    /// Natural order within one variant; `None` across variants.
    pub fn compare(&self, other: &CellValue) -> Option<Ordering> {
        match (self, other) {
            (CellValue::Number(a), CellValue::Number(b)) => a.partial_cmp(b),
            (CellValue::Date(a), CellValue::Date(b)) => Some(a.cmp(b)),
            (CellValue::Text(a), CellValue::Text(b)) => Some(a.to_lowercase().cmp(&b.to_lowercase())),
            _ => None,
        }
    }

    /// `s:`, `n:` or `d:` prefixed form used by the corpus format.
    pub fn to_tagged(&self) -> String {
        match self {
            CellValue::Text(s) => format!("s:{s}"),
            CellValue::Number(x) => format!("n:{x}"),
            CellValue::Date(d) => format!("d:{d}"),
        }
    }

    pub fn parse_tagged(text: &str) -> Result<Self, DataError> {
        let bad = || DataError::InvalidValue(format!("bad cell `{text}`"));
        let (tag, body) = text.split_once(':').ok_or_else(bad)?;
        match tag {
            "s" => {
                if body.is_empty() {
                    return Err(bad());
                }
                Ok(CellValue::Text(body.to_string()))
            }
            "n" => {
                let x: f64 = body.parse().map_err(|_| bad())?;
                CellValue::number(x)
            }
            "d" => Date::parse(body).map(CellValue::Date).ok_or_else(bad),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Text(s) => f.write_str(s),
            CellValue::Number(x) => write!(f, "{x}"),
            CellValue::Date(d) => write!(f, "{d}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ColumnType {
    String,
    Number,
    Date,
}

impl ColumnType {
    pub const ALL: [ColumnType; 3] = [ColumnType::String, ColumnType::Number, ColumnType::Date];

    pub fn name(self) -> &'static str {
        match self {
            ColumnType::String => "string",
            ColumnType::Number => "number",
            ColumnType::Date => "date",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "string" => Some(ColumnType::String),
            "number" => Some(ColumnType::Number),
            "date" => Some(ColumnType::Date),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name_tokens: Vec<String>,
    pub ctype: ColumnType,
    pub cells: Vec<CellValue>,
}

impl Column {
    /// Name tokens joined with `_`, the form used in files and program text.
    pub fn name(&self) -> String {
        self.name_tokens.join("_")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub id: String,
    pub columns: Vec<Column>,
    pub n_rows: usize,
}

impl Table {
    /// Validates every table invariant.
    pub fn new(id: impl Into<String>, columns: Vec<Column>) -> Result<Self, DataError> {
        let id = id.into();
        let n_rows = columns.first().map_or(0, |c| c.cells.len());
        if n_rows == 0 {
            return Err(DataError::InvalidTable(format!("table {id} has no rows")));
        }
        let mut names = std::collections::BTreeSet::new();
        for (ci, col) in columns.iter().enumerate() {
            if col.name_tokens.is_empty() || col.name_tokens.iter().any(|t| t.is_empty()) {
                return Err(DataError::InvalidTable(format!("table {id}: column {ci} has no name")));
            }
            if !names.insert(col.name()) {
                return Err(DataError::InvalidTable(format!(
                    "table {id}: duplicate column name {}",
                    col.name()
                )));
            }
            if col.cells.len() != n_rows {
                return Err(DataError::InvalidTable(format!(
                    "table {id}: column {} has {} cells, expected {n_rows}",
                    col.name(),
                    col.cells.len()
                )));
            }
            for (ri, cell) in col.cells.iter().enumerate() {
                if cell.column_type() != col.ctype {
                    return Err(DataError::TypeMismatch {
                        table: id.clone(),
                        column: col.name(),
                        row: ri,
                    });
                }
            }
        }
        Ok(Self { id, columns, n_rows })
    }

    pub fn cell(&self, row: usize, column: usize) -> &CellValue {
        &self.columns[column].cells[row]
    }

    pub fn column_by_name(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name() == name)
    }

    pub fn has_column_type(&self, ty: ColumnType) -> bool {
        self.columns.iter().any(|c| c.ctype == ty)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub pos: Option<String>,
    pub in_table: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    /// Inclusive.
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntityMention {
    pub span: Span,
    pub value: CellValue,
    pub source_column: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Question {
    /// The final token is always the `ALL_ROW` sentinel.
    pub tokens: Vec<Token>,
    pub entities: Vec<EntityMention>,
}

impl Question {
    /// Token count including the sentinel.
    pub fn n(&self) -> usize {
        self.tokens.len()
    }

    pub fn sentinel_index(&self) -> usize {
        self.tokens.len() - 1
    }

    /// Token texts without the sentinel.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens[..self.tokens.len() - 1].iter().map(|t| t.text.as_str())
    }

    pub fn check(&self) -> Result<(), DataError> {
        let last = self
            .tokens
            .last()
            .ok_or_else(|| DataError::InvalidQuestion("question has no sentinel".into()))?;
        if last.text != ALL_ROW || last.in_table {
            return Err(DataError::InvalidQuestion("last token must be the sentinel".into()));
        }
        for e in &self.entities {
            if e.span.end >= self.sentinel_index() {
                return Err(DataError::InvalidQuestion(format!(
                    "entity span {:?} covers the sentinel or runs past the question",
                    e.span
                )));
            }
        }
        Ok(())
    }
}

/// An order-insensitive multiset of values.
#[derive(Clone, Debug, PartialEq)]
pub struct Denotation {
    pub values: Vec<CellValue>,
}

impl Denotation {
    pub fn new(values: Vec<CellValue>) -> Self {
        Self { values }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl fmt::Display for Denotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.values.iter().map(CellValue::to_tagged).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Multiset equality: numbers within [`NUMBER_TOLERANCE`], strings without
/// case, dates fieldwise.
pub fn denotation_equal(a: &Denotation, b: &Denotation) -> bool {
    if a.values.len() != b.values.len() {
        return false;
    }
    let mut used = vec![false; b.values.len()];
    'outer: for x in &a.values {
        for (j, y) in b.values.iter().enumerate() {
            if !used[j] && x.loosely_equals(y) {
                used[j] = true;
                continue 'outer;
            }
        }
        return false;
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "train" => Some(Split::Train),
            "dev" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    /// Position of the example in its corpus file, as a decimal string.
    pub id: String,
    pub question: Question,
    pub table_id: String,
    pub split: Split,
    pub denotation: Denotation,
    /// Known correct programs; present for synthetic corpora.
    pub gold_programs: Vec<Program>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub tables: BTreeMap<String, Table>,
    pub examples: Vec<Example>,
}

impl Corpus {
    pub fn table(&self, id: &str) -> Option<&Table> {
        self.tables.get(id)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Example> {
        self.examples.iter().filter(move |e| e.split == split)
    }

    pub fn example(&self, id: &str) -> Option<&Example> {
        self.examples.iter().find(|e| e.id == id)
    }

    pub fn table_of(&self, example: &Example) -> &Table {
        &self.tables[&example.table_id]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num(x: f64) -> CellValue {
        CellValue::Number(x)
    }

    #[test]
    fn denotation_tolerance_and_multiset() {
        let a = Denotation::new(vec![num(2.0)]);
        let b = Denotation::new(vec![num(2.000_000_000_1)]);
        assert!(denotation_equal(&a, &b));

        let a = Denotation::new(vec![CellValue::text("a"), CellValue::text("b")]);
        let b = Denotation::new(vec![CellValue::text("B"), CellValue::text("a")]);
        assert!(denotation_equal(&a, &b));

        let a = Denotation::new(vec![num(1.0)]);
        let b = Denotation::new(vec![num(1.0), num(1.0)]);
        assert!(!denotation_equal(&a, &b));
    }

    #[test]
    fn date_shapes() {
        assert_eq!(Date::parse("2001"), Some(Date { year: 2001, month: 0, day: 0 }));
        assert_eq!(Date::parse("2001-02"), Some(Date { year: 2001, month: 2, day: 0 }));
        assert_eq!(Date::parse("2001-02-03").unwrap().to_string(), "2001-02-03");
        assert_eq!(Date::parse("01-02-03"), None);
        assert_eq!(Date::parse("2001-13"), None);
        assert_eq!(Date::parse("0000"), None);
        assert_eq!(Date::parse("feb"), None);
    }

    #[test]
    fn date_order_unknown_sorts_first() {
        let a = Date::parse("2001").unwrap();
        let b = Date::parse("2001-01").unwrap();
        assert!(a < b);
    }

    #[test]
    fn table_rejects_bad_shapes() {
        let col = |name: &str, cells: Vec<CellValue>, ctype| Column {
            name_tokens: vec![name.to_string()],
            ctype,
            cells,
        };
        let ok = Table::new(
            "t",
            vec![col("a", vec![num(1.0)], ColumnType::Number)],
        );
        assert!(ok.is_ok());
        let mismatch = Table::new(
            "t",
            vec![col("a", vec![CellValue::text("x")], ColumnType::Number)],
        );
        assert!(matches!(mismatch, Err(DataError::TypeMismatch { row: 0, .. })));
        let dup = Table::new(
            "t",
            vec![
                col("a", vec![num(1.0)], ColumnType::Number),
                col("a", vec![num(1.0)], ColumnType::Number),
            ],
        );
        assert!(dup.is_err());
        let ragged = Table::new(
            "t",
            vec![
                col("a", vec![num(1.0)], ColumnType::Number),
                col("b", vec![num(1.0), num(2.0)], ColumnType::Number),
            ],
        );
        assert!(ragged.is_err());
    }

    #[test]
    fn tagged_cells() {
        assert_eq!(CellValue::parse_tagged("n:2000").unwrap(), num(2000.0));
        assert_eq!(CellValue::parse_tagged("s:new york").unwrap(), CellValue::text("new york"));
        assert!(CellValue::parse_tagged("n:abc").is_err());
        assert!(CellValue::parse_tagged("n:inf").is_err());
        assert!(CellValue::parse_tagged("x:1").is_err());
        assert_eq!(num(2.5).to_tagged(), "n:2.5");
    }
}
