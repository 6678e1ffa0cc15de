//! Program execution against tables.

use std::cmp::Ordering;
use std::fmt;

use crate::grammar::{program_text, Candidate, Condition, Connective, Function, Operator};
use crate::table::{CellValue, ColumnType, Denotation, Table};

/// A fully instantiated program.
#[derive(Clone, Debug, PartialEq)]
pub enum Program {
    AllRows,
    Filter { conditions: Vec<Condition>, connective: Connective },
    Column(usize),
    Apply(Function, Vec<Program>),
}

impl Program {
    pub fn text(&self, table: &Table) -> String {
        program_text::print(self, table)
    }

    /// Number of function applications plus filter conditions.
    pub fn size(&self) -> usize {
        match self {
            Program::AllRows | Program::Column(_) => 0,
            Program::Filter { conditions, .. } => conditions.len(),
            Program::Apply(_, args) => 1 + args.iter().map(Program::size).sum::<usize>(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExecErrorKind {
    EmptyRows,
    IndexOutOfRange,
    TypeError,
    EmptyDenotation,
}

impl ExecErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ExecErrorKind::EmptyRows => "empty-rows",
            ExecErrorKind::IndexOutOfRange => "index-out-of-range",
            ExecErrorKind::TypeError => "type-error",
            ExecErrorKind::EmptyDenotation => "empty-denotation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecError {
    pub kind: ExecErrorKind,
    /// The function (or leaf) where execution failed.
    pub locus: String,
}

impl fmt::Display for ExecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} in {}", self.kind.name(), self.locus)
    }
}

impl std::error::Error for ExecError {}

pub type ExecResult = Result<Denotation, ExecError>;

/// Intermediate runtime values.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    /// Row indices in ascending table order.
    Rows(Vec<usize>),
    Column(usize),
    Cells(Vec<CellValue>),
    Number(f64),
}

fn fail(kind: ExecErrorKind, locus: impl Into<String>) -> ExecError {
    ExecError { kind, locus: locus.into() }
}

fn condition_holds(table: &Table, row: usize, c: &Condition) -> bool {
    let Some(col) = table.columns.get(c.column) else { return false };
    let cell = &col.cells[row];
    if c.op == Operator::Eq {
        return cell.loosely_equals(&c.value);
    }
    if cell.column_type() == ColumnType::String {
        return false;
    }
    match cell.compare(&c.value) {
        None => false,
        Some(ord) => match c.op {
            Operator::Gt => ord == Ordering::Greater,
            Operator::Lt => ord == Ordering::Less,
            Operator::Ge => ord != Ordering::Less,
            Operator::Le => ord != Ordering::Greater,
            Operator::Eq => unreachable!(),
        },
    }
}

/// Rows satisfying all (AND, single) or any (OR) of the conditions.
pub fn filter_conditions(table: &Table, conditions: &[Condition], connective: Connective) -> Vec<usize> {
    (0..table.n_rows)
        .filter(|&r| match connective {
            Connective::Or => conditions.iter().any(|c| condition_holds(table, r, c)),
            _ => conditions.iter().all(|c| condition_holds(table, r, c)),
        })
        .collect()
}

/// Rows selected by a row candidate. A column candidate selects nothing.
pub fn filter_rows(table: &Table, cand: &Candidate) -> Vec<usize> {
    match cand {
        Candidate::AllRows => (0..table.n_rows).collect(),
        Candidate::RowFilter { conditions, connective } => filter_conditions(table, conditions, *connective),
        Candidate::Column(_) => Vec::new(),
    }
}

fn number_cells(table: &Table, rows: &[usize], col: usize, f: Function) -> Result<Vec<f64>, ExecError> {
    let column = table.columns.get(col).ok_or_else(|| fail(ExecErrorKind::TypeError, f.name()))?;
    rows.iter()
        .map(|&r| column.cells[r].as_number().ok_or_else(|| fail(ExecErrorKind::TypeError, f.name())))
        .collect()
}

/// Applies one function to evaluated arguments.
pub fn apply(f: Function, args: Vec<Value>, table: &Table) -> Result<Value, ExecError> {
    let type_err = || fail(ExecErrorKind::TypeError, f.name());
    let mut args = args.into_iter();
    let mut next = || args.next().ok_or_else(type_err);
    let rows = |v: Value| match v {
        Value::Rows(r) => Ok(r),
        _ => Err(type_err()),
    };
    let column = |v: Value| match v {
        Value::Column(c) if c < table.columns.len() => Ok(c),
        _ => Err(type_err()),
    };
    let number = |v: Value| match v {
        Value::Number(x) => Ok(x),
        _ => Err(type_err()),
    };
    let non_empty = |r: Vec<usize>| {
        if r.is_empty() {
            Err(fail(ExecErrorKind::EmptyRows, f.name()))
        } else {
            Ok(r)
        }
    };

    match f {
        Function::Select => {
            let r = rows(next()?)?;
            let c = column(next()?)?;
            if r.is_empty() {
                return Err(fail(ExecErrorKind::EmptyDenotation, f.name()));
            }
            Ok(Value::Cells(r.iter().map(|&i| table.columns[c].cells[i].clone()).collect()))
        }
        Function::Count => Ok(Value::Number(rows(next()?)?.len() as f64)),
        Function::Max | Function::Min | Function::Sum | Function::Average => {
            let r = non_empty(rows(next()?)?)?;
            let c = column(next()?)?;
            let xs = number_cells(table, &r, c, f)?;
            let v = match f {
                Function::Max => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Function::Min => xs.iter().copied().fold(f64::INFINITY, f64::min),
                Function::Sum => xs.iter().sum(),
                _ => xs.iter().sum::<f64>() / xs.len() as f64,
            };
            Ok(Value::Number(v))
        }
        Function::Diff => {
            let a = number(next()?)?;
            let b = number(next()?)?;
            Ok(Value::Number(a - b))
        }
        Function::Argmax | Function::Argmin => {
            let r = non_empty(rows(next()?)?)?;
            let c = column(next()?)?;
            let col = &table.columns[c];
            if col.ctype == ColumnType::String {
                return Err(type_err());
            }
            let want = if f == Function::Argmax { Ordering::Greater } else { Ordering::Less };
            let mut best: Vec<usize> = vec![r[0]];
            for &i in &r[1..] {
                match col.cells[i].compare(&col.cells[best[0]]) {
                    Some(o) if o == want => best = vec![i],
                    Some(Ordering::Equal) => best.push(i),
                    Some(_) => {}
                    None => return Err(type_err()),
                }
            }
            Ok(Value::Rows(best))
        }
        Function::First => Ok(Value::Rows(vec![non_empty(rows(next()?)?)?[0]])),
        Function::Last => Ok(Value::Rows(vec![*non_empty(rows(next()?)?)?.last().unwrap()])),
        Function::Previous | Function::Next => {
            let r = non_empty(rows(next()?)?)?;
            let mut out = Vec::with_capacity(r.len());
            for i in r {
                let j = if f == Function::Previous { i.checked_sub(1) } else { Some(i + 1).filter(|&j| j < table.n_rows) };
                out.push(j.ok_or_else(|| fail(ExecErrorKind::IndexOutOfRange, f.name()))?);
            }
            out.dedup();
            Ok(Value::Rows(out))
        }
    }
}

/// Evaluates any subprogram to a runtime value.
pub fn evaluate(z: &Program, table: &Table) -> Result<Value, ExecError> {
    match z {
        Program::AllRows => Ok(Value::Rows((0..table.n_rows).collect())),
        Program::Filter { conditions, connective } => Ok(Value::Rows(filter_conditions(table, conditions, *connective))),
        Program::Column(c) => {
            if *c < table.columns.len() {
                Ok(Value::Column(*c))
            } else {
                Err(fail(ExecErrorKind::TypeError, format!("column {c}")))
            }
        }
        Program::Apply(f, args) => {
            let vals = args.iter().map(|a| evaluate(a, table)).collect::<Result<Vec<_>, _>>()?;
            apply(*f, vals, table)
        }
    }
}

/// Turns a top-level value into a denotation.
pub fn to_denotation(v: Value) -> ExecResult {
    match v {
        Value::Cells(c) if c.is_empty() => Err(fail(ExecErrorKind::EmptyDenotation, "root")),
        Value::Cells(c) => Ok(Denotation::new(c)),
        Value::Number(x) => Ok(Denotation::new(vec![CellValue::Number(x)])),
        _ => Err(fail(ExecErrorKind::TypeError, "root")),
    }
}

pub fn execute(z: &Program, table: &Table) -> ExecResult {
    to_denotation(evaluate(z, table)?)
}

/// Static types seen by the type checker.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ty {
    Rows,
    Column(ColumnType),
    Cells,
    Number,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypeReport {
    pub ok: bool,
    pub diagnostics: Vec<String>,
}

pub fn typecheck(z: &Program, table: &Table) -> TypeReport {
    let mut diags = Vec::new();
    let root = infer(z, table, &mut diags);
    if let Some(t) = root {
        if !matches!(t, Ty::Cells | Ty::Number) {
            diags.push(format!("root: program returns {t:?}, expected cells or a number"));
        }
    }
    TypeReport { ok: diags.is_empty(), diagnostics: diags }
}

fn infer(z: &Program, table: &Table, diags: &mut Vec<String>) -> Option<Ty> {
    match z {
        Program::AllRows => Some(Ty::Rows),
        Program::Column(c) => match table.columns.get(*c) {
            Some(col) => Some(Ty::Column(col.ctype)),
            None => {
                diags.push(format!("column {c}: index out of range for a table of width {}", table.columns.len()));
                None
            }
        },
        Program::Filter { conditions, connective } => {
            if conditions.is_empty() || (conditions.len() == 1) != (*connective == Connective::None) {
                diags.push("filter: connective must be none iff there is one condition".into());
            }
            for c in conditions {
                if let Err(e) = c.check(table) {
                    diags.push(format!("filter: {e}"));
                }
            }
            Some(Ty::Rows)
        }
        Program::Apply(f, args) => {
            let tys: Vec<Option<Ty>> = args.iter().map(|a| infer(a, table, diags)).collect();
            if tys.iter().any(Option::is_none) {
                return None;
            }
            let tys: Vec<Ty> = tys.into_iter().flatten().collect();
            use ColumnType as C;
            let (want, ret): (Vec<&[Ty]>, Ty) = match f {
                Function::Select => (vec![&[Ty::Rows], &[Ty::Column(C::String), Ty::Column(C::Number), Ty::Column(C::Date)]], Ty::Cells),
                Function::Count => (vec![&[Ty::Rows]], Ty::Number),
                Function::Max | Function::Min | Function::Sum | Function::Average => {
                    (vec![&[Ty::Rows], &[Ty::Column(C::Number)]], Ty::Number)
                }
                Function::Diff => (vec![&[Ty::Number], &[Ty::Number]], Ty::Number),
                Function::Argmax | Function::Argmin => (vec![&[Ty::Rows], &[Ty::Column(C::Number), Ty::Column(C::Date)]], Ty::Rows),
                Function::First | Function::Last | Function::Previous | Function::Next => (vec![&[Ty::Rows]], Ty::Rows),
            };
            if tys.len() != want.len() {
                diags.push(format!("{}: expects {} arguments, got {}", f.name(), want.len(), tys.len()));
                return None;
            }
            let mut good = true;
            for (i, (t, w)) in tys.iter().zip(&want).enumerate() {
                if !w.contains(t) {
                    diags.push(format!("{}: argument {i} has type {t:?}", f.name()));
                    good = false;
                }
            }
            good.then_some(ret)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::program_text::parse;
    use crate::table::Column;

    fn t1() -> Table {
        Table::new(
            "t1",
            vec![
                Column { name_tokens: vec!["nation".into()], ctype: ColumnType::String, cells: vec![CellValue::text("turkey"), CellValue::text("norway")] },
                Column { name_tokens: vec!["gold".into()], ctype: ColumnType::Number, cells: vec![CellValue::Number(1.0), CellValue::Number(0.0)] },
                Column { name_tokens: vec!["silver".into()], ctype: ColumnType::Number, cells: vec![CellValue::Number(0.0), CellValue::Number(5.0)] },
            ],
        )
        .unwrap()
    }

    fn run(text: &str, t: &Table) -> ExecResult {
        execute(&parse(text, t).unwrap(), t)
    }

    #[test]
    fn correct_and_spurious_pair() {
        let t = t1();
        let zero = Denotation::new(vec![CellValue::Number(0.0)]);
        assert_eq!(run("select(filter(all_rows, eq(col:nation, s:\"turkey\")), col:silver)", &t), Ok(zero.clone()));
        assert_eq!(run("select(previous(argmax(all_rows, col:silver)), col:silver)", &t), Ok(zero));
    }

    #[test]
    fn counts_and_boundaries() {
        let t = t1();
        assert_eq!(run("count(all_rows)", &t).unwrap().values, vec![CellValue::Number(2.0)]);
        assert_eq!(run("count(filter(all_rows, gt(col:gold, n:7)))", &t).unwrap().values, vec![CellValue::Number(0.0)]);
        let e = run("select(previous(first(all_rows)), col:nation)", &t).unwrap_err();
        assert_eq!(e.kind, ExecErrorKind::IndexOutOfRange);
        let e = run("select(next(last(all_rows)), col:nation)", &t).unwrap_err();
        assert_eq!(e.kind, ExecErrorKind::IndexOutOfRange);
        let e = run("average(filter(all_rows, gt(col:gold, n:7)), col:gold)", &t).unwrap_err();
        assert_eq!(e.kind, ExecErrorKind::EmptyRows);
        let e = run("select(filter(all_rows, gt(col:gold, n:7)), col:gold)", &t).unwrap_err();
        assert_eq!(e.kind, ExecErrorKind::EmptyDenotation);
    }

    #[test]
    fn filters() {
        let t = t1();
        let gt = Candidate::filter(vec![Condition { column: 2, op: Operator::Gt, value: CellValue::Number(0.0) }], Connective::None);
        assert_eq!(filter_rows(&t, &gt), vec![1]);
        assert_eq!(filter_rows(&t, &Candidate::AllRows), vec![0, 1]);
        let or = Candidate::filter(
            vec![
                Condition { column: 1, op: Operator::Eq, value: CellValue::Number(1.0) },
                Condition { column: 2, op: Operator::Eq, value: CellValue::Number(5.0) },
            ],
            Connective::Or,
        );
        assert_eq!(filter_rows(&t, &or), vec![0, 1]);
        let Candidate::RowFilter { conditions, .. } = or else { unreachable!() };
        assert_eq!(filter_conditions(&t, &conditions, Connective::And), Vec::<usize>::new());
        // mismatched value type never matches
        let odd = Condition { column: 0, op: Operator::Eq, value: CellValue::Number(1.0) };
        assert!(filter_conditions(&t, &[odd], Connective::None).is_empty());
    }

    #[test]
    fn ties_are_kept() {
        let t = Table::new(
            "t",
            vec![
                Column { name_tokens: vec!["n".into()], ctype: ColumnType::String, cells: vec![CellValue::text("a"), CellValue::text("b"), CellValue::text("c")] },
                Column { name_tokens: vec!["x".into()], ctype: ColumnType::Number, cells: vec![CellValue::Number(3.0), CellValue::Number(1.0), CellValue::Number(3.0)] },
            ],
        )
        .unwrap();
        let d = run("select(argmax(all_rows, col:x), col:n)", &t).unwrap();
        assert_eq!(d.values, vec![CellValue::text("a"), CellValue::text("c")]);
        let d = run("select(last(argmax(all_rows, col:x)), col:n)", &t).unwrap();
        assert_eq!(d.values, vec![CellValue::text("c")]);
    }

    #[test]
    fn typecheck_diagnostics() {
        let t = t1();
        let bad = Program::Apply(Function::Sum, vec![Program::AllRows, Program::Column(0)]);
        let r = typecheck(&bad, &t);
        assert!(!r.ok);
        assert!(r.diagnostics[0].starts_with("sum"));
        let wide = Program::Apply(Function::Select, vec![Program::AllRows, Program::Column(9)]);
        assert!(!typecheck(&wide, &t).ok);
        let good = parse("select(previous(argmax(all_rows, col:silver)), col:silver)", &t).unwrap();
        assert_eq!(typecheck(&good, &t), TypeReport { ok: true, diagnostics: vec![] });
        let rows = Program::AllRows;
        assert!(!typecheck(&rows, &t).ok);
    }
}
