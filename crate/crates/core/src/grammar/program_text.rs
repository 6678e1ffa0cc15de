//! Prefix text form of programs.
//!
//! ```text
//! program   := func "(" program ("," program)* ")" | rows | "col:" NAME
//! rows      := "all_rows" | "filter(all_rows," conds ")"
//! conds     := cond | ("and" | "or") "(" cond ("," cond)+ ")"
//! cond      := op "(col:" NAME "," value ")"       op in gt lt eq ge le
//! value     := 's:"' escaped text '"' | "n:" decimal | "d:" YYYY[-MM[-DD]]
//! ```
//!
//! Column names are the column's name tokens joined by `_`. Conditions
//! inside a connective are printed in canonical order, so the printed text
//! is a canonical key for a program.

use std::fmt::Write;

use super::{Candidate, Condition, Connective, Function, Operator};
use crate::error::GrammarError;
use crate::executor::Program;
use crate::table::{CellValue, Date, Table};

pub fn print(program: &Program, table: &Table) -> String {
    let mut out = String::new();
    write_program(program, table, &mut out);
    out
}

fn column_name(table: &Table, c: usize) -> String {
    table.columns.get(c).map_or_else(|| format!("#{c}"), |col| col.name())
}

fn write_program(p: &Program, table: &Table, out: &mut String) {
    match p {
        Program::AllRows => out.push_str("all_rows"),
        Program::Column(c) => {
            out.push_str("col:");
            out.push_str(&column_name(table, *c));
        }
        Program::Filter { conditions, connective } => {
            let canon = Candidate::filter(conditions.clone(), *connective);
            let Candidate::RowFilter { conditions, connective } = canon else { unreachable!() };
            out.push_str("filter(all_rows, ");
            if connective != Connective::None {
                out.push_str(connective.name());
                out.push('(');
            }
            for (i, c) in conditions.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{}(col:{}, ", c.op.name(), column_name(table, c.column));
                write_value(&c.value, out);
                out.push(')');
            }
            if connective != Connective::None {
                out.push(')');
            }
            out.push(')');
        }
        Program::Apply(f, args) => {
            out.push_str(f.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_program(a, table, out);
            }
            out.push(')');
        }
    }
}

fn write_value(v: &CellValue, out: &mut String) {
    match v {
        CellValue::Text(s) => {
            out.push_str("s:\"");
            for ch in s.chars() {
                if ch == '"' || ch == '\\' {
                    out.push('\\');
                }
                out.push(ch);
            }
            out.push('"');
        }
        CellValue::Number(x) => {
            let _ = write!(out, "n:{x}");
        }
        CellValue::Date(d) => {
            let _ = write!(out, "d:{d}");
        }
    }
}

pub fn parse(text: &str, table: &Table) -> Result<Program, GrammarError> {
    let mut p = Parser { s: text.as_bytes(), text, pos: 0, table };
    let prog = p.program()?;
    p.ws();
    if p.pos != p.s.len() {
        return Err(p.err("trailing input"));
    }
    Ok(prog)
}

struct Parser<'a> {
    s: &'a [u8],
    text: &'a str,
    pos: usize,
    table: &'a Table,
}

impl<'a> Parser<'a> {
    fn err(&self, what: &str) -> GrammarError {
        GrammarError::ProgramSyntax(format!("{what} at byte {} of `{}`", self.pos, self.text))
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, lit: &str) -> bool {
        self.ws();
        if self.s[self.pos..].starts_with(lit.as_bytes()) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lit: &str) -> Result<(), GrammarError> {
        if self.eat(lit) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{lit}`")))
        }
    }

    fn ident(&mut self) -> &'a str {
        self.ws();
        let start = self.pos;
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_') {
            self.pos += 1;
        }
        &self.text[start..self.pos]
    }

    /// Raw token up to the next delimiter.
    fn atom(&mut self) -> &'a str {
        self.ws();
        let start = self.pos;
        while self.pos < self.s.len() && !matches!(self.s[self.pos], b',' | b')' | b'(') && !self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        &self.text[start..self.pos]
    }

    fn column(&mut self) -> Result<usize, GrammarError> {
        self.expect("col:")?;
        let name = self.atom();
        self.table
            .column_by_name(name)
            .ok_or_else(|| self.err(&format!("unknown column `{name}`")))
    }

    fn program(&mut self) -> Result<Program, GrammarError> {
        self.ws();
        if self.s[self.pos..].starts_with(b"col:") {
            return Ok(Program::Column(self.column()?));
        }
        let name = self.ident();
        match name {
            "all_rows" => Ok(Program::AllRows),
            "filter" => {
                self.expect("(")?;
                self.expect("all_rows")?;
                self.expect(",")?;
                let (conditions, connective) = self.conditions()?;
                self.expect(")")?;
                Ok(Program::Filter { conditions, connective })
            }
            "" => Err(self.err("expected a program")),
            _ => {
                let f = Function::from_name(name).ok_or_else(|| self.err(&format!("unknown function `{name}`")))?;
                self.expect("(")?;
                let mut args = vec![self.program()?];
                while self.eat(",") {
                    args.push(self.program()?);
                }
                self.expect(")")?;
                Ok(Program::Apply(f, args))
            }
        }
    }

    fn conditions(&mut self) -> Result<(Vec<Condition>, Connective), GrammarError> {
        let save = self.pos;
        let name = self.ident();
        let connective = match name {
            "and" => Connective::And,
            "or" => Connective::Or,
            _ => {
                self.pos = save;
                return Ok((vec![self.condition()?], Connective::None));
            }
        };
        self.expect("(")?;
        let mut conds = vec![self.condition()?];
        while self.eat(",") {
            conds.push(self.condition()?);
        }
        self.expect(")")?;
        if conds.len() < 2 {
            return Err(self.err("a connective needs at least two conditions"));
        }
        Ok((conds, connective))
    }

    fn condition(&mut self) -> Result<Condition, GrammarError> {
        let name = self.ident();
        let op = Operator::from_name(name).ok_or_else(|| self.err(&format!("unknown operator `{name}`")))?;
        self.expect("(")?;
        let column = self.column()?;
        self.expect(",")?;
        let value = self.value()?;
        self.expect(")")?;
        Ok(Condition { column, op, value })
    }

    fn value(&mut self) -> Result<CellValue, GrammarError> {
        if self.eat("s:\"") {
            let mut s = String::new();
            let mut chars = self.text[self.pos..].char_indices();
            loop {
                let (i, ch) = chars.next().ok_or_else(|| self.err("unterminated string"))?;
                match ch {
                    '"' => {
                        self.pos += i + 1;
                        break;
                    }
                    '\\' => {
                        let (_, esc) = chars.next().ok_or_else(|| self.err("unterminated string"))?;
                        s.push(esc);
                    }
                    c => s.push(c),
                }
            }
            Ok(CellValue::Text(s))
        } else if self.eat("n:") {
            let body = self.atom();
            body.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(CellValue::Number)
                .ok_or_else(|| self.err(&format!("bad number `{body}`")))
        } else if self.eat("d:") {
            let body = self.atom();
            Date::parse(body).map(CellValue::Date).ok_or_else(|| self.err(&format!("bad date `{body}`")))
        } else {
            Err(self.err("expected a value"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{Column, ColumnType};

    fn table() -> Table {
        Table::new(
            "t",
            vec![
                Column {
                    name_tokens: vec!["nation".into()],
                    ctype: ColumnType::String,
                    cells: vec![CellValue::text("new zealand")],
                },
                Column {
                    name_tokens: vec!["total".into(), "points".into()],
                    ctype: ColumnType::Number,
                    cells: vec![CellValue::Number(2.5)],
                },
                Column {
                    name_tokens: vec!["date".into()],
                    ctype: ColumnType::Date,
                    cells: vec![CellValue::Date(Date::new(2001, 5, 0).unwrap())],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let t = table();
        let texts = [
            "count(all_rows)",
            "select(filter(all_rows, eq(col:nation, s:\"new zealand\")), col:total_points)",
            "select(argmax(filter(all_rows, or(eq(col:nation, s:\"a \\\"b\\\"\"), gt(col:total_points, n:-0.5))), col:date), col:nation)",
            "diff(max(all_rows, col:total_points), min(filter(all_rows, le(col:date, d:2001-05)), col:total_points))",
            "select(previous(first(all_rows)), col:nation)",
        ];
        for text in texts {
            let p = parse(text, &t).unwrap();
            assert_eq!(print(&p, &t), text);
        }
    }

    #[test]
    fn canonical_condition_order() {
        let t = table();
        let a = parse("filter(all_rows, and(gt(col:total_points, n:3), eq(col:nation, s:\"x\")))", &t).unwrap();
        assert_eq!(print(&a, &t), "filter(all_rows, and(eq(col:nation, s:\"x\"), gt(col:total_points, n:3)))");
    }

    #[test]
    fn errors() {
        let t = table();
        for bad in [
            "",
            "count(all_rows",
            "count(all_rows))",
            "frobnicate(all_rows)",
            "select(all_rows, col:missing)",
            "filter(all_rows, and(eq(col:nation, s:\"x\")))",
            "filter(all_rows, eq(col:nation, n:abc))",
        ] {
            assert!(parse(bad, &t).is_err(), "{bad}");
        }
    }
}
