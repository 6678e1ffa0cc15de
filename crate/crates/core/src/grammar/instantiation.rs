//! Instantiation grammar: slot candidates and slot substitution.

use std::fmt;

use super::{rule_by_id, AbstractProgram, BasicType, Derivation, Function, Rhs, RuleId, Slot, SlotKind, RULES};
use crate::error::GrammarError;
use crate::executor::Program;
use crate::table::{CellValue, ColumnType, Question, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operator {
    Gt,
    Lt,
    Eq,
    Ge,
    Le,
}

impl Operator {
    pub const ALL: [Operator; 5] = [Operator::Gt, Operator::Lt, Operator::Eq, Operator::Ge, Operator::Le];

    pub fn name(self) -> &'static str {
        match self {
            Operator::Gt => "gt",
            Operator::Lt => "lt",
            Operator::Eq => "eq",
            Operator::Ge => "ge",
            Operator::Le => "le",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Operator::ALL.into_iter().find(|o| o.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Connective {
    None,
    And,
    Or,
}

impl Connective {
    pub fn name(self) -> &'static str {
        match self {
            Connective::None => "none",
            Connective::And => "and",
            Connective::Or => "or",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub column: usize,
    pub op: Operator,
    pub value: CellValue,
}

impl Condition {
    fn sort_key(&self) -> (usize, Operator, String) {
        (self.column, self.op, self.value.to_tagged())
    }

    pub fn check(&self, table: &Table) -> Result<(), String> {
        let col = table
            .columns
            .get(self.column)
            .ok_or_else(|| format!("condition column {} out of range", self.column))?;
        if self.value.column_type() != col.ctype {
            return Err(format!("condition value {} does not match column {}", self.value, col.name()));
        }
        if col.ctype == ColumnType::String && self.op != Operator::Eq {
            return Err(format!("string column {} only supports eq", col.name()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Candidate {
    Column(usize),
    RowFilter { conditions: Vec<Condition>, connective: Connective },
    AllRows,
}

impl Candidate {
    /// Builds a row filter with conditions in canonical order.
    pub fn filter(mut conditions: Vec<Condition>, connective: Connective) -> Self {
        conditions.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        let connective = if conditions.len() == 1 { Connective::None } else { connective };
        Candidate::RowFilter { conditions, connective }
    }

    pub fn kind(&self) -> SlotKind {
        match self {
            Candidate::Column(_) => SlotKind::Column,
            _ => SlotKind::Row,
        }
    }

    /// Number of conditions, used to rank programs by size.
    pub fn condition_count(&self) -> usize {
        match self {
            Candidate::RowFilter { conditions, .. } => conditions.len(),
            _ => 0,
        }
    }

    pub fn into_program(self) -> Program {
        match self {
            Candidate::Column(c) => Program::Column(c),
            Candidate::AllRows => Program::AllRows,
            Candidate::RowFilter { conditions, connective } => Program::Filter { conditions, connective },
        }
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Candidate::Column(c) => write!(f, "column {c}"),
            Candidate::AllRows => f.write_str("all_rows"),
            Candidate::RowFilter { conditions, connective } => {
                let parts: Vec<String> = conditions
                    .iter()
                    .map(|c| format!("{}(col {}, {})", c.op.name(), c.column, c.value.to_tagged()))
                    .collect();
                if *connective == Connective::None {
                    f.write_str(&parts.join(" "))
                } else {
                    write!(f, "{}({})", connective.name(), parts.join(", "))
                }
            }
        }
    }
}

/// One candidate per slot, in slot order.
pub type Assignment = Vec<Candidate>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct InstantiationConfig {
    pub max_conditions: usize,
    pub enable_and: bool,
    pub enable_or: bool,
}

impl Default for InstantiationConfig {
    fn default() -> Self {
        Self { max_conditions: 2, enable_and: true, enable_or: false }
    }
}

fn ops_for(ty: ColumnType) -> &'static [Operator] {
    match ty {
        ColumnType::String => &[Operator::Eq],
        _ => &Operator::ALL,
    }
}

/// Single conditions built from the question's entities, deduplicated,
/// ordered by mention, then column, then operator.
pub fn single_conditions(table: &Table, question: &Question) -> Vec<Condition> {
    let mut out: Vec<Condition> = Vec::new();
    for e in &question.entities {
        let ty = e.value.column_type();
        for (ci, col) in table.columns.iter().enumerate() {
            if col.ctype != ty {
                continue;
            }
            for op in ops_for(ty) {
                let c = Condition { column: ci, op: *op, value: e.value.clone() };
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
    }
    out
}

/// Candidates for one slot.
///
/// Column slots get every column of the expected type (all columns when
/// unconstrained). Row slots get `all_rows`, every single condition, and
/// connective-joined combinations of 2..=max_conditions distinct
/// conditions for each enabled connective.
pub fn slot_candidates(slot: &Slot, table: &Table, question: &Question, config: &InstantiationConfig) -> Vec<Candidate> {
    match slot.kind {
        SlotKind::Column => table
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| slot.expected_coltype.map_or(true, |t| c.ctype == t))
            .map(|(i, _)| Candidate::Column(i))
            .collect(),
        SlotKind::Row => {
            let singles = single_conditions(table, question);
            let mut out = vec![Candidate::AllRows];
            out.extend(singles.iter().map(|c| Candidate::filter(vec![c.clone()], Connective::None)));
            let mut connectives = Vec::new();
            if config.enable_and {
                connectives.push(Connective::And);
            }
            if config.enable_or {
                connectives.push(Connective::Or);
            }
            for conn in connectives {
                for size in 2..=config.max_conditions.min(singles.len()) {
                    for combo in combinations(singles.len(), size) {
                        let conds = combo.iter().map(|i| singles[*i].clone()).collect();
                        out.push(Candidate::filter(conds, conn));
                    }
                }
            }
            out
        }
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    go(0, n, k, &mut cur, &mut out);
    out
}

/// Checks that `candidate` can fill `slot` on `table`.
pub fn check_candidate(slot: &Slot, candidate: &Candidate, table: &Table) -> Result<(), GrammarError> {
    let err = |reason: String| GrammarError::SlotMismatch { slot: slot.index, reason };
    match (slot.kind, candidate) {
        (SlotKind::Column, Candidate::Column(c)) => {
            let col = table.columns.get(*c).ok_or_else(|| err(format!("column {c} out of range")))?;
            if let Some(t) = slot.expected_coltype {
                if col.ctype != t {
                    return Err(err(format!("column {} is {}, expected {}", col.name(), col.ctype.name(), t.name())));
                }
            }
            Ok(())
        }
        (SlotKind::Row, Candidate::AllRows) => Ok(()),
        (SlotKind::Row, Candidate::RowFilter { conditions, connective }) => {
            if conditions.is_empty() {
                return Err(err("row filter without conditions".into()));
            }
            if (conditions.len() == 1) != (*connective == Connective::None) {
                return Err(err("connective must be none iff there is one condition".into()));
            }
            for c in conditions {
                c.check(table).map_err(err)?;
            }
            Ok(())
        }
        (SlotKind::Row, _) => Err(err("row slot needs a row candidate".into())),
        (SlotKind::Column, _) => Err(err("column slot needs a column candidate".into())),
    }
}

/// Substitutes every slot of `h` and returns the executable program.
pub fn instantiate(h: &AbstractProgram, assignment: &[Candidate], table: &Table) -> Result<Program, GrammarError> {
    if assignment.len() != h.slots.len() {
        let missing = assignment.len().min(h.slots.len());
        return Err(GrammarError::SlotMismatch {
            slot: missing,
            reason: format!("{} slots but {} candidates", h.slots.len(), assignment.len()),
        });
    }
    for (slot, cand) in h.slots.iter().zip(assignment) {
        check_candidate(slot, cand, table)?;
    }
    let mut next = assignment.iter().cloned();
    Ok(build(&h.derivation, &mut next))
}

fn build(d: &Derivation, slots: &mut impl Iterator<Item = Candidate>) -> Program {
    let r = rule_by_id(d.rule);
    match r.rhs {
        Rhs::Return(_) => build(&d.children[0], slots),
        Rhs::Slot(_) => slots.next().expect("assignment checked").into_program(),
        Rhs::Apply(f, _) => Program::Apply(f, d.children.iter().map(|c| build(c, slots)).collect()),
    }
}

/// Recovers the abstract program and assignment behind a program.
pub fn strip(program: &Program, table: &Table) -> Result<(AbstractProgram, Assignment), GrammarError> {
    let root = match program {
        Program::Apply(Function::Select, _) => RuleId(0),
        Program::Apply(_, _) => RuleId(1),
        _ => return Err(GrammarError::ProgramSyntax("program root must be a function".into())),
    };
    let mut assignment = Vec::new();
    let child = strip_node(program, rule_by_id(root).children()[0], table, &mut assignment)?;
    let h = AbstractProgram::from_derivation(Derivation { rule: root, children: vec![child] });
    Ok((h, assignment))
}

fn strip_node(p: &Program, demanded: BasicType, table: &Table, out: &mut Assignment) -> Result<Derivation, GrammarError> {
    let syntax = |m: String| GrammarError::ProgramSyntax(m);
    match p {
        Program::AllRows | Program::Filter { .. } => {
            if demanded != BasicType::ListRow {
                return Err(syntax(format!("row candidate where {demanded} is expected")));
            }
            out.push(match p {
                Program::AllRows => Candidate::AllRows,
                Program::Filter { conditions, connective } => Candidate::filter(conditions.clone(), *connective),
                _ => unreachable!(),
            });
            Ok(Derivation { rule: RuleId(17), children: vec![] })
        }
        Program::Column(c) => {
            let id = match demanded {
                BasicType::Column => RuleId(18),
                BasicType::ColNumber => RuleId(19),
                BasicType::ColDate => RuleId(20),
                _ => return Err(syntax(format!("column where {demanded} is expected"))),
            };
            out.push(Candidate::Column(*c));
            Ok(Derivation { rule: id, children: vec![] })
        }
        Program::Apply(f, args) => {
            let rule = RULES
                .iter()
                .find(|r| match r.rhs {
                    Rhs::Apply(g, sig) if g == *f && r.lhs.fills(demanded) && sig.len() == args.len() => {
                        sig.iter().zip(args).all(|(t, a)| match (t.column_constraint(), a) {
                            (Some(ty), Program::Column(c)) => {
                                table.columns.get(*c).map_or(false, |col| col.ctype == ty)
                            }
                            _ => true,
                        })
                    }
                    _ => false,
                })
                .ok_or_else(|| syntax(format!("{} cannot fill {demanded}", f.name())))?;
            let mut children = Vec::new();
            for (t, a) in rule.children().iter().zip(args) {
                children.push(strip_node(a, *t, table, out)?);
            }
            Ok(Derivation { rule: rule.id, children })
        }
    }
}
