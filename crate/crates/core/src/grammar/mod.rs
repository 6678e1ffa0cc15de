//! Abstract grammar: typed production rules over high-level functions,
//! with row and column selection left as slots.
//!
//! Function inventory (rule ids are stable and index the decoder's output):
//!
//! | lhs        | rhs                                   |
//! |------------|---------------------------------------|
//! | ROOT       | STRING, NUMBER                        |
//! | STRING     | select(LIST_ROW, COLUMN)              |
//! | NUMBER     | count(LIST_ROW)                       |
//! | NUMBER     | max/min/sum/average(LIST_ROW, COL_NUMBER) |
//! | NUMBER     | diff(NUMBER, NUMBER)                  |
//! | LIST_ROW   | argmax/argmin(LIST_ROW, COL_NUMBER)   |
//! | LIST_ROW   | argmax/argmin(LIST_ROW, COL_DATE)     |
//! | ROW        | first/last/previous/next(LIST_ROW)    |
//! | LIST_ROW   | #row_slot                             |
//! | COLUMN, COL_NUMBER, COL_DATE | #column_slot        |
//!
//! Wherever a LIST_ROW is demanded, a ROW-returning rule is also accepted
//! (a single row is a list of length one). `filter` never appears here: it
//! is produced by row-slot candidates. There is no `same_as`.

mod instantiation;
pub mod program_text;

pub use instantiation::{
    instantiate, slot_candidates, strip, Assignment, Candidate, Condition, Connective,
    InstantiationConfig, Operator,
};

use std::fmt;

use crate::error::GrammarError;
use crate::table::{ColumnType, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BasicType {
    Root,
    Row,
    ListRow,
    String,
    Number,
    Date,
    Column,
    ColString,
    ColNumber,
    ColDate,
}

impl BasicType {
    pub fn name(self) -> &'static str {
        match self {
            BasicType::Root => "ROOT",
            BasicType::Row => "ROW",
            BasicType::ListRow => "LIST_ROW",
            BasicType::String => "STRING",
            BasicType::Number => "NUMBER",
            BasicType::Date => "DATE",
            BasicType::Column => "COLUMN",
            BasicType::ColString => "COL_STRING",
            BasicType::ColNumber => "COL_NUMBER",
            BasicType::ColDate => "COL_DATE",
        }
    }

    /// Column type a column-slot of this type must hold, if constrained.
    pub fn column_constraint(self) -> Option<ColumnType> {
        match self {
            BasicType::ColString => Some(ColumnType::String),
            BasicType::ColNumber => Some(ColumnType::Number),
            BasicType::ColDate => Some(ColumnType::Date),
            _ => None,
        }
    }

    pub fn is_column(self) -> bool {
        matches!(
            self,
            BasicType::Column | BasicType::ColString | BasicType::ColNumber | BasicType::ColDate
        )
    }

    /// Whether a rule with left-hand side `self` may fill a node demanding `demanded`.
    pub fn fills(self, demanded: BasicType) -> bool {
        self == demanded || (demanded == BasicType::ListRow && self == BasicType::Row)
    }
}

impl fmt::Display for BasicType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A function type `<ret: args...>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuncType {
    pub args: Vec<BasicType>,
    pub ret: BasicType,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Function {
    Select,
    Count,
    Max,
    Min,
    Sum,
    Average,
    Diff,
    Argmax,
    Argmin,
    First,
    Last,
    Previous,
    Next,
}

impl Function {
    pub const ALL: [Function; 13] = [
        Function::Select,
        Function::Count,
        Function::Max,
        Function::Min,
        Function::Sum,
        Function::Average,
        Function::Diff,
        Function::Argmax,
        Function::Argmin,
        Function::First,
        Function::Last,
        Function::Previous,
        Function::Next,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Function::Select => "select",
            Function::Count => "count",
            Function::Max => "max",
            Function::Min => "min",
            Function::Sum => "sum",
            Function::Average => "average",
            Function::Diff => "diff",
            Function::Argmax => "argmax",
            Function::Argmin => "argmin",
            Function::First => "first",
            Function::Last => "last",
            Function::Previous => "previous",
            Function::Next => "next",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Function::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SlotKind {
    Row,
    Column,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rhs {
    /// Root rule choosing the program's return type.
    Return(BasicType),
    Apply(Function, &'static [BasicType]),
    Slot(SlotKind),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuleId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProductionRule {
    pub id: RuleId,
    pub lhs: BasicType,
    pub rhs: Rhs,
}

impl ProductionRule {
    /// Types this rule pushes onto the frontier, left to right.
    pub fn children(&self) -> &'static [BasicType] {
        match self.rhs {
            Rhs::Return(t) => match t {
                BasicType::String => &[BasicType::String],
                BasicType::Number => &[BasicType::Number],
                BasicType::Date => &[BasicType::Date],
                _ => unreachable!("root rules return STRING, NUMBER or DATE"),
            },
            Rhs::Apply(_, args) => args,
            Rhs::Slot(_) => &[],
        }
    }

    pub fn signature(&self) -> FuncType {
        FuncType { args: self.children().to_vec(), ret: self.lhs }
    }

    pub fn slot_kind(&self) -> Option<SlotKind> {
        match self.rhs {
            Rhs::Slot(k) => Some(k),
            _ => None,
        }
    }
}

impl fmt::Display for ProductionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rhs {
            Rhs::Return(t) => write!(f, "{} -> {}", self.lhs, t),
            Rhs::Apply(func, _) => write!(f, "{} -> {}", self.lhs, func.name()),
            Rhs::Slot(SlotKind::Row) => write!(f, "{} -> #row_slot", self.lhs),
            Rhs::Slot(SlotKind::Column) => write!(f, "{} -> #column_slot", self.lhs),
        }
    }
}

use BasicType as T;

const ROWS_COL: &[BasicType] = &[T::ListRow, T::Column];
const ROWS: &[BasicType] = &[T::ListRow];
const ROWS_NUM: &[BasicType] = &[T::ListRow, T::ColNumber];
const ROWS_DATE: &[BasicType] = &[T::ListRow, T::ColDate];
const NUM_NUM: &[BasicType] = &[T::Number, T::Number];

const fn rule(id: usize, lhs: BasicType, rhs: Rhs) -> ProductionRule {
    ProductionRule { id: RuleId(id), lhs, rhs }
}

/// The global rule inventory, indexed by `RuleId`.
pub static RULES: [ProductionRule; 21] = [
    rule(0, T::Root, Rhs::Return(T::String)),
    rule(1, T::Root, Rhs::Return(T::Number)),
    rule(2, T::String, Rhs::Apply(Function::Select, ROWS_COL)),
    rule(3, T::Number, Rhs::Apply(Function::Count, ROWS)),
    rule(4, T::Number, Rhs::Apply(Function::Max, ROWS_NUM)),
    rule(5, T::Number, Rhs::Apply(Function::Min, ROWS_NUM)),
    rule(6, T::Number, Rhs::Apply(Function::Sum, ROWS_NUM)),
    rule(7, T::Number, Rhs::Apply(Function::Average, ROWS_NUM)),
    rule(8, T::Number, Rhs::Apply(Function::Diff, NUM_NUM)),
    rule(9, T::ListRow, Rhs::Apply(Function::Argmax, ROWS_NUM)),
    rule(10, T::ListRow, Rhs::Apply(Function::Argmin, ROWS_NUM)),
    rule(11, T::ListRow, Rhs::Apply(Function::Argmax, ROWS_DATE)),
    rule(12, T::ListRow, Rhs::Apply(Function::Argmin, ROWS_DATE)),
    rule(13, T::Row, Rhs::Apply(Function::First, ROWS)),
    rule(14, T::Row, Rhs::Apply(Function::Last, ROWS)),
    rule(15, T::Row, Rhs::Apply(Function::Previous, ROWS)),
    rule(16, T::Row, Rhs::Apply(Function::Next, ROWS)),
    rule(17, T::ListRow, Rhs::Slot(SlotKind::Row)),
    rule(18, T::Column, Rhs::Slot(SlotKind::Column)),
    rule(19, T::ColNumber, Rhs::Slot(SlotKind::Column)),
    rule(20, T::ColDate, Rhs::Slot(SlotKind::Column)),
];

pub const N_RULES: usize = RULES.len();

pub fn rule_by_id(id: RuleId) -> &'static ProductionRule {
    &RULES[id.0]
}

/// A subset of the global inventory, e.g. the rules executable on one table.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RuleSet {
    enabled: [bool; N_RULES],
}

impl RuleSet {
    pub fn full() -> Self {
        Self { enabled: [true; N_RULES] }
    }

    /// Rules executable on `table`: number aggregations and superlatives need
    /// a number column, date superlatives need a date column.
    pub fn for_table(table: &Table) -> Self {
        let has_num = table.has_column_type(ColumnType::Number);
        let has_date = table.has_column_type(ColumnType::Date);
        let mut set = Self::full();
        for r in &RULES {
            let needs_num = r.children().contains(&T::ColNumber) || r.lhs == T::ColNumber;
            let needs_date = r.children().contains(&T::ColDate) || r.lhs == T::ColDate;
            if (needs_num && !has_num) || (needs_date && !has_date) {
                set.enabled[r.id.0] = false;
            }
        }
        set
    }

    pub fn contains(&self, id: RuleId) -> bool {
        self.enabled[id.0]
    }

    pub fn rules(&self) -> impl Iterator<Item = &'static ProductionRule> + '_ {
        RULES.iter().filter(|r| self.enabled[r.id.0])
    }

    /// Rules whose left-hand side fills the leftmost open node of `partial`.
    pub fn valid_next_rules(&self, partial: &PartialDerivation) -> Vec<RuleId> {
        match partial.demanded() {
            None => Vec::new(),
            Some(t) => self.rules().filter(|r| r.lhs.fills(t)).map(|r| r.id).collect(),
        }
    }

    /// Fewest rules needed to complete a node of each type, `None` when impossible.
    fn min_sizes(&self) -> [Option<usize>; 10] {
        let mut best: [Option<usize>; 10] = [None; 10];
        let all_types = [
            T::Root, T::Row, T::ListRow, T::String, T::Number, T::Date,
            T::Column, T::ColString, T::ColNumber, T::ColDate,
        ];
        loop {
            let mut changed = false;
            for r in self.rules() {
                let mut size = Some(1usize);
                for c in r.children() {
                    size = match (size, min_for(&best, *c)) {
                        (Some(a), Some(b)) => Some(a + b),
                        _ => None,
                    };
                }
                if let Some(s) = size {
                    for t in all_types {
                        if r.lhs == t && best[t as usize].map_or(true, |b| s < b) {
                            best[t as usize] = Some(s);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return best;
            }
        }
    }
}

fn min_for(best: &[Option<usize>; 10], demanded: BasicType) -> Option<usize> {
    let own = best[demanded as usize];
    if demanded == T::ListRow {
        match (own, best[T::Row as usize]) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    } else {
        own
    }
}

/// The root-type rules any derivation starts with.
pub fn valid_next_rules(partial: &PartialDerivation) -> Vec<RuleId> {
    RuleSet::full().valid_next_rules(partial)
}

/// A derivation tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Derivation {
    pub rule: RuleId,
    pub children: Vec<Derivation>,
}

impl Derivation {
    /// Left-to-right depth-first rule sequence.
    pub fn linearize(&self) -> Vec<RuleId> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<RuleId>) {
        out.push(self.rule);
        for c in &self.children {
            c.collect(out);
        }
    }

    /// Rebuilds a derivation from its linearization.
    pub fn parse(seq: &[RuleId]) -> Result<Derivation, GrammarError> {
        let mut pos = 0;
        let d = Self::parse_node(seq, &mut pos, T::Root)?;
        if pos != seq.len() {
            return Err(GrammarError::BadSequence {
                index: pos,
                reason: "trailing rules after a complete derivation".into(),
            });
        }
        Ok(d)
    }

    fn parse_node(seq: &[RuleId], pos: &mut usize, demanded: BasicType) -> Result<Derivation, GrammarError> {
        let index = *pos;
        let id = *seq.get(index).ok_or_else(|| GrammarError::BadSequence {
            index,
            reason: format!("sequence ends while {demanded} is open"),
        })?;
        let rule = RULES.get(id.0).ok_or_else(|| GrammarError::BadSequence {
            index,
            reason: format!("unknown rule id {}", id.0),
        })?;
        if !rule.lhs.fills(demanded) {
            return Err(GrammarError::BadSequence {
                index,
                reason: format!("rule `{rule}` cannot fill {demanded}"),
            });
        }
        *pos += 1;
        let mut children = Vec::new();
        for c in rule.children() {
            children.push(Self::parse_node(seq, pos, *c)?);
        }
        Ok(Derivation { rule: id, children })
    }

    pub fn rule_count(&self) -> usize {
        1 + self.children.iter().map(Derivation::rule_count).sum::<usize>()
    }
}

/// A derivation under construction, tracked by its open frontier.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartialDerivation {
    pub rules: Vec<RuleId>,
    /// Open nodes; the last element is the leftmost.
    frontier: Vec<BasicType>,
    started: bool,
}

impl PartialDerivation {
    pub fn new() -> Self {
        Self::default()
    }

    /// Type of the leftmost unexpanded node, `None` once complete.
    pub fn demanded(&self) -> Option<BasicType> {
        if !self.started {
            Some(T::Root)
        } else {
            self.frontier.last().copied()
        }
    }

    pub fn is_complete(&self) -> bool {
        self.started && self.frontier.is_empty()
    }

    pub fn open_nodes(&self) -> &[BasicType] {
        &self.frontier
    }

    pub fn push(&mut self, id: RuleId) -> Result<(), GrammarError> {
        let index = self.rules.len();
        let demanded = self.demanded().ok_or_else(|| GrammarError::BadSequence {
            index,
            reason: "derivation already complete".into(),
        })?;
        let rule = RULES.get(id.0).ok_or_else(|| GrammarError::BadSequence {
            index,
            reason: format!("unknown rule id {}", id.0),
        })?;
        if !rule.lhs.fills(demanded) {
            return Err(GrammarError::BadSequence {
                index,
                reason: format!("rule `{rule}` cannot fill {demanded}"),
            });
        }
        if self.started {
            self.frontier.pop();
        }
        self.started = true;
        self.frontier.extend(rule.children().iter().rev());
        self.rules.push(id);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Slot {
    pub kind: SlotKind,
    pub index: usize,
    pub expected_coltype: Option<ColumnType>,
    /// Position of the slot rule in the linearized sequence.
    pub position: usize,
}

/// An abstract program: derivation, linearization and slots.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AbstractProgram {
    pub rules: Vec<RuleId>,
    pub slots: Vec<Slot>,
    pub derivation: Derivation,
}

impl AbstractProgram {
    pub fn from_derivation(derivation: Derivation) -> Self {
        let rules = derivation.linearize();
        let slots = rules
            .iter()
            .enumerate()
            .filter_map(|(pos, id)| {
                let r = rule_by_id(*id);
                r.slot_kind().map(|kind| (pos, kind, r.lhs))
            })
            .enumerate()
            .map(|(index, (position, kind, lhs))| Slot {
                kind,
                index,
                expected_coltype: lhs.column_constraint(),
                position,
            })
            .collect();
        Self { rules, slots, derivation }
    }

    pub fn from_rules(rules: &[RuleId]) -> Result<Self, GrammarError> {
        Ok(Self::from_derivation(Derivation::parse(rules)?))
    }

    pub fn is_realizable(&self, set: &RuleSet) -> bool {
        self.rules.iter().all(|r| set.contains(*r))
    }
}

impl fmt::Display for AbstractProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(d: &Derivation, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let r = rule_by_id(d.rule);
            match r.rhs {
                Rhs::Return(_) => go(&d.children[0], f),
                Rhs::Slot(SlotKind::Row) => f.write_str("#row_slot"),
                Rhs::Slot(SlotKind::Column) => f.write_str("#column_slot"),
                Rhs::Apply(func, _) => {
                    write!(f, "{}(", func.name())?;
                    for (i, c) in d.children.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        go(c, f)?;
                    }
                    f.write_str(")")
                }
            }
        }
        go(&self.derivation, f)
    }
}

/// Every complete derivation with at most `max_rules` rules, ordered
/// lexicographically by rule-id sequence.
pub fn enumerate_abstract_programs(set: &RuleSet, max_rules: usize) -> Vec<AbstractProgram> {
    let min = set.min_sizes();
    let mut out = Vec::new();
    let mut partial = PartialDerivation::new();
    fn go(
        set: &RuleSet,
        min: &[Option<usize>; 10],
        cap: usize,
        partial: &mut PartialDerivation,
        out: &mut Vec<AbstractProgram>,
    ) {
        if partial.is_complete() {
            out.push(AbstractProgram::from_rules(&partial.rules).expect("enumerated sequence parses"));
            return;
        }
        for id in set.valid_next_rules(partial) {
            let mut next = partial.clone();
            next.push(id).expect("valid rule");
            let needed: Option<usize> = next
                .open_nodes()
                .iter()
                .try_fold(0usize, |acc, t| min_for(min, *t).map(|m| acc + m));
            match needed {
                Some(n) if next.rules.len() + n <= cap => go(set, min, cap, &mut next, out),
                _ => {}
            }
        }
    }
    go(set, &min, max_rules, &mut partial, &mut out);
    out
}
