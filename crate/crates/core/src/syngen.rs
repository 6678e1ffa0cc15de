//! Seeded synthetic corpora with known gold programs.
//!
//! Tables look like medal tallies: one string column of entity names and
//! two or three number columns. Questions come from fixed templates, each
//! paired with the program that answers it. A fraction of examples then get
//! a private copy of their table with cells perturbed until search finds
//! several consistent programs, without changing the gold denotation.

use crate::entities::build_question;
use crate::executor::{execute, Program};
use crate::grammar::{Condition, Connective, Function, Operator};
use crate::rng::SplitMix64;
use crate::search::{find_consistent_with, ProgramIndex, SearchConfig};
use crate::table::{denotation_equal, CellValue, Column, ColumnType, Corpus, Example, Split, Table};

const ENTITIES: [&str; 40] = [
    "turkey", "norway", "france", "chile", "kenya", "japan", "brazil", "canada", "egypt", "india",
    "italy", "spain", "peru", "cuba", "ghana", "nepal", "mexico", "poland", "sweden", "greece",
    "austria", "belgium", "denmark", "finland", "hungary", "ireland", "jamaica", "latvia", "morocco", "portugal",
    "romania", "serbia", "togo", "uganda", "vietnam", "yemen", "zambia", "iceland", "bolivia", "croatia",
];

const STRING_COLUMNS: [&str; 4] = ["nation", "team", "country", "club"];

const NUMBER_COLUMNS: [&str; 10] =
    ["gold", "silver", "bronze", "points", "wins", "losses", "goals", "games", "titles", "medals"];

/// Template ids, in `template_mix` order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Template {
    Select,
    Argmax,
    Argmin,
    Count,
    Next,
    Previous,
    Sum,
    Average,
}

impl Template {
    pub const ALL: [Template; 8] = [
        Template::Select,
        Template::Argmax,
        Template::Argmin,
        Template::Count,
        Template::Next,
        Template::Previous,
        Template::Sum,
        Template::Average,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::Select => "select",
            Template::Argmax => "argmax",
            Template::Argmin => "argmin",
            Template::Count => "count",
            Template::Next => "next",
            Template::Previous => "previous",
            Template::Sum => "sum",
            Template::Average => "average",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynConfig {
    pub seed: u64,
    pub n_tables: usize,
    pub rows_per_table: (usize, usize),
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    /// Weights over [`Template::ALL`].
    pub template_mix: [f64; 8],
    pub spurious_rate: f64,
    /// Share of count questions with two AND-ed conditions.
    pub two_condition_rate: f64,
    /// Cell values are drawn from `0..=max_value`.
    pub max_value: i64,
    pub spurious_cap: usize,
    pub spurious_min_programs: usize,
    pub max_attempts: usize,
}

impl Default for SynConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_tables: 60,
            rows_per_table: (5, 10),
            n_train: 600,
            n_dev: 100,
            n_test: 200,
            template_mix: [3.0, 1.0, 1.0, 2.0, 1.0, 1.0, 0.5, 0.5],
            spurious_rate: 0.5,
            two_condition_rate: 0.1,
            max_value: 40,
            spurious_cap: 6,
            spurious_min_programs: 3,
            max_attempts: 50,
        }
    }
}

impl SynConfig {
    pub fn n_examples(&self) -> usize {
        self.n_train + self.n_dev + self.n_test
    }

    pub fn validate(&self) -> Result<(), String> {
        let (lo, hi) = self.rows_per_table;
        if !(2 <= lo && lo <= hi && hi <= 30) {
            return Err(format!("rows_per_table must satisfy 2 <= min <= max <= 30, got ({lo}, {hi})"));
        }
        if self.template_mix.iter().any(|w| *w < 0.0 || !w.is_finite()) || self.template_mix.iter().sum::<f64>() <= 0.0 {
            return Err("template weights must be non-negative with a positive sum".into());
        }
        if !(0.0..=1.0).contains(&self.spurious_rate) {
            return Err("spurious_rate must be in [0, 1]".into());
        }
        if self.n_tables == 0 {
            return Err("n_tables must be at least 1".into());
        }
        if self.max_value < 2 {
            return Err("max_value must be at least 2".into());
        }
        Ok(())
    }
}

pub fn generate_table(rng: &mut SplitMix64, cfg: &SynConfig, id: &str) -> Table {
    let n_rows = rng.range_inclusive(cfg.rows_per_table.0 as i64, cfg.rows_per_table.1 as i64) as usize;
    let mut names: Vec<&str> = ENTITIES.to_vec();
    rng.shuffle(&mut names);
    let mut numcols: Vec<&str> = NUMBER_COLUMNS.to_vec();
    rng.shuffle(&mut numcols);
    let n_num = 2 + rng.below(2);
    let mut columns = vec![Column {
        name_tokens: vec![(*rng.choose(&STRING_COLUMNS)).to_string()],
        ctype: ColumnType::String,
        cells: names[..n_rows].iter().map(|n| CellValue::text(*n)).collect(),
    }];
    for name in &numcols[..n_num] {
        columns.push(Column {
            name_tokens: vec![name.to_string()],
            ctype: ColumnType::Number,
            cells: (0..n_rows).map(|_| CellValue::Number(rng.range_inclusive(0, cfg.max_value) as f64)).collect(),
        });
    }
    Table::new(id, columns).expect("generated tables are well-typed")
}

fn eq_entity(row: usize, t: &Table) -> Program {
    Program::Filter {
        conditions: vec![Condition { column: 0, op: Operator::Eq, value: t.cell(row, 0).clone() }],
        connective: Connective::None,
    }
}

fn num(t: &Table, row: usize, col: usize) -> i64 {
    t.cell(row, col).as_number().unwrap_or(0.0) as i64
}

/// One question and its gold program, or `None` when the drawn values
/// give an empty or failing denotation.
pub fn generate_example(rng: &mut SplitMix64, table: &Table, template: Template, cfg: &SynConfig) -> Option<(Vec<String>, Program)> {
    use Function as F;
    let n_rows = table.n_rows;
    let numcols: Vec<usize> = (1..table.columns.len()).collect();
    let str_name = table.columns[0].name();
    let c = *rng.choose(&numcols);
    let cname = table.columns[c].name();
    let row = rng.below(n_rows);
    let ent = match table.cell(row, 0) {
        CellValue::Text(s) => s.clone(),
        other => other.to_tagged(),
    };
    let (text, z) = match template {
        Template::Select => {
            let text = match rng.below(3) {
                0 => format!("how many {cname} did {ent} get"),
                1 => format!("what is the {cname} of {ent}"),
                _ => format!("how many {cname} does {ent} have"),
            };
            (text, Program::Apply(F::Select, vec![eq_entity(row, table), Program::Column(c)]))
        }
        Template::Argmax | Template::Argmin => {
            let (f, word) = if template == Template::Argmax { (F::Argmax, "most") } else { (F::Argmin, "fewest") };
            let text = match rng.below(2) {
                0 => format!("which {str_name} had the {word} {cname}"),
                _ => format!("which {str_name} got the {word} {cname}"),
            };
            let sup = Program::Apply(f, vec![Program::AllRows, Program::Column(c)]);
            (text, Program::Apply(F::Select, vec![sup, Program::Column(0)]))
        }
        Template::Count => {
            let (op, word) = if rng.bernoulli(0.5) { (Operator::Gt, "more") } else { (Operator::Lt, "less") };
            let v = num(table, rng.below(n_rows), c);
            let first = Condition { column: c, op, value: CellValue::Number(v as f64) };
            if numcols.len() > 1 && rng.bernoulli(cfg.two_condition_rate) {
                let others: Vec<usize> = numcols.iter().copied().filter(|x| *x != c).collect();
                let c2 = *rng.choose(&others);
                let (op2, word2) = if op == Operator::Gt { (Operator::Lt, "less") } else { (Operator::Gt, "more") };
                let v2 = num(table, rng.below(n_rows), c2);
                let c2name = table.columns[c2].name();
                let text = format!("how many {str_name} had {word} than {v} {cname} and {word2} than {v2} {c2name}");
                let second = Condition { column: c2, op: op2, value: CellValue::Number(v2 as f64) };
                let conds = crate::grammar::Candidate::filter(vec![first, second], Connective::And).into_program();
                (text, Program::Apply(F::Count, vec![conds]))
            } else {
                let text = format!("how many {str_name} had {word} than {v} {cname}");
                let conds = Program::Filter { conditions: vec![first], connective: Connective::None };
                (text, Program::Apply(F::Count, vec![conds]))
            }
        }
        Template::Next | Template::Previous => {
            let (f, text) = if template == Template::Next {
                (F::Next, format!("which {str_name} is listed after {ent}"))
            } else {
                (F::Previous, format!("which {str_name} is listed before {ent}"))
            };
            let shifted = Program::Apply(f, vec![eq_entity(row, table)]);
            (text, Program::Apply(F::Select, vec![shifted, Program::Column(0)]))
        }
        Template::Sum => {
            let text = format!("what is the total number of {cname}");
            (text, Program::Apply(F::Sum, vec![Program::AllRows, Program::Column(c)]))
        }
        Template::Average => {
            let text = format!("what is the average number of {cname}");
            (text, Program::Apply(F::Average, vec![Program::AllRows, Program::Column(c)]))
        }
    };
    let d = execute(&z, table).ok()?;
    if d.is_empty() {
        return None;
    }
    Some((text.split_whitespace().map(String::from).collect(), z))
}

fn make_example(id: usize, words: &[String], table: &Table, split: Split, z: Program) -> Example {
    let toks: Vec<(String, Option<String>)> = words.iter().map(|w| (w.clone(), None)).collect();
    let denotation = execute(&z, table).expect("gold executes");
    Example {
        id: id.to_string(),
        question: build_question(&toks, table),
        table_id: table.id.clone(),
        split,
        denotation,
        gold_programs: vec![z],
    }
}

/// A clean corpus: tables, then examples with ids in order (train, dev, test).
pub fn generate_corpus(cfg: &SynConfig) -> Result<Corpus, String> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);
    let mut corpus = Corpus::default();
    let mut ids = Vec::new();
    for i in 0..cfg.n_tables {
        let id = format!("t{i}");
        let t = generate_table(&mut rng.split(), cfg, &id);
        corpus.tables.insert(id.clone(), t);
        ids.push(id);
    }
    let splits = [(Split::Train, cfg.n_train), (Split::Dev, cfg.n_dev), (Split::Test, cfg.n_test)];
    for (split, n) in splits {
        for _ in 0..n {
            let mut er = rng.split();
            let ex = loop {
                let t = &corpus.tables[&ids[er.below(ids.len())]];
                let template = Template::ALL[er.weighted(&cfg.template_mix)];
                if let Some((words, z)) = generate_example(&mut er, t, template, cfg) {
                    break make_example(corpus.examples.len(), &words, t, split, z);
                }
            };
            corpus.examples.push(ex);
        }
    }
    Ok(corpus)
}

/// Outcome of spuriousness injection for one targeted example.
#[derive(Clone, Debug, PartialEq)]
pub struct SpuriousRecord {
    pub example_id: String,
    /// Consistent programs under the cap after perturbation, `None` when
    /// the example was left unperturbed.
    pub consistent: Option<usize>,
    pub attempts: usize,
}

/// Perturbs cells of a private table copy until search finds at least
/// `spurious_min_programs` consistent programs, keeping the gold
/// denotation. Gives up after `max_attempts`.
pub fn inject_spuriousness(corpus: &Corpus, cfg: &SynConfig) -> (Corpus, Vec<SpuriousRecord>) {
    if cfg.spurious_rate <= 0.0 {
        return (corpus.clone(), Vec::new());
    }
    let mut rng = SplitMix64::new(cfg.seed ^ 0x5eed_5eed_5eed_5eed);
    let search = SearchConfig { max_rules: cfg.spurious_cap, ..SearchConfig::default() };
    let index = ProgramIndex::new(search.max_rules);
    let mut out = corpus.clone();
    let mut records = Vec::new();
    for ei in 0..out.examples.len() {
        let mut er = rng.split();
        if !er.bernoulli(cfg.spurious_rate) {
            continue;
        }
        let ex = out.examples[ei].clone();
        let Some(gold) = ex.gold_programs.first().cloned() else { continue };
        let base = out.tables[&ex.table_id].clone();
        let mut table = base.clone();
        let mut found = None;
        let mut attempts = 0;
        while attempts < cfg.max_attempts {
            attempts += 1;
            let mut trial = table.clone();
            perturb(&mut er, &mut trial, &ex, cfg);
            let Ok(d) = execute(&gold, &trial) else { continue };
            if !denotation_equal(&d, &ex.denotation) {
                continue;
            }
            table = trial;
            let mut probe = ex.clone();
            probe.question = rebuild_question(&ex, &table);
            let set = find_consistent_with(&index, &probe, &table, &search);
            if set.total_count >= cfg.spurious_min_programs {
                found = Some(set.total_count);
                break;
            }
        }
        match found {
            Some(n) => {
                let id = format!("{}s{}", ex.table_id, ex.id);
                table.id = id.clone();
                let e = &mut out.examples[ei];
                e.question = rebuild_question(&ex, &table);
                e.table_id = id.clone();
                out.tables.insert(id, table);
                records.push(SpuriousRecord { example_id: ex.id.clone(), consistent: Some(n), attempts });
            }
            None => {
                log::debug!("example {}: no spurious perturbation after {attempts} attempts", ex.id);
                records.push(SpuriousRecord { example_id: ex.id.clone(), consistent: None, attempts });
            }
        }
    }
    (out, records)
}

fn rebuild_question(ex: &Example, table: &Table) -> crate::table::Question {
    let toks: Vec<(String, Option<String>)> =
        ex.question.tokens[..ex.question.n() - 1].iter().map(|t| (t.text.clone(), t.pos.clone())).collect();
    build_question(&toks, table)
}

/// One random edit that tends to create coincidences: a number cell takes
/// the answer, a value from elsewhere in the table, or zero.
fn perturb(rng: &mut SplitMix64, t: &mut Table, ex: &Example, cfg: &SynConfig) {
    let numcols: Vec<usize> = (0..t.columns.len()).filter(|c| t.columns[*c].ctype == ColumnType::Number).collect();
    if numcols.is_empty() {
        return;
    }
    let c = *rng.choose(&numcols);
    let r = rng.below(t.n_rows);
    let answer = ex.denotation.values.iter().find_map(CellValue::as_number);
    let v = match rng.below(4) {
        0 if answer.is_some() => answer.unwrap(),
        1 => {
            let c2 = *rng.choose(&numcols);
            t.cell(rng.below(t.n_rows), c2).as_number().unwrap_or(0.0)
        }
        2 => 0.0,
        _ => rng.range_inclusive(0, cfg.max_value) as f64,
    };
    t.columns[c].cells[r] = CellValue::Number(v);
}

/// Clean generation followed by spuriousness injection.
pub fn generate(cfg: &SynConfig) -> Result<(Corpus, Vec<SpuriousRecord>), String> {
    let clean = generate_corpus(cfg)?;
    Ok(inject_spuriousness(&clean, cfg))
}
