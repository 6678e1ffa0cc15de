//! Exhaustive search for programs consistent with a denotation.
//!
//! Every abstract program up to the rule cap is instantiated with every
//! combination of slot candidates. Subtrees are evaluated bottom-up and a
//! partial assignment is dropped as soon as its subtree fails to execute;
//! row-slot filters are computed once per candidate.

mod cache;

pub use cache::{cache_key, SearchCache};

use std::collections::{BTreeSet, HashMap, HashSet};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::corpus::format_table;
use crate::executor::{apply, filter_rows, to_denotation, Program, Value};
use crate::grammar::{
    enumerate_abstract_programs, instantiate, rule_by_id, slot_candidates, strip, AbstractProgram,
    Assignment, Candidate, Derivation, InstantiationConfig, Rhs, RuleSet, SlotKind,
};
use crate::table::{denotation_equal, Corpus, Example, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    WtqLike,
    WsqLike,
    Synthetic,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::WtqLike => "wtq-like",
            Preset::WsqLike => "wsq-like",
            Preset::Synthetic => "synthetic",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Preset::WtqLike, Preset::WsqLike, Preset::Synthetic].into_iter().find(|p| p.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchConfig {
    pub max_rules: usize,
    pub instantiation: InstantiationConfig,
    pub timeout_ms: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self::preset(Preset::Synthetic)
    }
}

impl SearchConfig {
    /// wtq-like: OR only, cap 9. wsq-like and synthetic: AND only, cap 6.
    pub fn preset(p: Preset) -> Self {
        let (max_rules, enable_and, enable_or) = match p {
            Preset::WtqLike => (9, false, true),
            Preset::WsqLike | Preset::Synthetic => (6, true, false),
        };
        Self {
            max_rules,
            instantiation: InstantiationConfig { max_conditions: 2, enable_and, enable_or },
            timeout_ms: 30_000,
        }
    }

    /// Digest of every field that changes search output.
    pub fn digest(&self) -> [u8; 32] {
        let i = &self.instantiation;
        let text = format!(
            "max_rules={};max_conditions={};and={};or={};timeout_ms={}",
            self.max_rules, i.max_conditions, i.enable_and, i.enable_or, self.timeout_ms
        );
        Sha256::digest(text.as_bytes()).into()
    }
}

/// Consistent instantiations of one abstract program.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistentEntry {
    pub abstract_program: AbstractProgram,
    pub assignments: Vec<Assignment>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistentSet {
    pub example_id: String,
    pub entries: Vec<ConsistentEntry>,
    pub total_count: usize,
    /// `false` when the search timed out.
    pub complete: bool,
}

impl ConsistentSet {
    pub fn is_empty(&self) -> bool {
        self.total_count == 0
    }

    /// Every (parent, assignment) pair in order.
    pub fn pairs(&self) -> impl Iterator<Item = (&AbstractProgram, &Assignment)> {
        self.entries.iter().flat_map(|e| e.assignments.iter().map(move |a| (&e.abstract_program, a)))
    }

    pub fn programs(&self, table: &Table) -> Vec<Program> {
        self.pairs().map(|(h, a)| instantiate(h, a, table).expect("consistent programs instantiate")).collect()
    }

    pub fn texts(&self, table: &Table) -> Vec<String> {
        self.programs(table).iter().map(|p| p.text(table)).collect()
    }

    /// Rebuilds a set from program texts, grouping by abstract parent in
    /// order of first appearance.
    pub fn from_programs(example_id: &str, programs: &[Program], table: &Table, complete: bool) -> Self {
        let mut entries: Vec<ConsistentEntry> = Vec::new();
        let mut index: HashMap<AbstractProgram, usize> = HashMap::new();
        for p in programs {
            let (h, a) = strip(p, table).expect("searched programs strip");
            let i = *index.entry(h.clone()).or_insert_with(|| {
                entries.push(ConsistentEntry { abstract_program: h, assignments: Vec::new() });
                entries.len() - 1
            });
            entries[i].assignments.push(a);
        }
        ConsistentSet { example_id: example_id.to_string(), entries, total_count: programs.len(), complete }
    }
}

/// Identifies the inputs of a search: table contents, question tokens and
/// entities, and denotation.
pub fn example_fingerprint(example: &Example, table: &Table) -> [u8; 32] {
    let mut h = Sha256::new();
    let mut t = String::new();
    format_table(table, &mut t);
    h.update(t.as_bytes());
    for tok in &example.question.tokens {
        h.update(tok.text.as_bytes());
        h.update([0]);
    }
    for e in &example.question.entities {
        h.update(format!("{}:{}:{};", e.span.start, e.span.end, e.value.to_tagged()).as_bytes());
    }
    h.update(example.denotation.to_string().as_bytes());
    h.finalize().into()
}

/// Abstract programs under the cap, memoized per rule set.
#[derive(Default)]
pub struct ProgramIndex {
    cap: usize,
    by_set: std::sync::Mutex<HashMap<RuleSet, std::sync::Arc<Vec<AbstractProgram>>>>,
}

impl ProgramIndex {
    pub fn new(cap: usize) -> Self {
        Self { cap, by_set: Default::default() }
    }

    pub fn programs(&self, table: &Table) -> std::sync::Arc<Vec<AbstractProgram>> {
        let set = RuleSet::for_table(table);
        let mut map = self.by_set.lock().unwrap();
        map.entry(set.clone())
            .or_insert_with(|| std::sync::Arc::new(enumerate_abstract_programs(&set, self.cap)))
            .clone()
    }
}

pub fn find_consistent(example: &Example, table: &Table, config: &SearchConfig) -> ConsistentSet {
    let index = ProgramIndex::new(config.max_rules);
    find_consistent_with(&index, example, table, config)
}

struct Bail;

pub fn find_consistent_with(index: &ProgramIndex, example: &Example, table: &Table, config: &SearchConfig) -> ConsistentSet {
    let deadline = Instant::now() + Duration::from_millis(config.timeout_ms);
    let programs = index.programs(table);
    let mut seen: HashSet<String> = HashSet::new();
    let mut found: Vec<Program> = Vec::new();
    let mut complete = true;

    'programs: for h in programs.iter() {
        let cands: Vec<Vec<Candidate>> =
            h.slots.iter().map(|s| slot_candidates(s, table, &example.question, &config.instantiation)).collect();
        let leaves: Vec<Vec<Value>> = h
            .slots
            .iter()
            .zip(&cands)
            .map(|(s, cs)| {
                cs.iter()
                    .map(|c| match (s.kind, c) {
                        (SlotKind::Column, Candidate::Column(i)) => Value::Column(*i),
                        _ => Value::Rows(filter_rows(table, c)),
                    })
                    .collect()
            })
            .collect();
        let mut slot = 0;
        let partials = match eval_all(&h.derivation, &leaves, &mut slot, table, deadline) {
            Ok(p) => p,
            Err(Bail) => {
                complete = false;
                break 'programs;
            }
        };
        for (choice, value) in partials {
            let Ok(d) = to_denotation(value) else { continue };
            if !denotation_equal(&d, &example.denotation) {
                continue;
            }
            let assignment: Assignment = choice.iter().enumerate().map(|(k, &i)| cands[k][i].clone()).collect();
            let z = instantiate(h, &assignment, table).expect("candidates are type-compatible");
            if seen.insert(z.text(table)) {
                found.push(z);
            }
        }
        if Instant::now() > deadline {
            complete = false;
            break;
        }
    }
    ConsistentSet::from_programs(&example.id, &found, table, complete)
}

type Partial = (Vec<usize>, Value);

/// All (slot choices, value) pairs of a subtree that execute without error,
/// with earlier slots varying slowest.
fn eval_all(d: &Derivation, leaves: &[Vec<Value>], slot: &mut usize, table: &Table, deadline: Instant) -> Result<Vec<Partial>, Bail> {
    let r = rule_by_id(d.rule);
    match r.rhs {
        Rhs::Return(_) => eval_all(&d.children[0], leaves, slot, table, deadline),
        Rhs::Slot(_) => {
            let k = *slot;
            *slot += 1;
            Ok(leaves[k].iter().enumerate().map(|(i, v)| (vec![i], v.clone())).collect())
        }
        Rhs::Apply(f, _) => {
            let mut kids = Vec::with_capacity(d.children.len());
            for c in &d.children {
                kids.push(eval_all(c, leaves, slot, table, deadline)?);
            }
            let mut out = Vec::new();
            let mut idx = vec![0usize; kids.len()];
            if kids.iter().any(Vec::is_empty) {
                return Ok(out);
            }
            let mut steps = 0u32;
            loop {
                steps += 1;
                if steps % 4096 == 0 && Instant::now() > deadline {
                    return Err(Bail);
                }
                let args: Vec<Value> = idx.iter().zip(&kids).map(|(&i, k)| k[i].1.clone()).collect();
                if let Ok(v) = apply(f, args, table) {
                    let choice = idx.iter().zip(&kids).flat_map(|(&i, k)| k[i].0.iter().copied()).collect();
                    out.push((choice, v));
                }
                // odometer, last child fastest
                let mut p = kids.len();
                loop {
                    if p == 0 {
                        return Ok(out);
                    }
                    p -= 1;
                    idx[p] += 1;
                    if idx[p] < kids[p].len() {
                        break;
                    }
                    idx[p] = 0;
                }
            }
        }
    }
}

/// Searches every example, consulting and filling the cache when given.
pub fn search_corpus(corpus: &Corpus, config: &SearchConfig, cache: Option<&mut SearchCache>, workers: usize) -> Vec<ConsistentSet> {
    let index = ProgramIndex::new(config.max_rules);
    let digest = config.digest();
    let cached: Vec<Option<ConsistentSet>> = corpus
        .examples
        .iter()
        .map(|e| {
            let t = corpus.table_of(e);
            cache.as_ref().and_then(|c| c.get(&cache_key(&e.id, &digest, &example_fingerprint(e, t)), &e.id, t))
        })
        .collect();
    let run = |i: usize| -> ConsistentSet {
        match &cached[i] {
            Some(s) => s.clone(),
            None => {
                let e = &corpus.examples[i];
                find_consistent_with(&index, e, corpus.table_of(e), config)
            }
        }
    };
    let sets: Vec<ConsistentSet> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool");
        pool.install(|| (0..corpus.examples.len()).into_par_iter().map(run).collect())
    } else {
        (0..corpus.examples.len()).map(run).collect()
    };
    if let Some(c) = cache {
        for (i, s) in sets.iter().enumerate() {
            if cached[i].is_none() {
                let e = &corpus.examples[i];
                let t = corpus.table_of(e);
                let key = cache_key(&e.id, &digest, &example_fingerprint(e, t));
                if let Err(err) = c.put(key, s, t) {
                    log::warn!("cache write failed for example {}: {err}", e.id);
                }
            }
        }
    }
    sets
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CoverageStats {
    pub coverage: f64,
    pub mean_count: f64,
    /// Abstract programs with at least one consistent instantiation anywhere.
    pub distinct_parents: usize,
}

/// Aggregates over complete sets only.
pub fn coverage_stats(sets: &[ConsistentSet]) -> CoverageStats {
    let done: Vec<&ConsistentSet> = sets.iter().filter(|s| s.complete).collect();
    if done.is_empty() {
        return CoverageStats::default();
    }
    let covered = done.iter().filter(|s| !s.is_empty()).count();
    let total: usize = done.iter().map(|s| s.total_count).sum();
    let parents: BTreeSet<String> =
        done.iter().flat_map(|s| s.entries.iter().map(|e| e.abstract_program.to_string())).collect();
    CoverageStats {
        coverage: covered as f64 / done.len() as f64,
        mean_count: total as f64 / done.len() as f64,
        distinct_parents: parents.len(),
    }
}
