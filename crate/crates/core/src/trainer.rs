//! The marginal-likelihood objective and the training loop.
//!
//! For an example with consistent programs grouped by abstract parent,
//!
//! ```text
//! loss = −log Σ_h p(h | x, t) · Σ_{a ∈ A_h} Π_k p(s_k → a_k | x, t, h)
//! ```
//!
//! computed in log space, with the slot representations pooled from the
//! expected alignment (structured mode) or plain attention.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;

use thiserror::Error;

use crate::error::ModelError;
use crate::evalkit::split_accuracy;
use crate::model::gradcheck::{check_gradients, sample_coordinates, GradCheckReport, DEFAULT_STEP};
use crate::model::params::{Gradients, ParameterStore};
use crate::model::tape::{Graph, Var};
use crate::model::{AttentionMode, Dropout, Parser};
use crate::rng::SplitMix64;
use crate::search::{ConsistentEntry, ConsistentSet};
use crate::table::{Corpus, Example, Split, Table};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub attention_mode: AttentionMode,
    /// Skip examples whose alignment is infeasible instead of failing.
    pub skip_infeasible: bool,
    pub max_programs: usize,
    /// Epochs without dev improvement before stopping; 0 disables.
    pub patience: usize,
    pub max_nonfinite_fraction: f64,
    pub checkpoint: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    /// Threads for dev evaluation.
    pub eval_workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 5.0,
            seed: 1,
            attention_mode: AttentionMode::Structured,
            skip_infeasible: true,
            max_programs: 200,
            patience: 10,
            max_nonfinite_fraction: 0.1,
            checkpoint: None,
            metrics: None,
            eval_workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate > 0.0) {
            return Err("learning rate must be positive".into());
        }
        if !(self.clip_norm > 0.0) {
            return Err("clip norm must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err("Adam moments must be in [0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Skip {
    #[error("no consistent programs")]
    EmptyConsistent,
    #[error("no consistent parent can be scored: {0}")]
    Infeasible(ModelError),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("epoch {epoch}: {nonfinite} of {attempted} examples had a non-finite loss or gradient")]
    NonFinite { epoch: usize, nonfinite: usize, attempted: usize },
    #[error("example {id}: {reason}")]
    Infeasible { id: String, reason: Skip },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Keeps the `max` shortest programs (rules plus conditions), stable in
/// the original order among ties.
pub fn truncate_consistent(set: &ConsistentSet, max: usize) -> ConsistentSet {
    if set.total_count <= max {
        return set.clone();
    }
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (ei, e) in set.entries.iter().enumerate() {
        for (ai, a) in e.assignments.iter().enumerate() {
            let conds: usize = a.iter().map(|c| c.condition_count()).sum();
            pairs.push((e.abstract_program.rules.len() + conds, ei, ai));
        }
    }
    pairs.sort_by_key(|p| p.0);
    pairs.truncate(max);
    pairs.sort_by_key(|p| (p.1, p.2));
    let mut entries: Vec<ConsistentEntry> = Vec::new();
    for (_, ei, ai) in pairs {
        let e = &set.entries[ei];
        if entries.last().map_or(true, |l| l.abstract_program != e.abstract_program) {
            entries.push(ConsistentEntry { abstract_program: e.abstract_program.clone(), assignments: Vec::new() });
        }
        entries.last_mut().unwrap().assignments.push(e.assignments[ai].clone());
    }
    ConsistentSet { example_id: set.example_id.clone(), entries, total_count: max, complete: set.complete }
}

/// The negative marginal log-likelihood of the consistent set.
pub fn example_loss<'g>(
    parser: &Parser,
    g: &'g Graph<'g>,
    example: &Example,
    table: &Table,
    set: &ConsistentSet,
    drop: &Dropout,
) -> Result<Var<'g>, Skip> {
    if set.is_empty() {
        return Err(Skip::EmptyConsistent);
    }
    let ctx = parser.context(g, &example.question, table, drop);
    let mut terms = Vec::with_capacity(set.entries.len());
    let mut last_err = None;
    for entry in &set.entries {
        let scores = match parser.program_scores(g, &ctx, &entry.abstract_program, drop) {
            Ok(s) => s,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let mut per_assignment = Vec::with_capacity(entry.assignments.len());
        'a: for a in &entry.assignments {
            let mut parts = Vec::with_capacity(a.len());
            for (k, cand) in a.iter().enumerate() {
                let (cands, lp) = &scores.slots[k];
                match cands.iter().position(|c| c == cand) {
                    Some(i) => parts.push(lp.index(i)),
                    None => {
                        log::debug!("example {}: consistent candidate {cand} is not in the slot's list", example.id);
                        continue 'a;
                    }
                }
            }
            per_assignment.push(if parts.is_empty() { g.scalar(0.0) } else { g.stack(&parts).sum() });
        }
        if per_assignment.is_empty() {
            continue;
        }
        terms.push(scores.log_p_h.add(g.logsumexp_of(&per_assignment)));
    }
    if terms.is_empty() {
        return Err(Skip::Infeasible(last_err.unwrap_or(ModelError::NoCandidates(0))));
    }
    Ok(g.logsumexp_of(&terms).neg())
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParameterStore) -> Self {
        let z: Vec<Vec<f64>> = store.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
        Self { m: z.clone(), v: z, t: 0 }
    }

    pub fn step(&mut self, store: &mut ParameterStore, grads: &Gradients, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for (i, g) in grads.grads.iter().enumerate() {
            if !grads.touched[i] {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let data = &mut store.get_mut(crate::model::ParamId(i)).data;
            for j in 0..g.len() {
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
                data[j] -= cfg.learning_rate * (m[j] / c1) / ((v[j] / c2).sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Scales `grads` so their global norm is at most `max`.
pub fn clip_gradients(grads: &mut Gradients, max: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max {
        grads.scale(max / norm);
    }
    norm
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub dev_acc: f64,
    pub skipped: usize,
    pub nonfinite: usize,
}

impl EpochMetrics {
    pub fn line(&self) -> String {
        format!("{}\t{:.6}\t{:.4}", self.epoch, self.loss, self.dev_acc)
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_dev_acc: f64,
}

/// Per-example Adam training with early stopping on dev accuracy. The
/// parser ends holding the best-dev parameters.
pub fn train(parser: &mut Parser, corpus: &Corpus, sets: &HashMap<String, ConsistentSet>, cfg: &TrainConfig) -> Result<TrainReport, TrainError> {
    cfg.validate().map_err(TrainError::Config)?;
    parser.config.attention_mode = cfg.attention_mode;
    let mut rng = SplitMix64::new(cfg.seed);
    let mut adam = Adam::new(&parser.params);
    let train: Vec<(&Example, ConsistentSet)> = corpus
        .split(Split::Train)
        .filter_map(|e| {
            let s = sets.get(&e.id)?;
            (!s.is_empty()).then(|| (e, truncate_consistent(s, cfg.max_programs)))
        })
        .collect();
    let has_dev = corpus.split(Split::Dev).next().is_some();
    let mut metrics_file = match &cfg.metrics {
        Some(p) => Some(std::fs::File::create(p)?),
        None => None,
    };
    let mut report = TrainReport { epochs: Vec::new(), best_epoch: 0, best_dev_acc: f64::NEG_INFINITY };
    let mut best: Option<ParameterStore> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        rng.shuffle(&mut order);
        let (mut total, mut counted, mut skipped, mut nonfinite) = (0.0, 0usize, 0usize, 0usize);
        for &i in &order {
            let (e, set) = &train[i];
            let drop = Dropout::on(rng.next_u64());
            let table = corpus.table_of(e);
            let outcome = {
                let g = Graph::new(&parser.params);
                match example_loss(parser, &g, e, table, set, &drop) {
                    Ok(loss) => {
                        let v = loss.scalar();
                        if v.is_finite() {
                            Ok(Some((v, g.backward(loss))))
                        } else {
                            Ok(None)
                        }
                    }
                    Err(s) => Err(s),
                }
            };
            match outcome {
                Err(reason) => {
                    if !cfg.skip_infeasible {
                        return Err(TrainError::Infeasible { id: e.id.clone(), reason });
                    }
                    skipped += 1;
                }
                Ok(None) => nonfinite += 1,
                Ok(Some((v, mut grads))) => {
                    if !grads.global_norm().is_finite() {
                        nonfinite += 1;
                        continue;
                    }
                    clip_gradients(&mut grads, cfg.clip_norm);
                    adam.step(&mut parser.params, &grads, cfg);
                    total += v;
                    counted += 1;
                }
            }
        }
        let attempted = counted + nonfinite;
        if attempted > 0 && nonfinite as f64 > cfg.max_nonfinite_fraction * attempted as f64 {
            return Err(TrainError::NonFinite { epoch, nonfinite, attempted });
        }
        let dev_acc = if has_dev { split_accuracy(parser, corpus, Split::Dev, parser.config.beam, cfg.eval_workers) } else { 0.0 };
        let m = EpochMetrics { epoch, loss: if counted > 0 { total / counted as f64 } else { 0.0 }, dev_acc, skipped, nonfinite };
        log::info!("epoch {epoch}: loss {:.4} dev {:.4} skipped {skipped} nonfinite {nonfinite}", m.loss, dev_acc);
        if let Some(f) = metrics_file.as_mut() {
            writeln!(f, "{}", m.line())?;
        }
        report.epochs.push(m);
        if dev_acc > report.best_dev_acc {
            report.best_dev_acc = dev_acc;
            report.best_epoch = epoch;
            best = Some(parser.params.clone());
            stale = 0;
            if let Some(p) = &cfg.checkpoint {
                parser.params.save(p)?;
            }
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                log::info!("no dev improvement for {stale} epochs, stopping");
                break;
            }
        }
    }
    if let Some(b) = best {
        parser.params = b;
    }
    if report.epochs.is_empty() {
        report.best_dev_acc = 0.0;
    }
    Ok(report)
}

/// Reverse-mode vs central differences of [`example_loss`] on `n` sampled
/// coordinates of the parameters the loss reaches. Dropout is off.
pub fn grad_check(parser: &Parser, example: &Example, table: &Table, set: &ConsistentSet, n: usize, seed: u64) -> Result<GradCheckReport, Skip> {
    let touched: Vec<crate::model::ParamId> = {
        let g = Graph::new(&parser.params);
        let loss = example_loss(parser, &g, example, table, set, &Dropout::off())?;
        let grads = g.backward(loss);
        (0..parser.params.len()).filter(|i| grads.touched[*i]).map(crate::model::ParamId).collect()
    };
    let coords = sample_coordinates(&parser.params, &touched, n, &mut SplitMix64::new(seed));
    Ok(check_gradients(&parser.params, &coords, DEFAULT_STEP, |g| {
        example_loss(parser, g, example, table, set, &Dropout::off()).expect("loss was computable")
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{example, medal_table};
    use crate::grammar::program_text::parse;
    use crate::model::{ModelConfig, Vocab};
    use crate::table::CellValue;

    const GOLD: &str = "select(filter(all_rows, eq(col:nation, s:\"turkey\")), col:silver)";
    const SPURIOUS: &str = "select(argmin(all_rows, col:silver), col:silver)";

    fn setup(mode: AttentionMode) -> (Table, Example, Parser) {
        let t = medal_table();
        let e = example("0", "how many silver medals did turkey get", &t, vec![CellValue::Number(0.0)], &[GOLD]);
        let vocab = Vocab::from_words(e.question.tokens.iter().map(|t| t.text.as_str()).chain(["nation", "gold"]));
        let p = Parser::new(ModelConfig { attention_mode: mode, ..ModelConfig::micro() }, vocab, Vocab::from_words([]));
        (t, e, p)
    }

    fn set_of(texts: &[&str], t: &Table) -> ConsistentSet {
        let ps: Vec<_> = texts.iter().map(|s| parse(s, t).unwrap()).collect();
        ConsistentSet::from_programs("0", &ps, t, true)
    }

    /// Direct sum over programs of p(h) Π p(slot -> candidate).
    fn direct_probability(p: &Parser, e: &Example, t: &Table, set: &ConsistentSet) -> f64 {
        let g = Graph::new(&p.params);
        let ctx = p.context(&g, &e.question, t, &Dropout::off());
        let mut total = 0.0;
        for (h, a) in set.pairs() {
            let sc = p.program_scores(&g, &ctx, h, &Dropout::off()).unwrap();
            let mut prob = sc.log_p_h.scalar().exp();
            for (k, c) in a.iter().enumerate() {
                let i = sc.slots[k].0.iter().position(|x| x == c).unwrap();
                prob *= sc.slots[k].1.value()[i].exp();
            }
            total += prob;
        }
        total
    }

    #[test]
    fn loss_is_the_negative_log_marginal() {
        for mode in [AttentionMode::Structured, AttentionMode::Standard] {
            let (t, e, p) = setup(mode);
            let one = set_of(&[GOLD], &t);
            let two = set_of(&[GOLD, SPURIOUS], &t);
            let g = Graph::new(&p.params);
            let l1 = example_loss(&p, &g, &e, &t, &one, &Dropout::off()).unwrap().scalar();
            let l2 = example_loss(&p, &g, &e, &t, &two, &Dropout::off()).unwrap().scalar();
            assert!(l1 >= 0.0 && l2 >= 0.0);
            assert!(l2 <= l1);
            let direct = direct_probability(&p, &e, &t, &two);
            assert!(((-l2).exp() - direct).abs() < 1e-6, "{} vs {direct}", (-l2).exp());
            assert!(direct <= 1.0);
        }
    }

    #[test]
    fn empty_set_is_a_skip() {
        let (t, e, p) = setup(AttentionMode::Structured);
        let g = Graph::new(&p.params);
        let empty = ConsistentSet::from_programs("0", &[], &t, true);
        assert!(matches!(example_loss(&p, &g, &e, &t, &empty, &Dropout::off()), Err(Skip::EmptyConsistent)));
    }

    #[test]
    fn gradient_check_on_micro_model() {
        for mode in [AttentionMode::Structured, AttentionMode::Standard] {
            let (t, e, p) = setup(mode);
            let two = set_of(&[GOLD, SPURIOUS], &t);
            let a = grad_check(&p, &e, &t, &two, 64, 1).unwrap();
            let b = grad_check(&p, &e, &t, &two, 64, 2).unwrap();
            assert_eq!(a.checked, 64);
            assert!(a.max_rel_error < 1e-4 && b.max_rel_error < 1e-4, "{a:?} {b:?}");
        }
    }

    #[test]
    fn zero_coordinates_give_an_empty_report() {
        let (t, e, p) = setup(AttentionMode::Structured);
        let two = set_of(&[GOLD, SPURIOUS], &t);
        let r = grad_check(&p, &e, &t, &two, 0, 1).unwrap();
        assert_eq!(r.checked, 0);
        assert!(r.worst.is_none());
    }

    #[test]
    fn truncation_keeps_shortest() {
        let t = medal_table();
        let long = "select(previous(argmax(all_rows, col:silver)), col:silver)";
        let set = set_of(&[long, GOLD, SPURIOUS], &t);
        let cut = truncate_consistent(&set, 2);
        assert_eq!(cut.total_count, 2);
        let texts = cut.texts(&t);
        assert_eq!(texts.len(), 2);
        assert!(!texts.contains(&long.to_string()));
        assert_eq!(truncate_consistent(&set, 5), set);
    }

    fn tiny_corpus() -> (Corpus, HashMap<String, ConsistentSet>) {
        let t = medal_table();
        let mut corpus = Corpus::default();
        let mut e = example("0", "how many silver medals did turkey get", &t, vec![CellValue::Number(0.0)], &[GOLD]);
        e.split = Split::Train;
        let mut d = e.clone();
        d.id = "1".into();
        d.split = Split::Dev;
        corpus.tables.insert(t.id.clone(), t.clone());
        corpus.examples = vec![e, d];
        let mut sets = HashMap::new();
        sets.insert("0".to_string(), set_of(&[GOLD, SPURIOUS], &t));
        (corpus, sets)
    }

    #[test]
    fn zero_epochs_keep_parameters() {
        let (corpus, sets) = tiny_corpus();
        let (_, _, mut p) = setup(AttentionMode::Structured);
        let before = p.params.clone();
        let r = train(&mut p, &corpus, &sets, &TrainConfig { epochs: 0, ..TrainConfig::default() }).unwrap();
        assert!(r.epochs.is_empty());
        assert_eq!(p.params, before);
    }

    #[test]
    fn training_is_deterministic_and_lowers_loss() {
        let (corpus, sets) = tiny_corpus();
        let cfg = TrainConfig { epochs: 15, learning_rate: 0.01, patience: 0, ..TrainConfig::default() };
        let run = || {
            let (_, _, mut p) = setup(AttentionMode::Structured);
            let r = train(&mut p, &corpus, &sets, &cfg).unwrap();
            r.epochs.iter().map(|m| m.loss).collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.last().unwrap() < &a[0], "{a:?}");
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { clip_norm: -1.0, ..TrainConfig::default() }.validate().is_err());
        let d = TrainConfig::default();
        assert_eq!((d.learning_rate, d.beta1, d.beta2, d.epsilon, d.clip_norm), (1e-3, 0.9, 0.999, 1e-8, 5.0));
        assert_eq!((d.max_programs, d.patience), (200, 10));
    }
}
