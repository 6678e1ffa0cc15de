//! Inference, denotation accuracy, gold-program posteriors and an
//! automatic error breakdown.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::executor::{execute, typecheck, Program};
use crate::grammar::{instantiate, AbstractProgram};
use crate::model::tape::{log_sum_exp, Graph};
use crate::model::{Dropout, Parser};
use crate::search::ConsistentSet;
use crate::table::{denotation_equal, Corpus, Denotation, Example, Split, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FailureKind {
    /// The beam produced no complete abstract program.
    NoAbstractProgram,
    /// Some slot had no candidate, or alignment was infeasible, for every parent.
    NoInstantiation,
    /// Every tried program failed to execute.
    ExecutionFailed,
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub program: Option<Program>,
    pub denotation: Option<Denotation>,
    pub abstract_parent: Option<AbstractProgram>,
    /// `log p(h) + log p(z | h)` of the returned program.
    pub log_score: f64,
    pub failure: Option<FailureKind>,
    /// Abstract programs from the beam, best first.
    pub beam: Vec<AbstractProgram>,
}

/// Best instantiation of each beam parent, ranked by joint score.
pub fn ranked_programs(parser: &Parser, example: &Example, table: &Table, k: usize) -> (Vec<AbstractProgram>, Vec<(AbstractProgram, Program, f64)>) {
    let g = Graph::new(&parser.params);
    let drop = Dropout::off();
    let ctx = parser.context(&g, &example.question, table, &drop);
    let beam = parser.beam_search(&g, &ctx.enc, &ctx.rules, k);
    let mut ranked = Vec::new();
    for (h, lp_h) in &beam {
        let Ok(scores) = parser.program_scores(&g, &ctx, h, &drop) else { continue };
        let mut total = *lp_h;
        let mut assignment = Vec::with_capacity(scores.slots.len());
        for (cands, lp) in &scores.slots {
            let v = lp.value();
            let best = (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
            total += v[best];
            assignment.push(cands[best].clone());
        }
        if let Ok(z) = instantiate(h, &assignment, table) {
            ranked.push((h.clone(), z, total));
        }
    }
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2));
    (beam.into_iter().map(|b| b.0).collect(), ranked)
}

/// Approximate argmax over programs: the best-scoring executable program among the top
/// `k` abstract programs, each instantiated by per-slot argmax.
pub fn predict(parser: &Parser, example: &Example, table: &Table, k: usize) -> Prediction {
    let (beam, ranked) = ranked_programs(parser, example, table, k);
    let mut out = Prediction {
        program: None,
        denotation: None,
        abstract_parent: None,
        log_score: f64::NEG_INFINITY,
        failure: None,
        beam,
    };
    if out.beam.is_empty() {
        out.failure = Some(FailureKind::NoAbstractProgram);
        return out;
    }
    if ranked.is_empty() {
        out.failure = Some(FailureKind::NoInstantiation);
        return out;
    }
    for (h, z, score) in ranked.into_iter().take(k) {
        if !typecheck(&z, table).ok {
            continue;
        }
        if let Ok(d) = execute(&z, table) {
            out.program = Some(z);
            out.denotation = Some(d);
            out.abstract_parent = Some(h);
            out.log_score = score;
            return out;
        }
    }
    out.failure = Some(FailureKind::ExecutionFailed);
    out
}

pub fn is_correct(p: &Prediction, example: &Example) -> bool {
    p.denotation.as_ref().is_some_and(|d| denotation_equal(d, &example.denotation))
}

/// Predictions for every example of `split`, in corpus order.
pub fn predict_split(parser: &Parser, corpus: &Corpus, split: Split, k: usize, workers: usize) -> Vec<(usize, Prediction)> {
    let idx: Vec<usize> = corpus.examples.iter().enumerate().filter(|(_, e)| e.split == split).map(|(i, _)| i).collect();
    let run = |i: &usize| {
        let e = &corpus.examples[*i];
        (*i, predict(parser, e, corpus.table_of(e), k))
    };
    if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool");
        pool.install(|| idx.par_iter().map(run).collect())
    } else {
        idx.iter().map(run).collect()
    }
}

/// Fraction of examples whose predicted denotation equals gold; 0 for an
/// empty split.
pub fn accuracy(corpus: &Corpus, predictions: &[(usize, Prediction)]) -> f64 {
    if predictions.is_empty() {
        log::warn!("accuracy over an empty split is reported as 0");
        return 0.0;
    }
    let right = predictions.iter().filter(|(i, p)| is_correct(p, &corpus.examples[*i])).count();
    right as f64 / predictions.len() as f64
}

pub fn split_accuracy(parser: &Parser, corpus: &Corpus, split: Split, k: usize, workers: usize) -> f64 {
    accuracy(corpus, &predict_split(parser, corpus, split, k, workers))
}

#[derive(Clone, Debug, PartialEq)]
pub enum PosteriorError {
    NoGold,
    /// A gold program is missing from the consistent set (or cannot be scored).
    GoldNotConsistent,
}

/// `log p(h) + log p(a | h)` of every consistent program, text-keyed.
/// Parents the model cannot score (infeasible alignment) are left out.
pub fn consistent_joint_scores(parser: &Parser, example: &Example, table: &Table, set: &ConsistentSet) -> Vec<(String, f64)> {
    let g = Graph::new(&parser.params);
    let drop = Dropout::off();
    let ctx = parser.context(&g, &example.question, table, &drop);
    let mut out = Vec::new();
    for entry in &set.entries {
        let Ok(scores) = parser.program_scores(&g, &ctx, &entry.abstract_program, &drop) else { continue };
        let lp_h = scores.log_p_h.scalar();
        let dists: Vec<Vec<f64>> = scores.slots.iter().map(|(_, lp)| lp.value()).collect();
        for a in &entry.assignments {
            let mut total = lp_h;
            for (k, cand) in a.iter().enumerate() {
                match scores.slots[k].0.iter().position(|c| c == cand) {
                    Some(i) => total += dists[k][i],
                    None => total = f64::NEG_INFINITY,
                }
            }
            if let Ok(z) = instantiate(&entry.abstract_program, a, table) {
                out.push((z.text(table), total));
            }
        }
    }
    out
}

/// `log Σ_{z*} p(z* | x, t, d)`: the gold programs' share of the modeled
/// mass of the consistent set.
pub fn gold_posterior(parser: &Parser, example: &Example, table: &Table, set: &ConsistentSet) -> Result<f64, PosteriorError> {
    if example.gold_programs.is_empty() {
        return Err(PosteriorError::NoGold);
    }
    let scores = consistent_joint_scores(parser, example, table, set);
    let gold: Vec<String> = example.gold_programs.iter().map(|z| z.text(table)).collect();
    posterior_from_scores(&scores, &gold)
}

/// Log share of `gold` programs in a text-keyed score list.
pub fn posterior_from_scores(scores: &[(String, f64)], gold: &[String]) -> Result<f64, PosteriorError> {
    let by_text: HashMap<&str, f64> = scores.iter().map(|(t, s)| (t.as_str(), *s)).collect();
    let mut mass = Vec::new();
    for z in gold {
        match by_text.get(z.as_str()) {
            Some(s) => mass.push(*s),
            None => return Err(PosteriorError::GoldNotConsistent),
        }
    }
    let all: Vec<f64> = scores.iter().map(|s| s.1).collect();
    Ok((log_sum_exp(&mass) - log_sum_exp(&all)).min(0.0))
}

/// Mean gold posterior over the examples of `split` that have one.
pub fn mean_gold_posterior(parser: &Parser, corpus: &Corpus, split: Split, sets: &HashMap<String, ConsistentSet>, workers: usize) -> Option<f64> {
    let exs: Vec<&Example> = corpus.split(split).collect();
    let run = |e: &&Example| sets.get(&e.id).and_then(|s| gold_posterior(parser, e, corpus.table_of(e), s).ok());
    let vals: Vec<Option<f64>> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool");
        pool.install(|| exs.par_iter().map(run).collect())
    } else {
        exs.iter().map(run).collect()
    };
    let vals: Vec<f64> = vals.into_iter().flatten().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ErrorBreakdown {
    pub abstraction: usize,
    pub instantiation: usize,
    pub coverage: usize,
}

impl ErrorBreakdown {
    pub fn total(&self) -> usize {
        self.abstraction + self.instantiation + self.coverage
    }
}

/// Wrong predictions by cause: no consistent program (coverage), no beam
/// parent among the consistent parents (abstraction), else instantiation.
pub fn error_breakdown(corpus: &Corpus, predictions: &[(usize, Prediction)], sets: &HashMap<String, ConsistentSet>) -> ErrorBreakdown {
    let mut out = ErrorBreakdown::default();
    for (i, p) in predictions {
        let e = &corpus.examples[*i];
        if is_correct(p, e) {
            continue;
        }
        match sets.get(&e.id) {
            None => out.coverage += 1,
            Some(s) if s.is_empty() => out.coverage += 1,
            Some(s) => {
                let hit = p.beam.iter().any(|h| s.entries.iter().any(|en| en.abstract_program == *h));
                if hit {
                    out.instantiation += 1;
                } else {
                    out.abstraction += 1;
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub accuracy: f64,
    pub breakdown: ErrorBreakdown,
    pub mean_gold_posterior: Option<f64>,
    pub n: usize,
}

impl EvalReport {
    /// `accuracy abstraction instantiation coverage mean_gold_posterior`, tab-separated.
    pub fn line(&self) -> String {
        let post = self.mean_gold_posterior.map_or("nan".to_string(), |p| format!("{p:.4}"));
        format!(
            "{:.4}\t{}\t{}\t{}\t{}",
            self.accuracy, self.breakdown.abstraction, self.breakdown.instantiation, self.breakdown.coverage, post
        )
    }
}

pub fn evaluate(parser: &Parser, corpus: &Corpus, split: Split, sets: &HashMap<String, ConsistentSet>, workers: usize) -> EvalReport {
    let preds = predict_split(parser, corpus, split, parser.config.beam, workers);
    EvalReport {
        accuracy: accuracy(corpus, &preds),
        breakdown: error_breakdown(corpus, &preds, sets),
        mean_gold_posterior: mean_gold_posterior(parser, corpus, split, sets, workers),
        n: preds.len(),
    }
}

pub fn sets_by_id(sets: &[ConsistentSet]) -> HashMap<String, ConsistentSet> {
    sets.iter().map(|s| (s.example_id.clone(), s.clone())).collect()
}
