//! Span-to-slot alignments and their exact marginals.
//!
//! An alignment gives every slot one feasible span, with no two spans
//! overlapping. With `p(A) ∝ Π_k exp(M[k, span_k])`, the partition function
//! and marginals come from a forward-backward pass over the lattice with
//! vertices `(i, U)`: position `i` in `0..=n` and the set `U` of slots
//! already covered. Edges either skip token `i`, `(i,U) -> (i+1,U)` with
//! weight 0, or place slot `k ∉ U` on `(i,j)`,
//! `(i,U) -> (j+1, U ∪ {k})` with weight `M[k,i,j]`. Slots can align in
//! any textual order.

use crate::error::LatticeError;
use crate::grammar::{Slot, SlotKind};
use crate::model::tape::{log_sum_exp, Var};
use crate::table::{Question, Span};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatticeConfig {
    pub max_row_span: usize,
    pub max_slots: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { max_row_span: 6, max_slots: 8 }
    }
}

/// Feasible spans per slot over a question of `n` tokens (sentinel included).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeasibleSpans {
    pub n: usize,
    pub spans: Vec<Vec<Span>>,
}

impl FeasibleSpans {
    pub fn n_slots(&self) -> usize {
        self.spans.len()
    }

    pub fn total(&self) -> usize {
        self.spans.iter().map(Vec::len).sum()
    }
}

/// Row slots: spans of at most `max_row_span` tokens containing an entity
/// token and not the sentinel, plus the sentinel alone. Column slots:
/// every non-sentinel token alone.
pub fn feasible_spans(slots: &[Slot], question: &Question, cfg: &LatticeConfig) -> Result<FeasibleSpans, LatticeError> {
    if slots.len() > cfg.max_slots {
        return Err(LatticeError::TooManySlots(slots.len(), cfg.max_slots));
    }
    let n = question.n();
    let sentinel = n - 1;
    let mut entity_tok = vec![false; n];
    for e in &question.entities {
        for i in e.span.start..=e.span.end.min(sentinel.saturating_sub(1)) {
            entity_tok[i] = true;
        }
    }
    let mut out = Vec::with_capacity(slots.len());
    for (k, s) in slots.iter().enumerate() {
        let spans: Vec<Span> = match s.kind {
            SlotKind::Column => (0..sentinel).map(|i| Span::new(i, i)).collect(),
            SlotKind::Row => {
                let mut v = Vec::new();
                for i in 0..sentinel {
                    for j in i..sentinel.min(i + cfg.max_row_span) {
                        if (i..=j).any(|t| entity_tok[t]) {
                            v.push(Span::new(i, j));
                        }
                    }
                }
                v.push(Span::new(sentinel, sentinel));
                v
            }
        };
        if spans.is_empty() {
            return Err(LatticeError::InfeasibleSlot(k));
        }
        out.push(spans);
    }
    Ok(FeasibleSpans { n, spans: out })
}

/// Log-space semiring values: plain floats or tape nodes.
pub trait LogWeight: Clone {
    fn plus(&self, o: &Self) -> Self;
    fn minus(&self, o: &Self) -> Self;
    fn exp(&self) -> Self;
    /// Log-sum-exp over a non-empty list.
    fn log_sum_exp(items: &[Self]) -> Self;
    fn value(&self) -> f64;
    /// A constant of the same kind as `self`.
    fn constant_like(&self, x: f64) -> Self;
}

impl LogWeight for f64 {
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn log_sum_exp(items: &[Self]) -> Self {
        log_sum_exp(items)
    }
    fn value(&self) -> f64 {
        *self
    }
    fn constant_like(&self, x: f64) -> Self {
        x
    }
}

impl<'g> LogWeight for Var<'g> {
    fn plus(&self, o: &Self) -> Self {
        self.add(*o)
    }
    fn minus(&self, o: &Self) -> Self {
        self.sub(*o)
    }
    fn exp(&self) -> Self {
        Var::exp(*self)
    }
    fn log_sum_exp(items: &[Self]) -> Self {
        items[0].graph().logsumexp_of(items)
    }
    fn value(&self) -> f64 {
        self.scalar()
    }
    fn constant_like(&self, x: f64) -> Self {
        self.graph().scalar(x)
    }
}

/// Marginals `E[k][s]`, parallel to `FeasibleSpans::spans[k][s]`.
#[derive(Clone, Debug)]
pub struct Marginals<W> {
    pub e: Vec<Vec<W>>,
    pub log_z: W,
    /// `log Z` recomputed by the backward pass.
    pub log_z_backward: W,
    /// Edge relaxations performed, for complexity checks.
    pub ops: usize,
}

pub type AlignmentMarginals = Marginals<f64>;

impl Marginals<f64> {
    /// Dense lookup; zero for infeasible entries.
    pub fn at(&self, f: &FeasibleSpans, k: usize, i: usize, j: usize) -> f64 {
        f.spans[k].iter().position(|s| s.start == i && s.end == j).map_or(0.0, |p| self.e[k][p])
    }
}

impl<W: LogWeight> Marginals<W> {
    pub fn values(&self) -> Marginals<f64> {
        Marginals {
            e: self.e.iter().map(|r| r.iter().map(W::value).collect()).collect(),
            log_z: self.log_z.value(),
            log_z_backward: self.log_z_backward.value(),
            ops: self.ops,
        }
    }
}

fn push<W: Clone>(slot: &mut Option<Vec<W>>, w: W) {
    slot.get_or_insert_with(Vec::new).push(w);
}

/// Exact marginals by forward-backward. `m[k][s]` scores span `s` of slot `k`.
pub fn forward_backward<W: LogWeight>(m: &[Vec<W>], f: &FeasibleSpans) -> Result<Marginals<W>, LatticeError> {
    let n = f.n;
    let ns = f.n_slots();
    let states = 1usize << ns;
    let full = states - 1;
    let at = |i: usize, u: usize| i * states + u;
    // spans starting at each position, per slot: (slot, span index, end)
    let mut starts: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); n];
    for (k, spans) in f.spans.iter().enumerate() {
        for (s, sp) in spans.iter().enumerate() {
            starts[sp.start].push((k, s, sp.end));
        }
    }
    let mut ops = 0usize;

    // forward: incoming lists resolved in position order
    let mut incoming: Vec<Option<Vec<W>>> = vec![None; (n + 1) * states];
    let mut alpha: Vec<Option<W>> = vec![None; (n + 1) * states];
    for i in 0..=n {
        for u in 0..states {
            let a = if i == 0 && u == 0 {
                match m.iter().flatten().next() {
                    Some(w) => Some(w.constant_like(0.0)),
                    None => return Err(LatticeError::NoCompleteAlignment),
                }
            } else {
                incoming[at(i, u)].take().map(|v| W::log_sum_exp(&v))
            };
            let Some(a) = a else { continue };
            if i < n {
                push(&mut incoming[at(i + 1, u)], a.clone());
                ops += 1;
                for &(k, s, j) in &starts[i] {
                    if u & (1 << k) == 0 {
                        push(&mut incoming[at(j + 1, u | (1 << k))], a.plus(&m[k][s]));
                        ops += 1;
                    }
                }
            }
            alpha[at(i, u)] = Some(a);
        }
    }
    let log_z = alpha[at(n, full)].clone().ok_or(LatticeError::NoCompleteAlignment)?;

    // backward
    let mut beta: Vec<Option<W>> = vec![None; (n + 1) * states];
    beta[at(n, full)] = Some(log_z.constant_like(0.0));
    for i in (0..n).rev() {
        for u in 0..states {
            if alpha[at(i, u)].is_none() {
                continue;
            }
            let mut out: Vec<W> = Vec::new();
            if let Some(b) = &beta[at(i + 1, u)] {
                out.push(b.clone());
            }
            for &(k, s, j) in &starts[i] {
                if u & (1 << k) == 0 {
                    if let Some(b) = &beta[at(j + 1, u | (1 << k))] {
                        out.push(m[k][s].plus(b));
                    }
                }
            }
            ops += 1 + starts[i].len();
            if !out.is_empty() {
                beta[at(i, u)] = Some(W::log_sum_exp(&out));
            }
        }
    }
    let log_z_backward = beta[at(0, 0)].clone().ok_or(LatticeError::NoCompleteAlignment)?;

    // edge marginals
    let mut e: Vec<Vec<Option<Vec<W>>>> = f.spans.iter().map(|s| vec![None; s.len()]).collect();
    for i in 0..n {
        for &(k, s, j) in &starts[i] {
            for u in 0..states {
                if u & (1 << k) != 0 {
                    continue;
                }
                if let (Some(a), Some(b)) = (&alpha[at(i, u)], &beta[at(j + 1, u | (1 << k))]) {
                    push(&mut e[k][s], a.plus(&m[k][s]).plus(b));
                }
            }
        }
    }
    let e = e
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|terms| match terms {
                    Some(t) => W::log_sum_exp(&t).minus(&log_z).exp(),
                    None => log_z.constant_like(0.0),
                })
                .collect()
        })
        .collect();
    Ok(Marginals { e, log_z, log_z_backward, ops })
}

/// Enumerates every alignment; for testing the dynamic program.
pub fn brute_force_marginals(m: &[Vec<f64>], f: &FeasibleSpans) -> Result<AlignmentMarginals, LatticeError> {
    const LIMIT: usize = 1_000_000;
    let product = f.spans.iter().try_fold(1usize, |acc, s| acc.checked_mul(s.len()).filter(|p| *p <= LIMIT));
    if product.is_none() {
        return Err(LatticeError::CombinatorialBlowup(LIMIT));
    }
    let ns = f.n_slots();
    let mut scores: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut choice = vec![0usize; ns];
    fn go(k: usize, f: &FeasibleSpans, m: &[Vec<f64>], choice: &mut Vec<usize>, acc: f64, out: &mut Vec<(Vec<usize>, f64)>) {
        if k == f.n_slots() {
            out.push((choice.clone(), acc));
            return;
        }
        for (s, sp) in f.spans[k].iter().enumerate() {
            if (0..k).any(|q| f.spans[q][choice[q]].overlaps(sp)) {
                continue;
            }
            choice[k] = s;
            go(k + 1, f, m, choice, acc + m[k][s], out);
        }
    }
    go(0, f, m, &mut choice, 0.0, &mut scores);
    if scores.is_empty() {
        return Err(LatticeError::NoCompleteAlignment);
    }
    let all: Vec<f64> = scores.iter().map(|s| s.1).collect();
    let log_z = log_sum_exp(&all);
    let mut e: Vec<Vec<f64>> = f.spans.iter().map(|s| vec![0.0; s.len()]).collect();
    for (c, sc) in &scores {
        let p = (sc - log_z).exp();
        for (k, s) in c.iter().enumerate() {
            e[k][*s] += p;
        }
    }
    Ok(Marginals { e, log_z, log_z_backward: log_z, ops: scores.len() })
}

/// `s_k = Σ_s E[k][s] · rep_s`.
pub fn marginal_span_pool(e: &[f64], reps: &[Vec<f64>]) -> Vec<f64> {
    let dim = reps.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dim];
    for (w, r) in e.iter().zip(reps) {
        for (o, x) in out.iter_mut().zip(r) {
            *o += w * x;
        }
    }
    out
}
