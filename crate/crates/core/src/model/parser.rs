//! The two-stage parser: question encoder, grammar-constrained abstract
//! decoder, abstract-program encoder, alignment scorer and the slot
//! classifiers.
//!
//! Every method builds nodes on a caller-owned [`Graph`], reading weights
//! from the graph's store, so a perturbed copy of the store can be
//! evaluated with the same parser.

use std::cell::{OnceCell, RefCell};
use std::collections::HashMap;

use crate::entities::column_indicator;
use crate::error::ModelError;
use crate::grammar::{
    slot_candidates, AbstractProgram, Candidate, Connective, Operator, PartialDerivation, RuleId, RuleSet, Slot,
    SlotKind, N_RULES,
};
use crate::lattice::{feasible_spans, forward_backward};
use crate::rng::SplitMix64;
use crate::table::{Question, Table};

use super::config::{AttentionMode, ModelConfig};
use super::lstm::{BiLstm, Lstm, INIT_SCALE};
use super::params::{Init, ParamId, ParameterStore};
use super::tape::{Graph, Var};
use super::vocab::Vocab;

/// Dropout noise source; `off()` for inference.
pub struct Dropout {
    rng: Option<RefCell<SplitMix64>>,
}

impl Dropout {
    pub fn off() -> Self {
        Self { rng: None }
    }

    pub fn on(seed: u64) -> Self {
        Self { rng: Some(RefCell::new(SplitMix64::new(seed))) }
    }

    pub fn is_on(&self) -> bool {
        self.rng.is_some()
    }

    /// Inverted dropout with drop probability `p`.
    pub fn apply<'g>(&self, x: Var<'g>, p: f64) -> Var<'g> {
        let Some(rng) = &self.rng else { return x };
        if p <= 0.0 {
            return x;
        }
        let mut rng = rng.borrow_mut();
        let keep = 1.0 / (1.0 - p);
        let m = (0..x.len()).map(|_| if rng.bernoulli(p) { 0.0 } else { keep }).collect();
        x.mask(m)
    }
}

/// One-hidden-layer ReLU perceptron.
#[derive(Clone, Copy, Debug)]
struct Mlp {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl Mlp {
    fn new(store: &mut ParameterStore, name: &str, input: usize, hidden: usize, out: usize, rng: &mut SplitMix64) -> Self {
        Self {
            w1: store.add(&format!("{name}.w1"), hidden, input, Init::Uniform(INIT_SCALE), rng),
            b1: store.add(&format!("{name}.b1"), hidden, 1, Init::Zeros, rng),
            w2: store.add(&format!("{name}.w2"), out, hidden, Init::Uniform(INIT_SCALE), rng),
            b2: store.add(&format!("{name}.b2"), out, 1, Init::Zeros, rng),
        }
    }

    fn forward<'g>(&self, g: &'g Graph<'g>, x: Var<'g>, drop: &Dropout, p: f64) -> Var<'g> {
        let h = drop.apply(g.affine(self.w1, Some(self.b1), x).relu(), p);
        g.affine(self.w2, Some(self.b2), h)
    }
}

/// A scalar-output MLP over `[a; b]` whose first layer is stored as two
/// blocks, so each half can be projected once and reused.
#[derive(Clone, Copy, Debug)]
struct PairMlp {
    wa: ParamId,
    wb: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl PairMlp {
    fn new(store: &mut ParameterStore, name: &str, a: usize, b: usize, hidden: usize, rng: &mut SplitMix64) -> Self {
        Self {
            wa: store.add(&format!("{name}.w1a"), hidden, a, Init::Uniform(INIT_SCALE), rng),
            wb: store.add(&format!("{name}.w1b"), hidden, b, Init::Uniform(INIT_SCALE), rng),
            b1: store.add(&format!("{name}.b1"), hidden, 1, Init::Zeros, rng),
            w2: store.add(&format!("{name}.w2"), 1, hidden, Init::Uniform(INIT_SCALE), rng),
            b2: store.add(&format!("{name}.b2"), 1, 1, Init::Zeros, rng),
        }
    }

    fn project_a<'g>(&self, g: &'g Graph<'g>, a: Var<'g>) -> Var<'g> {
        g.affine(self.wa, Some(self.b1), a)
    }

    fn project_b<'g>(&self, g: &'g Graph<'g>, b: Var<'g>) -> Var<'g> {
        g.affine(self.wb, None, b)
    }

    /// Score from two projected halves.
    fn score<'g>(&self, g: &'g Graph<'g>, pa: Var<'g>, pb: Var<'g>, drop: &Dropout, p: f64) -> Var<'g> {
        let h = drop.apply(pa.add(pb).relu(), p);
        g.affine(self.w2, Some(self.b2), h)
    }
}

#[derive(Clone, Debug)]
struct Ids {
    word: ParamId,
    proj: ParamId,
    in_table: ParamId,
    pos: Option<ParamId>,
    coltype: ParamId,
    colind: ParamId,
    op: ParamId,
    connective: ParamId,
    all_row_span: ParamId,
    all_rows: ParamId,
    rule: ParamId,
    start: ParamId,
    enc: BiLstm,
    dec_init_w: ParamId,
    dec_init_b: ParamId,
    dec: Lstm,
    dec_att: ParamId,
    mlp1: Mlp,
    ap: BiLstm,
    mlp2: PairMlp,
    satt: ParamId,
    mlp_row: PairMlp,
    mlp_col: PairMlp,
}

/// Parameters plus the vocabularies they are indexed by.
#[derive(Clone, Debug)]
pub struct Parser {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub pos_vocab: Vocab,
    pub params: ParameterStore,
    ids: Ids,
}

/// Contextual token representations, sentinel last.
pub struct EncodedQuestion<'g> {
    pub l: Vec<Var<'g>>,
    fwd_last: Var<'g>,
    bwd_first: Var<'g>,
    all_row_span: Var<'g>,
}

impl<'g> EncodedQuestion<'g> {
    pub fn n(&self) -> usize {
        self.l.len()
    }

    /// Mean of `l_i..=l_j`; the sentinel span is the learned ALL_ROW vector.
    pub fn span_rep(&self, g: &'g Graph<'g>, i: usize, j: usize) -> Var<'g> {
        if i == self.n() - 1 {
            return self.all_row_span;
        }
        if i == j {
            return self.l[i];
        }
        g.mean(&self.l[i..=j])
    }
}

#[derive(Clone, Copy)]
pub struct DecoderState<'g> {
    pub h: Var<'g>,
    pub c: Var<'g>,
}

/// One decoder step.
pub struct DecoderStep<'g> {
    pub state: DecoderState<'g>,
    /// Attention context `b_j`.
    pub context: Var<'g>,
    /// Raw scores over the whole rule inventory.
    pub scores: Var<'g>,
    pub valid: Vec<RuleId>,
    /// Log-probabilities parallel to `valid`.
    pub log_probs: Var<'g>,
}

/// Per-example state shared across abstract programs.
pub struct ExampleContext<'g, 'a> {
    pub question: &'a Question,
    pub table: &'a Table,
    pub rules: RuleSet,
    pub enc: EncodedQuestion<'g>,
    pub columns: Vec<Var<'g>>,
    col_proj: OnceCell<Vec<Var<'g>>>,
    rows: OnceCell<(Vec<Candidate>, Vec<Var<'g>>)>,
    span_proj: RefCell<HashMap<(usize, usize), Var<'g>>>,
}

impl<'g, 'a> ExampleContext<'g, 'a> {
    pub fn row_candidates(&self) -> Option<&[Candidate]> {
        self.rows.get().map(|r| r.0.as_slice())
    }
}

/// Scores of one abstract program and its slot distributions.
pub struct ProgramScores<'g> {
    pub log_p_h: Var<'g>,
    /// Per slot: candidates and their log-probabilities.
    pub slots: Vec<(Vec<Candidate>, Var<'g>)>,
}

impl Parser {
    pub fn new(config: ModelConfig, vocab: Vocab, pos_vocab: Vocab) -> Self {
        config.validate().expect("invalid model config");
        let c = &config;
        let mut rng = SplitMix64::new(c.seed);
        let rng = &mut rng;
        let mut s = ParameterStore::new();
        let u = Init::Uniform(INIT_SCALE);
        let word = s.add("embed.word", vocab.len(), c.word_dim, u, rng);
        let proj = s.add("embed.proj", c.proj_dim, c.word_dim, u, rng);
        let in_table = s.add("embed.in_table", 2, c.feature_dim, u, rng);
        let pos = (c.pos_dim > 0).then(|| s.add("embed.pos", pos_vocab.len(), c.pos_dim, u, rng));
        let coltype = s.add("embed.coltype", 3, c.feature_dim, u, rng);
        let colind = s.add("embed.colind", 2, c.feature_dim, u, rng);
        let op = s.add("embed.op", Operator::ALL.len(), c.op_dim, u, rng);
        let connective = s.add("embed.connective", 3, c.condition_dim(), u, rng);
        let all_row_span = s.add("embed.all_row_span", 1, c.token_dim(), u, rng);
        let all_rows = s.add("embed.all_rows", 1, c.condition_dim(), u, rng);
        let rule = s.add("embed.rule", N_RULES, c.rule_dim, u, rng);
        let start = s.add("embed.start", 1, c.rule_dim, u, rng);
        let enc_in = c.proj_dim + c.feature_dim + c.pos_dim;
        let enc = BiLstm::new(&mut s, "enc", enc_in, c.enc_hidden, rng);
        let dec_init_w = s.add("dec.init.w", c.dec_hidden, 2 * c.enc_hidden, u, rng);
        let dec_init_b = s.add("dec.init.b", c.dec_hidden, 1, Init::Zeros, rng);
        let dec = Lstm::new(&mut s, "dec.lstm", c.rule_dim, c.dec_hidden, rng);
        let dec_att = s.add("dec.att.w", c.token_dim(), c.dec_hidden, u, rng);
        let mlp1 = Mlp::new(&mut s, "mlp1", c.dec_hidden + c.token_dim(), c.mlp_hidden, N_RULES, rng);
        let ap = BiLstm::new(&mut s, "ap", c.rule_dim, c.ap_hidden, rng);
        let mlp2 = PairMlp::new(&mut s, "mlp2", c.slot_dim(), c.token_dim(), c.mlp_hidden, rng);
        let satt = s.add("satt.w", c.token_dim(), c.slot_dim(), u, rng);
        let mlp_row = PairMlp::new(&mut s, "mlp_row", c.token_dim(), c.condition_dim(), c.mlp_hidden, rng);
        let mlp_col = PairMlp::new(&mut s, "mlp_col", c.token_dim(), c.column_dim(), c.mlp_hidden, rng);
        let ids = Ids {
            word, proj, in_table, pos, coltype, colind, op, connective, all_row_span, all_rows, rule, start, enc,
            dec_init_w, dec_init_b, dec, dec_att, mlp1, ap, mlp2, satt, mlp_row, mlp_col,
        };
        Self { config, vocab, pos_vocab, params: s, ids }
    }

    pub fn word_embeddings(&self) -> ParamId {
        self.ids.word
    }

    fn word<'g>(&self, g: &'g Graph<'g>, w: &str) -> Var<'g> {
        g.affine(self.ids.proj, None, g.param_row(self.ids.word, self.vocab.id(w)))
    }

    pub fn encode_question<'g>(&self, g: &'g Graph<'g>, q: &Question, drop: &Dropout) -> EncodedQuestion<'g> {
        let xs: Vec<Var<'g>> = q
            .tokens
            .iter()
            .map(|t| {
                let mut parts = vec![self.word(g, &t.text), g.param_row(self.ids.in_table, t.in_table as usize)];
                if let Some(pos) = self.ids.pos {
                    let id = t.pos.as_deref().map_or(0, |p| self.pos_vocab.id(p));
                    parts.push(g.param_row(pos, id));
                }
                drop.apply(g.concat(&parts), self.config.enc_dropout)
            })
            .collect();
        let out = self.ids.enc.run(g, &xs);
        EncodedQuestion {
            fwd_last: *out.fwd.last().expect("question has a sentinel"),
            bwd_first: out.bwd[0],
            l: out.states,
            all_row_span: g.param(self.ids.all_row_span),
        }
    }

    /// `[mean projected name embedding; type embedding; indicator embedding]`.
    pub fn encode_columns<'g>(&self, g: &'g Graph<'g>, table: &Table, q: &Question) -> Vec<Var<'g>> {
        let ind = column_indicator(table, q);
        table
            .columns
            .iter()
            .zip(ind)
            .map(|(col, flag)| {
                let words: Vec<Var<'g>> = col.name_tokens.iter().map(|w| self.word(g, w)).collect();
                let name = if words.len() == 1 { words[0] } else { g.mean(&words) };
                g.concat(&[name, g.param_row(self.ids.coltype, col.ctype.index()), g.param_row(self.ids.colind, flag as usize)])
            })
            .collect()
    }

    pub fn context<'g, 'a>(&self, g: &'g Graph<'g>, q: &'a Question, table: &'a Table, drop: &Dropout) -> ExampleContext<'g, 'a> {
        ExampleContext {
            question: q,
            table,
            rules: RuleSet::for_table(table),
            enc: self.encode_question(g, q, drop),
            columns: self.encode_columns(g, table, q),
            col_proj: OnceCell::new(),
            rows: OnceCell::new(),
            span_proj: RefCell::new(HashMap::new()),
        }
    }

    // ---- abstract decoder

    pub fn decoder_start<'g>(&self, g: &'g Graph<'g>, enc: &EncodedQuestion<'g>) -> DecoderState<'g> {
        let h = g.affine(self.ids.dec_init_w, Some(self.ids.dec_init_b), g.concat(&[enc.fwd_last, enc.bwd_first])).tanh();
        DecoderState { h, c: g.constant(vec![0.0; self.config.dec_hidden]) }
    }

    /// Advances the decoder with the previous rule (`None` at the start)
    /// and normalizes over the rules valid for `partial`.
    pub fn decoder_step<'g>(
        &self,
        g: &'g Graph<'g>,
        enc: &EncodedQuestion<'g>,
        state: DecoderState<'g>,
        prev: Option<RuleId>,
        partial: &PartialDerivation,
        rules: &RuleSet,
        drop: &Dropout,
    ) -> DecoderStep<'g> {
        let a = match prev {
            None => g.param(self.ids.start),
            Some(r) => g.param_row(self.ids.rule, r.0),
        };
        let (h, c) = self.ids.dec.step(g, a, state.h, state.c);
        let u = g.affine(self.ids.dec_att, None, h);
        let att: Vec<Var<'g>> = enc.l.iter().map(|l| l.dot(u)).collect();
        let alpha = g.stack(&att).log_softmax().exp();
        let context = g.weighted_sum(alpha, &enc.l);
        let scores = self.ids.mlp1.forward(g, g.concat(&[h, context]), drop, self.config.mlp_dropout);
        let valid = rules.valid_next_rules(partial);
        let idx: Vec<usize> = valid.iter().map(|r| r.0).collect();
        let log_probs = scores.gather(&idx).log_softmax();
        DecoderStep { state: DecoderState { h, c }, context, scores, valid, log_probs }
    }

    /// `log p(a_j | ...)` for each rule of `h`.
    pub fn abstract_step_log_probs<'g>(
        &self,
        g: &'g Graph<'g>,
        enc: &EncodedQuestion<'g>,
        rules: &RuleSet,
        h: &AbstractProgram,
        drop: &Dropout,
    ) -> Result<Vec<Var<'g>>, ModelError> {
        let mut state = self.decoder_start(g, enc);
        let mut partial = PartialDerivation::new();
        let mut prev = None;
        let mut out = Vec::with_capacity(h.rules.len());
        for (j, r) in h.rules.iter().enumerate() {
            let step = self.decoder_step(g, enc, state, prev, &partial, rules, drop);
            let pos = step.valid.iter().position(|v| v == r).ok_or(ModelError::Unrealizable(j))?;
            out.push(step.log_probs.index(pos));
            partial.push(*r).map_err(|_| ModelError::Unrealizable(j))?;
            state = step.state;
            prev = Some(*r);
        }
        if !partial.is_complete() {
            return Err(ModelError::Unrealizable(h.rules.len()));
        }
        Ok(out)
    }

    /// `log p(h | x, t)`.
    pub fn score_abstract<'g>(
        &self,
        g: &'g Graph<'g>,
        enc: &EncodedQuestion<'g>,
        rules: &RuleSet,
        h: &AbstractProgram,
        drop: &Dropout,
    ) -> Result<Var<'g>, ModelError> {
        let steps = self.abstract_step_log_probs(g, enc, rules, h, drop)?;
        Ok(g.stack(&steps).sum())
    }

    /// Top-`k` complete abstract programs, best first.
    pub fn beam_search<'g>(
        &self,
        g: &'g Graph<'g>,
        enc: &EncodedQuestion<'g>,
        rules: &RuleSet,
        k: usize,
    ) -> Vec<(AbstractProgram, f64)> {
        struct Beam<'g> {
            partial: PartialDerivation,
            state: DecoderState<'g>,
            score: f64,
        }
        let drop = Dropout::off();
        let mut live = vec![Beam { partial: PartialDerivation::new(), state: self.decoder_start(g, enc), score: 0.0 }];
        let mut done: Vec<(Vec<RuleId>, f64)> = Vec::new();
        for _ in 0..self.config.max_decode_len {
            if live.is_empty() {
                break;
            }
            let mut expansions: Vec<(usize, RuleId, f64, DecoderState<'g>)> = Vec::new();
            for (bi, b) in live.iter().enumerate() {
                let prev = b.partial.rules.last().copied();
                let step = self.decoder_step(g, enc, b.state, prev, &b.partial, rules, &drop);
                let lp = step.log_probs.value();
                for (r, l) in step.valid.iter().zip(lp) {
                    expansions.push((bi, *r, b.score + l, step.state));
                }
            }
            // Stable sort keeps (beam, rule) order among ties.
            expansions.sort_by(|a, b| b.2.total_cmp(&a.2));
            let mut next = Vec::new();
            for (bi, r, score, state) in expansions.into_iter().take(k) {
                let mut partial = live[bi].partial.clone();
                partial.push(r).expect("valid rule");
                if partial.is_complete() {
                    done.push((partial.rules, score));
                } else {
                    next.push(Beam { partial, state, score });
                }
            }
            live = next;
            done.sort_by(|a, b| b.1.total_cmp(&a.1));
            done.truncate(k);
            // Scores only fall as derivations grow.
            if done.len() == k && live.iter().all(|b| b.score <= done[k - 1].1) {
                break;
            }
        }
        done.into_iter()
            .map(|(rs, s)| (AbstractProgram::from_rules(&rs).expect("complete derivation"), s))
            .collect()
    }

    // ---- abstract-program encoder and slot pooling

    /// `r(k)` for each slot of `h`, in slot order.
    pub fn encode_abstract_program<'g>(&self, g: &'g Graph<'g>, h: &AbstractProgram, drop: &Dropout) -> Vec<Var<'g>> {
        let xs: Vec<Var<'g>> =
            h.rules.iter().map(|r| drop.apply(g.param_row(self.ids.rule, r.0), self.config.ap_dropout)).collect();
        let out = self.ids.ap.run(g, &xs);
        h.slots.iter().map(|s| out.states[s.position]).collect()
    }

    fn span_projection<'g>(&self, g: &'g Graph<'g>, ctx: &ExampleContext<'g, '_>, i: usize, j: usize) -> Var<'g> {
        if let Some(v) = ctx.span_proj.borrow().get(&(i, j)) {
            return *v;
        }
        let v = self.ids.mlp2.project_b(g, ctx.enc.span_rep(g, i, j));
        ctx.span_proj.borrow_mut().insert((i, j), v);
        v
    }

    /// `M[k][s] = MLP_2([r(k); span_s])` on feasible entries.
    pub fn score_alignments<'g>(
        &self,
        g: &'g Graph<'g>,
        ctx: &ExampleContext<'g, '_>,
        r: &[Var<'g>],
        spans: &crate::lattice::FeasibleSpans,
        drop: &Dropout,
    ) -> Vec<Vec<Var<'g>>> {
        r.iter()
            .zip(&spans.spans)
            .map(|(rk, ss)| {
                let pa = self.ids.mlp2.project_a(g, *rk);
                ss.iter()
                    .map(|s| {
                        let pb = self.span_projection(g, ctx, s.start, s.end);
                        self.ids.mlp2.score(g, pa, pb, drop, self.config.mlp_dropout)
                    })
                    .collect()
            })
            .collect()
    }

    /// Alignment marginals `E` and `log Z` of `h`, dropout off.
    pub fn alignment_marginals<'g>(
        &self,
        g: &'g Graph<'g>,
        ctx: &ExampleContext<'g, '_>,
        h: &AbstractProgram,
    ) -> Result<(crate::lattice::FeasibleSpans, crate::lattice::AlignmentMarginals), ModelError> {
        let drop = Dropout::off();
        let r = self.encode_abstract_program(g, h, &drop);
        let f = feasible_spans(&h.slots, ctx.question, &self.config.lattice)?;
        let m = self.score_alignments(g, ctx, &r, &f, &drop);
        let marg = forward_backward(&m, &f)?.values();
        Ok((f, marg))
    }

    /// Pooled representation `s_k` for every slot.
    pub fn slot_representations<'g>(
        &self,
        g: &'g Graph<'g>,
        ctx: &ExampleContext<'g, '_>,
        h: &AbstractProgram,
        r: &[Var<'g>],
        drop: &Dropout,
    ) -> Result<Vec<Var<'g>>, ModelError> {
        match self.config.attention_mode {
            AttentionMode::Structured => {
                let f = feasible_spans(&h.slots, ctx.question, &self.config.lattice)?;
                let m = self.score_alignments(g, ctx, r, &f, drop);
                let marg = forward_backward(&m, &f)?;
                Ok(marg
                    .e
                    .iter()
                    .zip(&f.spans)
                    .map(|(ek, ss)| {
                        let reps: Vec<Var<'g>> = ss.iter().map(|s| ctx.enc.span_rep(g, s.start, s.end)).collect();
                        g.weighted_sum(g.stack(ek), &reps)
                    })
                    .collect())
            }
            AttentionMode::Standard => Ok(r
                .iter()
                .map(|rk| {
                    let u = g.affine(self.ids.satt, None, *rk);
                    let att: Vec<Var<'g>> = ctx.enc.l.iter().map(|l| l.dot(u)).collect();
                    g.weighted_sum(g.stack(&att).log_softmax().exp(), &ctx.enc.l)
                })
                .collect()),
        }
    }

    // ---- instantiation

    fn value_rep<'g>(&self, g: &'g Graph<'g>, ctx: &ExampleContext<'g, '_>, value: &crate::table::CellValue) -> Var<'g> {
        let mention = ctx.question.entities.iter().find(|e| e.value.loosely_equals(value));
        match mention {
            Some(e) => ctx.enc.span_rep(g, e.span.start, e.span.end),
            None => ctx.enc.all_row_span,
        }
    }

    /// Representation of a row candidate.
    pub fn row_candidate_rep<'g>(&self, g: &'g Graph<'g>, ctx: &ExampleContext<'g, '_>, cand: &Candidate) -> Var<'g> {
        match cand {
            Candidate::AllRows => g.param(self.ids.all_rows),
            Candidate::RowFilter { conditions, connective } => {
                let conds: Vec<Var<'g>> = conditions
                    .iter()
                    .map(|c| {
                        g.concat(&[ctx.columns[c.column], g.param_row(self.ids.op, c.op.index()), self.value_rep(g, ctx, &c.value)])
                    })
                    .collect();
                let mean = if conds.len() == 1 { conds[0] } else { g.mean(&conds) };
                let conn = match connective {
                    Connective::None => 0,
                    Connective::And => 1,
                    Connective::Or => 2,
                };
                mean.add(g.param_row(self.ids.connective, conn))
            }
            Candidate::Column(_) => panic!("column candidate in a row slot"),
        }
    }

    fn col_projections<'g>(&self, g: &'g Graph<'g>, ctx: &ExampleContext<'g, '_>) -> Vec<Var<'g>> {
        ctx.col_proj.get_or_init(|| ctx.columns.iter().map(|c| self.ids.mlp_col.project_b(g, *c)).collect()).clone()
    }

    fn row_projections<'g, 'c>(&self, g: &'g Graph<'g>, ctx: &'c ExampleContext<'g, '_>) -> &'c (Vec<Candidate>, Vec<Var<'g>>) {
        ctx.rows.get_or_init(|| {
            let probe = Slot { kind: SlotKind::Row, index: 0, expected_coltype: None, position: 0 };
            let cands = slot_candidates(&probe, ctx.table, ctx.question, &self.config.instantiation);
            let proj = cands.iter().map(|c| self.ids.mlp_row.project_b(g, self.row_candidate_rep(g, ctx, c))).collect();
            (cands, proj)
        })
    }

    /// Log-probabilities over candidates given their representations:
    /// `p(s -> c) ∝ exp(MLP([s; c]))`.
    pub fn slot_distribution<'g>(
        &self,
        g: &'g Graph<'g>,
        s: Var<'g>,
        candidate_reps: &[Var<'g>],
        kind: SlotKind,
        drop: &Dropout,
    ) -> Var<'g> {
        let mlp = match kind {
            SlotKind::Row => self.ids.mlp_row,
            SlotKind::Column => self.ids.mlp_col,
        };
        let proj: Vec<Var<'g>> = candidate_reps.iter().map(|c| mlp.project_b(g, *c)).collect();
        self.slot_distribution_projected(g, s, &proj, kind, drop)
    }

    fn slot_distribution_projected<'g>(&self, g: &'g Graph<'g>, s: Var<'g>, proj: &[Var<'g>], kind: SlotKind, drop: &Dropout) -> Var<'g> {
        let mlp = match kind {
            SlotKind::Row => self.ids.mlp_row,
            SlotKind::Column => self.ids.mlp_col,
        };
        let ps = mlp.project_a(g, s);
        let scores: Vec<Var<'g>> = proj.iter().map(|pc| mlp.score(g, ps, *pc, drop, self.config.mlp_dropout)).collect();
        g.stack(&scores).log_softmax()
    }

    /// Candidates and their log-probabilities for one slot.
    pub fn slot_log_probs<'g>(
        &self,
        g: &'g Graph<'g>,
        ctx: &ExampleContext<'g, '_>,
        slot: &Slot,
        s: Var<'g>,
        drop: &Dropout,
    ) -> Result<(Vec<Candidate>, Var<'g>), ModelError> {
        let (cands, proj) = match slot.kind {
            SlotKind::Column => {
                let all = self.col_projections(g, ctx);
                let cands = slot_candidates(slot, ctx.table, ctx.question, &self.config.instantiation);
                let proj: Vec<Var<'g>> = cands
                    .iter()
                    .map(|c| match c {
                        Candidate::Column(i) => all[*i],
                        _ => unreachable!(),
                    })
                    .collect();
                (cands, proj)
            }
            SlotKind::Row => {
                let (c, p) = self.row_projections(g, ctx);
                (c.clone(), p.clone())
            }
        };
        if cands.is_empty() {
            return Err(ModelError::NoCandidates(slot.index));
        }
        Ok((cands, self.slot_distribution_projected(g, s, &proj, slot.kind, drop)))
    }

    /// `log p(h)` and every slot distribution of `h`.
    pub fn program_scores<'g>(
        &self,
        g: &'g Graph<'g>,
        ctx: &ExampleContext<'g, '_>,
        h: &AbstractProgram,
        drop: &Dropout,
    ) -> Result<ProgramScores<'g>, ModelError> {
        let log_p_h = self.score_abstract(g, &ctx.enc, &ctx.rules, h, drop)?;
        let r = self.encode_abstract_program(g, h, drop);
        let s = self.slot_representations(g, ctx, h, &r, drop)?;
        let slots = h
            .slots
            .iter()
            .zip(s)
            .map(|(slot, sk)| self.slot_log_probs(g, ctx, slot, sk, drop))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ProgramScores { log_p_h, slots })
    }
}
