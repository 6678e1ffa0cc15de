use super::gradcheck::{check_gradients, sample_coordinates};
use super::*;
use crate::fixtures::{example, medal_table};
use crate::grammar::{PartialDerivation, RuleId, SlotKind};
use crate::lattice::{feasible_spans, LatticeConfig};
use crate::model::tape::Graph;
use crate::rng::SplitMix64;
use crate::table::{CellValue, Question, Table};

fn setup(config: ModelConfig) -> (Table, Question, Parser) {
    let t = medal_table();
    let e = example("0", "how many silver medals did turkey get", &t, vec![CellValue::Number(0.0)], &[]);
    let vocab = Vocab::from_words(e.question.tokens.iter().map(|t| t.text.as_str()).chain(["nation", "gold"]));
    let p = Parser::new(config, vocab, Vocab::from_words([]));
    (t, e.question, p)
}

fn ap(s: &str) -> crate::grammar::AbstractProgram {
    let ids: Vec<RuleId> = s.split(',').map(|x| RuleId(x.trim().parse().unwrap())).collect();
    crate::grammar::AbstractProgram::from_rules(&ids).unwrap()
}

/// select(#row_slot, #column_slot)
fn select_h() -> crate::grammar::AbstractProgram {
    ap("0, 2, 17, 18")
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
}

#[test]
fn encoder_shapes_and_determinism() {
    let (_, q, p) = setup(ModelConfig { enc_dropout: 0.3, ..ModelConfig::default() });
    let g = Graph::new(&p.params);
    let a = p.encode_question(&g, &q, &Dropout::off());
    let b = p.encode_question(&g, &q, &Dropout::off());
    assert_eq!(a.n(), q.n());
    assert_eq!(a.l[0].len(), p.config.token_dim());
    for (x, y) in a.l.iter().zip(&b.l) {
        assert_eq!(x.value(), y.value());
    }
    // dropout changes outputs only when on
    let c = p.encode_question(&g, &q, &Dropout::on(3));
    assert!(a.l.iter().zip(&c.l).any(|(x, y)| x.value() != y.value()));
}

#[test]
fn unknown_tokens_use_unk() {
    let (t, _, p) = setup(ModelConfig::micro());
    let g = Graph::new(&p.params);
    let q1 = example("0", "zzz", &t, vec![], &[]).question;
    let q2 = example("0", "qqq", &t, vec![], &[]).question;
    let a = p.encode_question(&g, &q1, &Dropout::off());
    let b = p.encode_question(&g, &q2, &Dropout::off());
    assert_eq!(a.l[0].value(), b.l[0].value());
}

#[test]
fn encoder_gradient_matches_finite_differences() {
    let (_, q, p) = setup(ModelConfig::micro());
    let probe: Vec<f64> = (0..p.config.token_dim()).map(|i| 0.3 - 0.1 * i as f64).collect();
    let names = ["enc.fwd.w", "enc.bwd.w", "enc.fwd.b", "embed.proj"];
    let ids: Vec<ParamId> = names.iter().map(|n| p.params.id(n).unwrap()).collect();
    let coords = sample_coordinates(&p.params, &ids, 64, &mut SplitMix64::new(5));
    let report = check_gradients(&p.params, &coords, 1e-5, |g| {
        let enc = p.encode_question(g, &q, &Dropout::off());
        let c = g.constant(probe.clone());
        let parts: Vec<_> = enc.l.iter().map(|l| l.tanh().dot(c)).collect();
        g.stack(&parts).sum()
    });
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn column_reps() {
    let (t, q, p) = setup(ModelConfig::micro());
    let g = Graph::new(&p.params);
    let cols = p.encode_columns(&g, &t, &q);
    assert_eq!(cols.len(), 3);
    assert_eq!(cols[0].len(), p.config.column_dim());
    let silver = g.affine(p.params.id("embed.proj").unwrap(), None, g.param_row(p.word_embeddings(), p.vocab.id("silver")));
    let d = p.config.proj_dim;
    assert!(close(&cols[2].value()[..d], &silver.value()));
    // turkey is a nation mention: only the indicator slice differs from a question without it
    let q2 = example("1", "how many silver medals", &t, vec![], &[]).question;
    let cols2 = p.encode_columns(&g, &t, &q2);
    let (a, b) = (cols[0].value(), cols2[0].value());
    let f = p.config.feature_dim;
    assert!(close(&a[..d + f], &b[..d + f]));
    assert!(!close(&a[d + f..], &b[d + f..]));

    let mut perm = t.clone();
    perm.columns.reverse();
    let cols3 = p.encode_columns(&g, &perm, &crate::entities::build_question(&crate::fixtures::plain_tokens("how many silver medals did turkey get"), &perm));
    for (i, j) in [(0, 2), (1, 1), (2, 0)] {
        assert!(close(&cols[i].value(), &cols3[j].value()));
    }
}

#[test]
fn single_valid_rule_has_probability_one() {
    let (t, q, p) = setup(ModelConfig::micro());
    let g = Graph::new(&p.params);
    let enc = p.encode_question(&g, &q, &Dropout::off());
    let rules = crate::grammar::RuleSet::for_table(&t);
    let h = select_h();
    let steps = p.abstract_step_log_probs(&g, &enc, &rules, &h, &Dropout::off()).unwrap();
    // the COLUMN slot is the only rule for COLUMN
    assert_eq!(steps[3].scalar(), 0.0);
    let total = p.score_abstract(&g, &enc, &rules, &h, &Dropout::off()).unwrap().scalar();
    let sum: f64 = steps.iter().map(|s| s.scalar()).sum();
    assert!((total - sum).abs() < 1e-12);
    assert!(total < 0.0);
}

#[test]
fn masked_softmax_support() {
    let (t, q, p) = setup(ModelConfig::micro());
    let g = Graph::new(&p.params);
    let enc = p.encode_question(&g, &q, &Dropout::off());
    let rules = crate::grammar::RuleSet::for_table(&t);
    let mut partial = PartialDerivation::new();
    let mut state = p.decoder_start(&g, &enc);
    let mut prev = None;
    for r in [0, 2, 9] {
        let step = p.decoder_step(&g, &enc, state, prev, &partial, &rules, &Dropout::off());
        assert_eq!(step.valid, rules.valid_next_rules(&partial));
        let probs: Vec<f64> = step.log_probs.value().iter().map(|x| x.exp()).collect();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // argmax is unchanged by scaling the scores
        let s = step.scores.value();
        let idx: Vec<usize> = step.valid.iter().map(|r| r.0).collect();
        let arg = |xs: &[f64]| idx.iter().copied().max_by(|a, b| xs[*a].total_cmp(&xs[*b])).unwrap();
        let scaled: Vec<f64> = s.iter().map(|x| x * 3.5).collect();
        assert_eq!(arg(&s), arg(&scaled));
        partial.push(RuleId(r)).unwrap();
        state = step.state;
        prev = Some(RuleId(r));
    }
    // an unrealizable program is rejected
    let enc2 = p.encode_question(&g, &q, &Dropout::off());
    let no_date = ap("0, 2, 11, 17, 20, 18");
    assert!(matches!(p.score_abstract(&g, &enc2, &rules, &no_date, &Dropout::off()), Err(crate::error::ModelError::Unrealizable(2))));
}

#[test]
fn beam_one_is_greedy() {
    let (t, q, p) = setup(ModelConfig { seed: 9, ..ModelConfig::micro() });
    let g = Graph::new(&p.params);
    let enc = p.encode_question(&g, &q, &Dropout::off());
    let rules = crate::grammar::RuleSet::for_table(&t);
    let beam = p.beam_search(&g, &enc, &rules, 1);
    let mut partial = PartialDerivation::new();
    let mut state = p.decoder_start(&g, &enc);
    let mut total = 0.0;
    while !partial.is_complete() && partial.rules.len() < p.config.max_decode_len {
        let step = p.decoder_step(&g, &enc, state, partial.rules.last().copied(), &partial, &rules, &Dropout::off());
        let lp = step.log_probs.value();
        let best = (0..lp.len()).fold(0, |b, i| if lp[i] > lp[b] { i } else { b });
        total += lp[best];
        partial.push(step.valid[best]).unwrap();
        state = step.state;
    }
    if partial.is_complete() {
        assert_eq!(beam.len(), 1);
        assert_eq!(beam[0].0.rules, partial.rules);
        assert!((beam[0].1 - total).abs() < 1e-12);
    } else {
        assert!(beam.is_empty());
    }
    let six = p.beam_search(&g, &enc, &rules, 6);
    assert!(six.len() <= 6 && !six.is_empty());
    assert!(six.windows(2).all(|w| w[0].1 >= w[1].1));
    for (h, s) in &six {
        let again = p.score_abstract(&g, &enc, &rules, h, &Dropout::off()).unwrap().scalar();
        assert!((again - s).abs() < 1e-9);
    }
}

#[test]
fn abstract_program_encoder() {
    let (_, _, p) = setup(ModelConfig::micro());
    let g = Graph::new(&p.params);
    // select(argmax(#row_slot, #col_number), #column_slot)
    let h1 = ap("0, 2, 9, 17, 19, 18");
    let h2 = ap("0, 2, 10, 17, 19, 18");
    let r1 = p.encode_abstract_program(&g, &h1, &Dropout::off());
    let r1b = p.encode_abstract_program(&g, &h1, &Dropout::off());
    let r2 = p.encode_abstract_program(&g, &h2, &Dropout::off());
    assert_eq!(r1.len(), 3);
    assert_eq!(r1[0].len(), p.config.slot_dim());
    for k in 0..3 {
        assert_eq!(r1[k].value(), r1b[k].value());
        assert_ne!(r1[k].value(), r2[k].value());
    }
}

#[test]
fn alignment_scores() {
    let (t, q, p) = setup(ModelConfig::micro());
    let h = select_h();
    let f = feasible_spans(&h.slots, &q, &LatticeConfig::default()).unwrap();
    {
        let g = Graph::new(&p.params);
        let ctx = p.context(&g, &q, &t, &Dropout::off());
        assert_eq!(ctx.enc.span_rep(&g, 2, 2).value(), ctx.enc.l[2].value());
        let r = p.encode_abstract_program(&g, &h, &Dropout::off());
        let m = p.score_alignments(&g, &ctx, &r, &f, &Dropout::off());
        assert_eq!(m.len(), 2);
        for (row, spans) in m.iter().zip(&f.spans) {
            assert_eq!(row.len(), spans.len());
            assert!(row.iter().all(|v| v.scalar().is_finite()));
        }
    }
    let names = ["mlp2.w1a", "mlp2.w1b", "mlp2.b1", "mlp2.w2", "mlp2.b2"];
    let ids: Vec<ParamId> = names.iter().map(|n| p.params.id(n).unwrap()).collect();
    let coords = sample_coordinates(&p.params, &ids, 64, &mut SplitMix64::new(2));
    // a small step keeps the differences clear of ReLU kinks
    let report = check_gradients(&p.params, &coords, 1e-7, |g| {
        let ctx = p.context(g, &q, &t, &Dropout::off());
        let r = p.encode_abstract_program(g, &h, &Dropout::off());
        let m = p.score_alignments(g, &ctx, &r, &f, &Dropout::off());
        let all: Vec<_> = m.into_iter().flatten().collect();
        g.stack(&all).sum()
    });
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn slot_distribution_properties() {
    let (_, _, p) = setup(ModelConfig::micro());
    let g = Graph::new(&p.params);
    let s = g.constant(vec![0.1, -0.2, 0.3, 0.05, 0.0, 0.2, -0.1, 0.4]);
    let c1 = g.constant(vec![0.5; p.config.column_dim()]);
    let c2 = g.constant((0..p.config.column_dim()).map(|i| i as f64 * 0.1).collect());
    let one = p.slot_distribution(&g, s, &[c1], SlotKind::Column, &Dropout::off());
    assert_eq!(one.value(), vec![0.0]);
    let d = p.slot_distribution(&g, s, &[c1, c2, c1], SlotKind::Column, &Dropout::off()).value();
    let probs: Vec<f64> = d.iter().map(|x| x.exp()).collect();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert_eq!(d[0], d[2]);
    let r = g.constant(vec![0.3; p.config.condition_dim()]);
    let dr = p.slot_distribution(&g, s, &[r, r], SlotKind::Row, &Dropout::off()).value();
    assert!((dr[0] - 2f64.ln().neg()).abs() < 1e-12);
}

trait Neg {
    fn neg(self) -> f64;
}
impl Neg for f64 {
    fn neg(self) -> f64 {
        -self
    }
}

#[test]
fn modes_share_parameter_names() {
    let (_, _, a) = setup(ModelConfig::default());
    let (_, _, b) = setup(ModelConfig { attention_mode: AttentionMode::Standard, ..ModelConfig::default() });
    let na: Vec<&str> = a.params.names().collect();
    let nb: Vec<&str> = b.params.names().collect();
    assert_eq!(na, nb);
}

#[test]
fn program_scores_in_both_modes() {
    for mode in [AttentionMode::Structured, AttentionMode::Standard] {
        let (t, q, p) = setup(ModelConfig { attention_mode: mode, ..ModelConfig::micro() });
        let g = Graph::new(&p.params);
        let ctx = p.context(&g, &q, &t, &Dropout::off());
        let h = select_h();
        let sc = p.program_scores(&g, &ctx, &h, &Dropout::off()).unwrap();
        assert_eq!(sc.slots.len(), 2);
        let (rows, lp) = &sc.slots[0];
        assert_eq!(rows.len(), lp.len());
        assert_eq!(rows[0], crate::grammar::Candidate::AllRows);
        assert_eq!(sc.slots[1].0.len(), 3);
        // the unused pooling path gets no gradient
        let loss = sc.slots[0].1.index(1).add(sc.log_p_h).neg();
        let grads = g.backward(loss);
        let detached = grads.detached(&p.params);
        match mode {
            AttentionMode::Structured => assert!(detached.contains(&"satt.w") && !detached.contains(&"mlp2.w2")),
            AttentionMode::Standard => assert!(detached.contains(&"mlp2.w2") && !detached.contains(&"satt.w")),
        }
        let satt = p.params.id("satt.w").unwrap();
        if mode == AttentionMode::Structured {
            assert!(grads.get(satt).iter().all(|x| *x == 0.0));
        }
    }
}
