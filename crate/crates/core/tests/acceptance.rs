//! One pass/fail line per acceptance criterion.
//!
//! cargo test --release --test acceptance            # all criteria
//! cargo test --release --test acceptance -- 1 4 6   # a subset

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use weaksp::entities::build_question;
use weaksp::evalkit::{mean_gold_posterior, sets_by_id, split_accuracy};
use weaksp::executor::{execute, Program};
use weaksp::fixtures::{example, medal_table, plain_tokens};
use weaksp::grammar::program_text::parse;
use weaksp::grammar::{
    enumerate_abstract_programs, instantiate, slot_candidates, Derivation, PartialDerivation, RuleSet,
};
use weaksp::lattice::{brute_force_marginals, forward_backward, FeasibleSpans};
use weaksp::model::tape::Graph;
use weaksp::model::{AttentionMode, Dropout, ModelConfig, Parser, Vocab};
use weaksp::rng::SplitMix64;
use weaksp::search::{
    cache_key, example_fingerprint, find_consistent, search_corpus, ConsistentSet, Preset, SearchCache, SearchConfig,
};
use weaksp::syngen::{generate, SynConfig};
use weaksp::table::{denotation_equal, CellValue, Column, ColumnType, Corpus, Date, Denotation, Example, Span, Split, Table};
use weaksp::trainer::{grad_check, train, TrainConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn main() {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |i: usize| picked.is_empty() || picked.contains(&i);
    let mut learned = None;
    let mut failed = 0;
    let criteria: [(usize, &str); 10] = [
        (1, "alignment DP oracle equivalence"),
        (2, "marginal structure"),
        (3, "end-to-end gradient check"),
        (4, "executor golden suite"),
        (5, "search soundness and exhaustiveness"),
        (6, "grammar round trip and constrained decoding"),
        (7, "desk-scale learning"),
        (8, "spuriousness separation"),
        (9, "configuration fidelity"),
        (10, "determinism"),
    ];
    for (i, name) in criteria {
        if !want(i) {
            continue;
        }
        let t0 = Instant::now();
        let o = match i {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(&mut learned),
            8 => criterion_8(&mut learned),
            9 => criterion_9(),
            _ => criterion_10(),
        };
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {i:>2} {} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// ---- 1, 2: lattice

/// A random instance: up to 3 slots, up to 8 tokens, random feasible sets.
fn random_lattice(rng: &mut SplitMix64) -> (Vec<Vec<f64>>, FeasibleSpans) {
    let n = 1 + rng.below(8);
    let ns = 1 + rng.below(3);
    let mut spans = Vec::new();
    for _ in 0..ns {
        let mut v = Vec::new();
        for i in 0..n {
            for j in i..n {
                if rng.bernoulli(0.4) {
                    v.push(Span::new(i, j));
                }
            }
        }
        if v.is_empty() {
            let i = rng.below(n);
            v.push(Span::new(i, i));
        }
        spans.push(v);
    }
    let m = spans.iter().map(|ss| ss.iter().map(|_| rng.uniform(-5.0, 5.0)).collect()).collect();
    (m, FeasibleSpans { n, spans })
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = SplitMix64::new(101);
    let (mut max_e, mut max_z, mut infeasible, mut mismatch) = (0.0f64, 0.0f64, 0, 0);
    for _ in 0..200 {
        let (m, f) = random_lattice(&mut rng);
        match (forward_backward(&m, &f), brute_force_marginals(&m, &f)) {
            (Ok(dp), Ok(bf)) => {
                max_z = max_z.max((dp.log_z - bf.log_z).abs());
                for (a, b) in dp.e.iter().flatten().zip(bf.e.iter().flatten()) {
                    max_e = max_e.max((a - b).abs());
                }
            }
            (Err(_), Err(_)) => infeasible += 1,
            _ => mismatch += 1,
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        max_e < 1e-9 && max_z < 1e-9 && mismatch == 0 && secs < 10.0,
        format!("max|dE| {max_e:.1e}, max|dlogZ| {max_z:.1e}, {infeasible} infeasible on both sides, {mismatch} disagreements, {secs:.2}s"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = SplitMix64::new(202);
    let (mut slot_dev, mut overlap_max, mut grad_rel, mut checked) = (0.0f64, 0.0f64, 0.0f64, 0);
    // five-point stencil; a plain central difference at small h drowns tiny marginals in cancellation
    let h = 1e-2;
    for _ in 0..200 {
        let (m, f) = random_lattice(&mut rng);
        let Ok(dp) = forward_backward(&m, &f) else { continue };
        checked += 1;
        for ek in &dp.e {
            slot_dev = slot_dev.max((ek.iter().sum::<f64>() - 1.0).abs());
        }
        for i in 0..f.n {
            let cover: f64 = f
                .spans
                .iter()
                .zip(&dp.e)
                .flat_map(|(ss, ek)| ss.iter().zip(ek).filter(|(s, _)| s.contains(i)).map(|(_, e)| *e))
                .sum();
            overlap_max = overlap_max.max(cover);
        }
        for k in 0..m.len() {
            for s in 0..m[k].len() {
                let lz = |d: f64| {
                    let mut x = m.clone();
                    x[k][s] += d;
                    forward_backward(&x, &f).unwrap().log_z
                };
                let num = (8.0 * (lz(h) - lz(-h)) - (lz(2.0 * h) - lz(-2.0 * h))) / (12.0 * h);
                let a = dp.e[k][s];
                grad_rel = grad_rel.max((a - num).abs() / a.abs().max(num.abs()).max(1e-6));
            }
        }
    }
    outcome(
        slot_dev <= 1e-9 && overlap_max <= 1.0 + 1e-9 && grad_rel < 1e-6,
        format!("{checked} feasible instances: max|sum_k - 1| {slot_dev:.1e}, max token cover {overlap_max:.12}, dlogZ/dM vs E rel {grad_rel:.1e}"),
    )
}

// ---- 3: gradients

fn criterion_3() -> Outcome {
    let t0 = Instant::now();
    let t = medal_table();
    let gold = "select(filter(all_rows, eq(col:nation, s:\"turkey\")), col:silver)";
    let e = example("0", "how many silver medals did turkey get", &t, vec![CellValue::Number(0.0)], &[gold]);
    let zs: Vec<Program> = [gold, "select(argmin(all_rows, col:silver), col:silver)"].iter().map(|s| parse(s, &t).unwrap()).collect();
    let set = ConsistentSet::from_programs("0", &zs, &t, true);
    assert_eq!(set.total_count, 2);
    let vocab = Vocab::from_words(e.question.words());
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for mode in [AttentionMode::Structured, AttentionMode::Standard] {
        let p = Parser::new(ModelConfig { attention_mode: mode, ..ModelConfig::micro() }, vocab.clone(), Vocab::from_words([]));
        let r = match grad_check(&p, &e, &t, &set, 64, 7) {
            Ok(r) => r,
            Err(s) => return outcome(false, format!("loss undefined: {s:?}")),
        };
        worst = worst.max(r.max_rel_error);
        parts.push(format!("{} {} coords max rel {:.1e}", mode.name(), r.checked, r.max_rel_error));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(worst < 1e-4 && secs < 60.0, parts.join(", "))
}

// ---- 4: executor

fn num_col(name: &str, xs: &[f64]) -> Column {
    Column { name_tokens: vec![name.into()], ctype: ColumnType::Number, cells: xs.iter().map(|x| CellValue::Number(*x)).collect() }
}

fn str_col(name: &str, xs: &[&str]) -> Column {
    Column { name_tokens: vec![name.into()], ctype: ColumnType::String, cells: xs.iter().map(|x| CellValue::text(*x)).collect() }
}

fn t2() -> Table {
    Table::new(
        "t2",
        vec![
            str_col("team", &["lions", "tigers", "bears", "wolves"]),
            num_col("wins", &[10.0, 7.0, 7.0, 3.0]),
            num_col("losses", &[2.0, 5.0, 6.0, 9.0]),
            num_col("points", &[2100.0, 1800.0, 1750.0, 900.0]),
        ],
    )
    .unwrap()
}

fn t3() -> Table {
    let d = |y, m, dd| CellValue::Date(Date::new(y, m, dd).unwrap());
    Table::new(
        "t3",
        vec![
            str_col("city", &["oslo", "lima", "rome"]),
            Column { name_tokens: vec!["opened".into()], ctype: ColumnType::Date, cells: vec![d(1999, 5, 1), d(2004, 0, 0), d(1987, 11, 30)] },
            num_col("visitors", &[120.5, 80.0, 300.25]),
        ],
    )
    .unwrap()
}

fn criterion_4() -> Outcome {
    let n = |x: f64| vec![CellValue::Number(x)];
    let s = |x: &str| vec![CellValue::text(x)];
    let (ta, tb, tc) = (medal_table(), t2(), t3());
    let cases: Vec<(&Table, &str, Vec<CellValue>)> = vec![
        (&ta, "select(filter(all_rows, eq(col:nation, s:\"turkey\")), col:silver)", n(0.0)),
        (&ta, "select(previous(argmax(all_rows, col:silver)), col:silver)", n(0.0)),
        (&ta, "select(argmax(all_rows, col:gold), col:nation)", s("turkey")),
        (&ta, "sum(all_rows, col:silver)", n(5.0)),
        (&ta, "count(filter(all_rows, gt(col:gold, n:0)))", n(1.0)),
        (&ta, "diff(max(all_rows, col:silver), min(all_rows, col:gold))", n(5.0)),
        (&ta, "select(next(filter(all_rows, eq(col:nation, s:\"turkey\"))), col:nation)", s("norway")),
        (&tb, "count(filter(all_rows, and(ge(col:wins, n:7), lt(col:losses, n:6))))", n(2.0)),
        (&tb, "count(filter(all_rows, or(gt(col:wins, n:8), gt(col:losses, n:8))))", n(2.0)),
        (&tb, "select(argmax(all_rows, col:wins), col:team)", s("lions")),
        (&tb, "average(all_rows, col:wins)", n(6.75)),
        (&tb, "select(filter(all_rows, eq(col:wins, n:7)), col:team)", vec![CellValue::text("tigers"), CellValue::text("bears")]),
        (&tb, "select(argmin(filter(all_rows, eq(col:wins, n:7)), col:losses), col:team)", s("tigers")),
        (&tb, "select(last(all_rows), col:points)", n(900.0)),
        (&tb, "select(first(filter(all_rows, le(col:points, n:1800))), col:team)", s("tigers")),
        (&tb, "diff(max(filter(all_rows, eq(col:team, s:\"lions\")), col:points), min(filter(all_rows, eq(col:team, s:\"wolves\")), col:points))", n(1200.0)),
        (&tb, "max(filter(all_rows, lt(col:wins, n:10)), col:points)", n(1800.0)),
        (&tb, "count(all_rows)", n(4.0)),
        (&tc, "select(argmax(all_rows, col:opened), col:city)", s("lima")),
        (&tc, "select(argmin(all_rows, col:opened), col:city)", s("rome")),
        (&tc, "select(filter(all_rows, eq(col:city, s:\"oslo\")), col:opened)", vec![CellValue::Date(Date::new(1999, 5, 1).unwrap())]),
        (&tc, "sum(all_rows, col:visitors)", n(500.75)),
        (&tc, "count(filter(all_rows, gt(col:opened, d:1990)))", n(2.0)),
        (&tc, "min(filter(all_rows, ge(col:visitors, n:100)), col:visitors)", n(120.5)),
    ];
    let mut bad = Vec::new();
    for (t, text, want) in &cases {
        let got = parse(text, t).map_err(|e| e.to_string()).and_then(|z| execute(&z, t).map_err(|e| e.to_string()));
        match got {
            Ok(d) if denotation_equal(&d, &Denotation::new(want.clone())) => {}
            other => bad.push(format!("{text} -> {other:?}")),
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { format!("{} programs over 3 tables match", cases.len()) } else { bad.join("; ") })
}

// ---- 5: search

/// Single-stage enumerator: every abstract program times every full
/// candidate assignment, executed whole.
fn naive_consistent(e: &Example, t: &Table, cfg: &SearchConfig) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for h in enumerate_abstract_programs(&RuleSet::for_table(t), cfg.max_rules) {
        let cands: Vec<_> = h.slots.iter().map(|s| slot_candidates(s, t, &e.question, &cfg.instantiation)).collect();
        if cands.iter().any(Vec::is_empty) {
            continue;
        }
        let mut idx = vec![0usize; cands.len()];
        loop {
            let a: Vec<_> = idx.iter().zip(&cands).map(|(&i, c)| c[i].clone()).collect();
            if let Ok(z) = instantiate(&h, &a, t) {
                if execute(&z, t).is_ok_and(|d| denotation_equal(&d, &e.denotation)) {
                    out.insert(z.text(t));
                }
            }
            let mut p = idx.len();
            loop {
                if p == 0 {
                    break;
                }
                p -= 1;
                idx[p] += 1;
                if idx[p] < cands[p].len() {
                    break;
                }
                idx[p] = 0;
            }
            if idx.iter().all(|&i| i == 0) {
                break;
            }
        }
    }
    out
}

const MICRO_NAMES: [&str; 6] = ["ann", "bob", "cat", "dan", "eve", "fay"];

fn micro_instance(rng: &mut SplitMix64, id: usize, cfg: &SearchConfig) -> (Table, Example) {
    let rows = 2 + rng.below(2);
    let mut names = MICRO_NAMES.to_vec();
    rng.shuffle(&mut names);
    let mut cols = vec![str_col("name", &names[..rows])];
    for c in 0..1 + rng.below(2) {
        let xs: Vec<f64> = (0..rows).map(|_| rng.below(5) as f64).collect();
        cols.push(num_col(["score", "age"][c], &xs));
    }
    let t = Table::new(format!("m{id}"), cols).unwrap();
    let words = format!("what about {} and {}", names[rng.below(rows)], rng.below(5));
    let question = build_question(&plain_tokens(&words), &t);
    let mut e = Example {
        id: id.to_string(),
        question,
        table_id: t.id.clone(),
        split: Split::Train,
        denotation: Denotation::new(vec![CellValue::Number(0.0)]),
        gold_programs: Vec::new(),
    };
    // the denotation of a random executable program
    let hs = enumerate_abstract_programs(&RuleSet::for_table(&t), cfg.max_rules);
    for _ in 0..50 {
        let h = rng.choose(&hs);
        let cands: Vec<_> = h.slots.iter().map(|s| slot_candidates(s, &t, &e.question, &cfg.instantiation)).collect();
        if cands.iter().any(Vec::is_empty) {
            continue;
        }
        let a: Vec<_> = cands.iter().map(|c| rng.choose(c).clone()).collect();
        if let Some(d) = instantiate(h, &a, &t).ok().and_then(|z| execute(&z, &t).ok()) {
            e.denotation = d;
            break;
        }
    }
    (t, e)
}

fn criterion_5() -> Outcome {
    // soundness over the cache of a small synthetic corpus
    let dir = tempfile::tempdir().unwrap();
    let syn = SynConfig { n_tables: 10, n_train: 80, n_dev: 10, n_test: 10, ..SynConfig::default() };
    let (corpus, _) = generate(&syn).unwrap();
    let cfg = SearchConfig::default();
    let path = dir.path().join("search.cache");
    {
        let mut cache = SearchCache::open(&path).unwrap();
        search_corpus(&corpus, &cfg, Some(&mut cache), 1);
    }
    let cache = SearchCache::open(&path).unwrap();
    let (mut programs, mut wrong) = (0usize, 0usize);
    for e in &corpus.examples {
        let t = corpus.table_of(e);
        let Some(set) = cache.get(&cache_key(&e.id, &cfg.digest(), &example_fingerprint(e, t)), &e.id, t) else {
            return outcome(false, format!("example {} missing from cache", e.id));
        };
        for z in set.programs(t) {
            programs += 1;
            if !execute(&z, t).is_ok_and(|d| denotation_equal(&d, &e.denotation)) {
                wrong += 1;
            }
        }
    }
    // exhaustiveness against the naive enumerator
    let mut rng = SplitMix64::new(505);
    let mut differ = Vec::new();
    let mut total = 0;
    for i in 0..200 {
        let (t, e) = micro_instance(&mut rng, i, &cfg);
        let fast: BTreeSet<String> = find_consistent(&e, &t, &cfg).texts(&t).into_iter().collect();
        let slow = naive_consistent(&e, &t, &cfg);
        total += slow.len();
        if fast != slow {
            differ.push(i);
        }
    }
    outcome(
        wrong == 0 && differ.is_empty(),
        format!(
            "{programs} cached programs, {wrong} fail to re-execute; 200 micro instances ({total} programs), {} differ from the naive enumerator {:?}",
            differ.len(),
            &differ[..differ.len().min(5)]
        ),
    )
}

// ---- 6: grammar

fn criterion_6() -> Outcome {
    let mut rng = SplitMix64::new(606);
    let all = enumerate_abstract_programs(&RuleSet::full(), 9);
    let mut round_trip_bad = 0;
    for _ in 0..1000 {
        let h = rng.choose(&all);
        let seq = h.derivation.linearize();
        match Derivation::parse(&seq) {
            Ok(d) if d == h.derivation => {}
            _ => round_trip_bad += 1,
        }
    }
    let t = medal_table();
    let q = build_question(&plain_tokens("how many silver medals did turkey get"), &t);
    let p = Parser::new(ModelConfig::micro(), Vocab::from_words(q.words()), Vocab::from_words([]));
    let rules = RuleSet::for_table(&t);
    let g = Graph::new(&p.params);
    let enc = p.encode_question(&g, &q, &Dropout::off());
    let (mut outside, mut steps, mut finished) = (0usize, 0usize, 0usize);
    for _ in 0..1000 {
        let mut partial = PartialDerivation::new();
        let mut state = p.decoder_start(&g, &enc);
        while !partial.is_complete() && partial.rules.len() < p.config.max_decode_len {
            let step = p.decoder_step(&g, &enc, state, partial.rules.last().copied(), &partial, &rules, &Dropout::off());
            let allowed = rules.valid_next_rules(&partial);
            let probs: Vec<f64> = step.log_probs.value().iter().map(|l| l.exp()).collect();
            let r = step.valid[rng.weighted(&probs)];
            steps += 1;
            if !allowed.contains(&r) || step.valid != allowed {
                outside += 1;
            }
            partial.push(r).expect("a valid rule extends the derivation");
            state = step.state;
        }
        if partial.is_complete() {
            finished += 1;
        }
    }
    outcome(
        round_trip_bad == 0 && outside == 0,
        format!(
            "{round_trip_bad}/1000 round trips differ ({} programs up to 9 rules); {outside} of {steps} sampled decoder steps outside valid_next_rules ({finished} rollouts completed)",
            all.len()
        ),
    )
}

// ---- 7, 8: learning

struct Learned {
    corpus: Corpus,
    sets: HashMap<String, ConsistentSet>,
    structured: Parser,
    train_config: TrainConfig,
}

fn learning_corpus() -> SynConfig {
    SynConfig { n_train: 600, n_dev: 100, n_test: 200, n_tables: 60, spurious_rate: 0.5, ..SynConfig::default() }
}

fn new_parser(corpus: &Corpus, mode: AttentionMode) -> Parser {
    Parser::new(ModelConfig { attention_mode: mode, ..ModelConfig::default() }, Vocab::build(corpus), Vocab::from_words([]))
}

fn criterion_7(learned: &mut Option<Learned>) -> Outcome {
    let t0 = Instant::now();
    let (corpus, _) = generate(&learning_corpus()).unwrap();
    let sets = sets_by_id(&search_corpus(&corpus, &SearchConfig::default(), None, 1));
    let prep = t0.elapsed();
    let cfg = TrainConfig { attention_mode: AttentionMode::Structured, ..TrainConfig::default() };
    let mut p = new_parser(&corpus, AttentionMode::Structured);
    let report = match train(&mut p, &corpus, &sets, &cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("training failed: {e}")),
    };
    let train_time = t0.elapsed() - prep;
    let acc = split_accuracy(&p, &corpus, Split::Test, p.config.beam, 1);
    let total = t0.elapsed();
    let detail = format!(
        "test accuracy {acc:.3} (dev {:.3} at epoch {} of {}); generate+search {:.0}s, training {:.0}s, total {:.0}s",
        report.best_dev_acc,
        report.best_epoch,
        report.epochs.len(),
        prep.as_secs_f64(),
        train_time.as_secs_f64(),
        total.as_secs_f64()
    );
    *learned = Some(Learned { corpus, sets, structured: p, train_config: cfg });
    outcome(acc >= 0.9 && total <= Duration::from_secs(30 * 60), detail)
}

fn criterion_8(learned: &mut Option<Learned>) -> Outcome {
    if learned.is_none() {
        let _ = criterion_7(learned);
    }
    let l = learned.as_ref().unwrap();
    let cfg = TrainConfig { attention_mode: AttentionMode::Standard, ..l.train_config.clone() };
    let mut standard = new_parser(&l.corpus, AttentionMode::Standard);
    if let Err(e) = train(&mut standard, &l.corpus, &l.sets, &cfg) {
        return outcome(false, format!("standard training failed: {e}"));
    }
    let s = mean_gold_posterior(&l.structured, &l.corpus, Split::Train, &l.sets, 1);
    let b = mean_gold_posterior(&standard, &l.corpus, Split::Train, &l.sets, 1);
    match (s, b) {
        (Some(s), Some(b)) => outcome(s - b >= 0.1, format!("mean log p(gold | consistent): structured {s:.3}, standard {b:.3}, gap {:.3} nats", s - b)),
        _ => outcome(false, "no training example has a scorable gold program"),
    }
}

// ---- 9: configuration

fn criterion_9() -> Outcome {
    use weaksp::cli::GlobalConfig;
    let mut checks: Vec<(&str, bool)> = Vec::new();
    checks.push(("default beam 6", ModelConfig::default().beam == 6 && GlobalConfig::default().model.beam == 6));
    let wtq = SearchConfig::preset(Preset::WtqLike);
    let wsq = SearchConfig::preset(Preset::WsqLike);
    checks.push(("wtq-like cap 9", wtq.max_rules == 9));
    checks.push(("wsq-like cap 6", wsq.max_rules == 6));
    checks.push(("wtq-like OR only", wtq.instantiation.enable_or && !wtq.instantiation.enable_and));
    checks.push(("wsq-like AND only", wsq.instantiation.enable_and && !wsq.instantiation.enable_or));
    let gw = GlobalConfig::parse("preset = wtq-like").unwrap();
    let gs = GlobalConfig::parse("preset = wsq-like").unwrap();
    checks.push(("wtq-like config file", gw.search == wtq && gw.model.instantiation == wtq.instantiation && gw.model.pos_dim > 0));
    checks.push(("wsq-like config file", gs.search == wsq && gs.model.instantiation == wsq.instantiation && gs.model.pos_dim == 0));
    let bad: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(bad.is_empty(), if bad.is_empty() { format!("{} checks hold", checks.len()) } else { format!("failed: {}", bad.join(", ")) })
}

// ---- 10: determinism

fn run_pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let config = dir.join("run.cfg");
    std::fs::write(
        &config,
        format!(
            "corpus = {0}/corpus.tsv\ncache_dir = {0}/cache\ncheckpoint = {0}/model.ckpt\nmetrics = {0}/metrics.tsv\nseed = 5\n[train]\nepochs = 2\n",
            dir.display()
        ),
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for cmd in ["gen", "search", "train"] {
        let out = Command::new(env!("CARGO_BIN_EXE_weaksp"))
            .args(["--config", config.to_str().unwrap(), cmd])
            .env("WEAKSP_QUIET", "1")
            .env_remove("WEAKSP_CACHE_DIR")
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("`{cmd}` failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
        outputs.push((format!("{cmd} stdout"), out.stdout));
    }
    for f in ["corpus.tsv", "cache/search.cache", "model.ckpt", "metrics.tsv"] {
        outputs.push((f.to_string(), std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}"))?));
    }
    Ok(outputs)
}

fn criterion_10() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_pipeline(a.path());
    let rb = run_pipeline(b.path());
    match (ra, rb) {
        (Ok(ra), Ok(rb)) => {
            // paths differ between the two runs; normalize them in stdout
            let norm = |s: &[u8], d: &Path| String::from_utf8_lossy(s).replace(&d.display().to_string(), "<dir>").into_bytes();
            let differ: Vec<String> = ra
                .iter()
                .zip(&rb)
                .filter(|(x, y)| norm(&x.1, a.path()) != norm(&y.1, b.path()))
                .map(|(x, _)| x.0.clone())
                .collect();
            let bytes: usize = ra.iter().map(|x| x.1.len()).sum();
            outcome(
                differ.is_empty(),
                if differ.is_empty() {
                    format!("gen, search and 2-epoch train identical across runs ({} artifacts, {bytes} bytes)", ra.len())
                } else {
                    format!("differing: {}", differ.join(", "))
                },
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}
