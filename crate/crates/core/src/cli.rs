//! Global configuration and the command implementations behind the
//! `weaksp` binary.
//!
//! Config files are `key = value` lines with `#` comments and `[section]`
//! headers. Top-level keys: `corpus`, `cache_dir`, `checkpoint`, `metrics`,
//! `preset`, `seed`. Sections: `[syngen]`, `[search]`, `[model]`, `[train]`.
//! The preset is applied first, whatever its position in the file, and
//! every explicit key overrides it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{load_corpus, save_corpus};
use crate::evalkit::{evaluate, predict, sets_by_id};
use crate::model::tape::Graph;
use crate::model::vocab::load_embeddings;
use crate::model::{AttentionMode, Dropout, ModelConfig, Parser, Vocab};
use crate::search::{coverage_stats, search_corpus, Preset, SearchCache, SearchConfig};
use crate::syngen::{generate, SynConfig};
use crate::table::{Corpus, Split};
use crate::trainer::{train, TrainConfig};

pub const CACHE_DIR_ENV: &str = "WEAKSP_CACHE_DIR";
pub const QUIET_ENV: &str = "WEAKSP_QUIET";

#[derive(Debug, Error)]
pub enum CliError {
    /// Exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Exit code 2.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn data(msg: impl std::fmt::Display) -> CliError {
    CliError::Data(msg.to_string())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalConfig {
    pub corpus: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub preset: Preset,
    pub seed: u64,
    pub syngen: SynConfig,
    pub search: SearchConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Optional `word f1 f2 ...` file loaded into the word table before training.
    pub embeddings: Option<PathBuf>,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self::preset(Preset::Synthetic)
    }
}

impl GlobalConfig {
    pub fn preset(p: Preset) -> Self {
        let model = match p {
            Preset::WtqLike => ModelConfig::wtq_like(),
            Preset::WsqLike => ModelConfig::wsq_like(),
            Preset::Synthetic => ModelConfig::default(),
        };
        let search = SearchConfig::preset(p);
        let mut c = Self {
            corpus: None,
            cache_dir: PathBuf::from("cache"),
            checkpoint: PathBuf::from("model.ckpt"),
            preset: p,
            seed: 1,
            syngen: SynConfig::default(),
            search,
            model,
            train: TrainConfig::default(),
            embeddings: None,
        };
        c.sync();
        c
    }

    /// Pushes shared settings (seed, instantiation gating, attention mode)
    /// into every section.
    fn sync(&mut self) {
        self.syngen.seed = self.seed;
        self.model.seed = self.seed;
        self.train.seed = self.seed;
        self.model.instantiation = self.search.instantiation;
        self.model.attention_mode = self.train.attention_mode;
        self.train.checkpoint = Some(self.checkpoint.clone());
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.sync();
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let lines = parse_lines(text)?;
        let preset = match lines.iter().find(|l| l.section.is_empty() && l.key == "preset") {
            Some(l) => Preset::from_name(&l.value)
                .ok_or_else(|| usage(format!("line {}: unknown preset `{}` (wtq-like, wsq-like, synthetic)", l.line, l.value)))?,
            None => Preset::Synthetic,
        };
        let mut c = Self::preset(preset);
        for l in &lines {
            c.apply(l)?;
        }
        c.sync();
        c.validate().map_err(usage)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.syngen.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.search.max_rules == 0 {
            return Err("search.max_rules must be at least 1".into());
        }
        Ok(())
    }

    /// Cache directory after the environment override.
    pub fn effective_cache_dir(&self) -> PathBuf {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.cache_dir.clone(),
        }
    }

    pub fn cache_path(&self) -> PathBuf {
        self.effective_cache_dir().join("search.cache")
    }

    fn apply(&mut self, l: &Line) -> Result<(), CliError> {
        let v = l.value.as_str();
        let bad = |e: String| usage(format!("line {}: {}{}: {e}", l.line, l.prefix(), l.key));
        macro_rules! set {
            ($field:expr) => {
                $field = parse_value(v).map_err(bad)?
            };
        }
        match (l.section.as_str(), l.key.as_str()) {
            ("", "corpus") => self.corpus = Some(PathBuf::from(v)),
            ("", "cache_dir") => self.cache_dir = PathBuf::from(v),
            ("", "checkpoint") => self.checkpoint = PathBuf::from(v),
            ("", "metrics") => self.train.metrics = Some(PathBuf::from(v)),
            ("", "preset") => {}
            ("", "seed") => set!(self.seed),

            ("syngen", "n_tables") => set!(self.syngen.n_tables),
            ("syngen", "rows_min") => set!(self.syngen.rows_per_table.0),
            ("syngen", "rows_max") => set!(self.syngen.rows_per_table.1),
            ("syngen", "n_train") => set!(self.syngen.n_train),
            ("syngen", "n_dev") => set!(self.syngen.n_dev),
            ("syngen", "n_test") => set!(self.syngen.n_test),
            ("syngen", "template_mix") => {
                let ws: Vec<f64> = v.split(',').map(|s| parse_value(s.trim())).collect::<Result<_, _>>().map_err(bad)?;
                self.syngen.template_mix = ws.try_into().map_err(|_| bad("expected 8 comma-separated weights".into()))?;
            }
            ("syngen", "spurious_rate") => set!(self.syngen.spurious_rate),
            ("syngen", "two_condition_rate") => set!(self.syngen.two_condition_rate),
            ("syngen", "max_value") => set!(self.syngen.max_value),
            ("syngen", "spurious_cap") => set!(self.syngen.spurious_cap),
            ("syngen", "spurious_min_programs") => set!(self.syngen.spurious_min_programs),
            ("syngen", "max_attempts") => set!(self.syngen.max_attempts),

            ("search", "max_rules") => set!(self.search.max_rules),
            ("search", "max_conditions") => set!(self.search.instantiation.max_conditions),
            ("search", "enable_and") => set!(self.search.instantiation.enable_and),
            ("search", "enable_or") => set!(self.search.instantiation.enable_or),
            ("search", "timeout_ms") => set!(self.search.timeout_ms),

            ("model", "word_dim") => set!(self.model.word_dim),
            ("model", "proj_dim") => set!(self.model.proj_dim),
            ("model", "feature_dim") => set!(self.model.feature_dim),
            ("model", "pos_dim") => set!(self.model.pos_dim),
            ("model", "rule_dim") => set!(self.model.rule_dim),
            ("model", "op_dim") => set!(self.model.op_dim),
            ("model", "enc_hidden") => set!(self.model.enc_hidden),
            ("model", "dec_hidden") => set!(self.model.dec_hidden),
            ("model", "ap_hidden") => set!(self.model.ap_hidden),
            ("model", "mlp_hidden") => set!(self.model.mlp_hidden),
            ("model", "enc_dropout") => set!(self.model.enc_dropout),
            ("model", "ap_dropout") => set!(self.model.ap_dropout),
            ("model", "mlp_dropout") => set!(self.model.mlp_dropout),
            ("model", "beam") => set!(self.model.beam),
            ("model", "max_decode_len") => set!(self.model.max_decode_len),
            ("model", "max_row_span") => set!(self.model.lattice.max_row_span),
            ("model", "max_slots") => set!(self.model.lattice.max_slots),
            ("model", "embeddings") => self.embeddings = Some(PathBuf::from(v)),

            ("train", "epochs") => set!(self.train.epochs),
            ("train", "learning_rate") => set!(self.train.learning_rate),
            ("train", "beta1") => set!(self.train.beta1),
            ("train", "beta2") => set!(self.train.beta2),
            ("train", "epsilon") => set!(self.train.epsilon),
            ("train", "clip_norm") => set!(self.train.clip_norm),
            ("train", "attention_mode") => {
                self.train.attention_mode = AttentionMode::from_name(v).ok_or_else(|| bad("expected structured or standard".into()))?
            }
            ("train", "skip_infeasible") => set!(self.train.skip_infeasible),
            ("train", "max_programs") => set!(self.train.max_programs),
            ("train", "patience") => set!(self.train.patience),
            ("train", "max_nonfinite_fraction") => set!(self.train.max_nonfinite_fraction),

            _ => return Err(usage(format!("line {}: unknown key `{}{}`", l.line, l.prefix(), l.key))),
        }
        Ok(())
    }
}

fn parse_value<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| format!("bad value `{v}`: {e}"))
}

struct Line {
    line: usize,
    section: String,
    key: String,
    value: String,
}

impl Line {
    fn prefix(&self) -> String {
        if self.section.is_empty() {
            String::new()
        } else {
            format!("{}.", self.section)
        }
    }
}

const SECTIONS: [&str; 4] = ["syngen", "search", "model", "train"];

fn parse_lines(text: &str) -> Result<Vec<Line>, CliError> {
    let mut out = Vec::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(name) = s.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| usage(format!("line {n}: unterminated section header")))?.trim();
            if !SECTIONS.contains(&name) {
                return Err(usage(format!("line {n}: unknown section `[{name}]`")));
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = s.split_once('=').ok_or_else(|| usage(format!("line {n}: expected `key = value`")))?;
        out.push(Line { line: n, section: section.clone(), key: k.trim().to_string(), value: v.trim().to_string() });
    }
    Ok(out)
}

/// What to run, after the binary's argument parsing.
#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Gen,
    Search,
    Stats,
    Train,
    Eval { split: Split },
    Parse { example_id: String },
    Align { example_id: String },
}

pub struct Options {
    pub config: GlobalConfig,
    pub workers: usize,
}

/// Runs one command; returns what it prints on standard output.
pub fn run(cmd: &Command, opts: &Options) -> Result<String, CliError> {
    let cfg = &opts.config;
    let workers = opts.workers.max(1);
    match cmd {
        Command::Gen => {
            let path = corpus_path(cfg)?;
            let (corpus, records) = generate(&cfg.syngen).map_err(usage)?;
            save_corpus(&corpus, path).map_err(data)?;
            let perturbed = records.iter().filter(|r| r.consistent.is_some()).count();
            Ok(format!(
                "wrote {}\t{} tables\t{} examples\t{perturbed} perturbed\n",
                path.display(),
                corpus.tables.len(),
                corpus.examples.len()
            ))
        }
        Command::Search => {
            let corpus = open_corpus(cfg)?;
            let mut cache = open_cache(cfg)?;
            let before = cache.len();
            let sets = search_corpus(&corpus, &cfg.search, Some(&mut cache), workers);
            let s = coverage_stats(&sets);
            Ok(format!("searched {}\tnew {}\t{:.4}\t{:.2}\t{}\n", sets.len(), cache.len() - before, s.coverage, s.mean_count, s.distinct_parents))
        }
        Command::Stats => {
            let corpus = open_corpus(cfg)?;
            let cache = open_cache(cfg)?;
            let sets = cached_sets(&corpus, cfg, &cache)?;
            let s = coverage_stats(&sets);
            Ok(format!("{:.4}\t{:.2}\t{}\n", s.coverage, s.mean_count, s.distinct_parents))
        }
        Command::Train => {
            let corpus = open_corpus(cfg)?;
            let mut cache = open_cache(cfg)?;
            let sets = sets_by_id(&search_corpus(&corpus, &cfg.search, Some(&mut cache), workers));
            let mut parser = new_parser(cfg, &corpus);
            if let Some(p) = &cfg.embeddings {
                let table = parser.params.id("embed.word").expect("word table");
                let n = load_embeddings(p, &parser.vocab.clone(), &mut parser.params, table).map_err(data)?;
                log::info!("loaded {n} pretrained word vectors");
            }
            if let Some(dir) = cfg.checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(data)?;
            }
            let report = train(&mut parser, &corpus, &sets, &cfg.train).map_err(data)?;
            if report.epochs.is_empty() {
                parser.params.save(&cfg.checkpoint).map_err(data)?;
            }
            let mut out = String::new();
            for m in &report.epochs {
                out.push_str(&m.line());
                out.push('\n');
            }
            let _ = writeln!(out, "best_epoch\t{}\tdev_accuracy\t{:.4}", report.best_epoch, report.best_dev_acc);
            Ok(out)
        }
        Command::Eval { split } => {
            let corpus = open_corpus(cfg)?;
            let cache = open_cache(cfg)?;
            let sets = sets_by_id(&cached_sets(&corpus, cfg, &cache)?);
            let parser = load_parser(cfg, &corpus)?;
            let r = evaluate(&parser, &corpus, *split, &sets, workers);
            Ok(format!("{}\n", r.line()))
        }
        Command::Parse { example_id } => {
            let corpus = open_corpus(cfg)?;
            let parser = load_parser(cfg, &corpus)?;
            let e = corpus.example(example_id).ok_or_else(|| usage(format!("no example with id `{example_id}`")))?;
            let t = corpus.table_of(e);
            let p = predict(&parser, e, t, parser.config.beam);
            match (&p.program, &p.denotation) {
                (Some(z), Some(d)) => Ok(format!("{}\t{}\n", z.text(t), d)),
                _ => Ok(format!("none\t{:?}\n", p.failure)),
            }
        }
        Command::Align { example_id } => {
            let corpus = open_corpus(cfg)?;
            let parser = load_parser(cfg, &corpus)?;
            let e = corpus.example(example_id).ok_or_else(|| usage(format!("no example with id `{example_id}`")))?;
            let t = corpus.table_of(e);
            let pred = predict(&parser, e, t, parser.config.beam);
            let h = pred
                .abstract_parent
                .or_else(|| pred.beam.first().cloned())
                .ok_or_else(|| data(format!("example {example_id}: the beam found no abstract program")))?;
            let g = Graph::new(&parser.params);
            let ctx = parser.context(&g, &e.question, t, &Dropout::off());
            let (f, m) = parser.alignment_marginals(&g, &ctx, &h).map_err(data)?;
            let mut out = format!("# {h}\n");
            for (k, spans) in f.spans.iter().enumerate() {
                for (s, sp) in spans.iter().enumerate() {
                    let _ = writeln!(out, "{k}\t{}\t{}\t{:.6}", sp.start, sp.end, m.e[k][s]);
                }
            }
            let _ = writeln!(out, "logZ\t{:.6}", m.log_z);
            Ok(out)
        }
    }
}

fn corpus_path(cfg: &GlobalConfig) -> Result<&Path, CliError> {
    cfg.corpus.as_deref().ok_or_else(|| usage("no corpus path: set `corpus = <file>` in the config"))
}

fn open_corpus(cfg: &GlobalConfig) -> Result<Corpus, CliError> {
    let path = corpus_path(cfg)?;
    load_corpus(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn open_cache(cfg: &GlobalConfig) -> Result<SearchCache, CliError> {
    let path = cfg.cache_path();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
    }
    SearchCache::open(&path).map_err(|e| data(format!("{}: {e}", path.display())))
}

/// Sets for every example, from the cache only.
fn cached_sets(corpus: &Corpus, cfg: &GlobalConfig, cache: &SearchCache) -> Result<Vec<crate::search::ConsistentSet>, CliError> {
    let digest = cfg.search.digest();
    let mut out = Vec::with_capacity(corpus.examples.len());
    let mut missing = 0;
    for e in &corpus.examples {
        let t = corpus.table_of(e);
        let key = crate::search::cache_key(&e.id, &digest, &crate::search::example_fingerprint(e, t));
        match cache.get(&key, &e.id, t) {
            Some(s) => out.push(s),
            None => missing += 1,
        }
    }
    if missing > 0 {
        return Err(data(format!("{missing} examples have no cached search result; run `search` first")));
    }
    Ok(out)
}

fn new_parser(cfg: &GlobalConfig, corpus: &Corpus) -> Parser {
    let pos = if cfg.model.pos_dim > 0 { Vocab::build_pos(corpus) } else { Vocab::from_words([]) };
    Parser::new(cfg.model.clone(), Vocab::build(corpus), pos)
}

fn load_parser(cfg: &GlobalConfig, corpus: &Corpus) -> Result<Parser, CliError> {
    let mut p = new_parser(cfg, corpus);
    p.params.load_into(&cfg.checkpoint).map_err(|e| data(format!("{}: {e}", cfg.checkpoint.display())))?;
    Ok(p)
}

/// Parses a split name for `eval --split`.
pub fn parse_split(s: &str) -> Result<Split, CliError> {
    Split::from_name(s).ok_or_else(|| usage(format!("unknown split `{s}` (train, dev, test)")))
}
