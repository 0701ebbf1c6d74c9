//! One binary for the whole pipeline: normalize text, break standard
//! sentences into colloquial form, generate aligned corpora, train the
//! transduction model, standardize colloquial text (model or rules), score
//! with BLEU, and run dataset evaluations.

mod config;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use guyesh_core::baseline::{rule_standardize, unigram_counts, BaselinePolicy};
use guyesh_core::bleu::{corpus_bleu, Smoothing};
use guyesh_core::gencorpus::{break_sentence, generate_corpus, sentence_rng, GeneratorConfig};
use guyesh_core::harness::{
    load_dataset, render_report, run_system, score_hypotheses, split_count_warning, ColumnMap,
    ReferenceType, Split,
};
use guyesh_core::model::{
    load_model, save_model, standardize, train_from_files, DecodeConfig, DecodeMode, TrainOptions,
};
use guyesh_core::normalize::{normalize_text, tokenize, NormalizationConfig, TokenSequence};
use guyesh_core::rules::{
    invert_rule_set, parse_rule_file, rule_content_hash, shipped_rule_set, InvertedRuleSet,
    RuleSet, DEFAULT_RULES,
};
use guyesh_core::textgen::sample_sentences;

use config::PipelineConfig;

#[derive(Parser)]
#[command(name = "guyesh", disable_version_flag = true)]
#[command(about = "Colloquial Persian standardization pipeline")]
struct Cli {
    /// Worker threads for corpus-scale commands.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Key=value configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Canonicalize Perso-Arabic text (characters, digits, ZWNJ, spacing).
    Normalize(NormalizeArgs),
    /// Break standard sentences into colloquial form (text out only).
    Break(BreakArgs),
    /// Generate an aligned synthetic corpus (.fab/.fa/.trace/.meta).
    Generate(GenerateArgs),
    /// Train the transduction model from an aligned corpus.
    Train(TrainArgs),
    /// Convert colloquial text to standard text (model or rules).
    Standardize(StandardizeArgs),
    /// Corpus BLEU of a hypothesis file against a reference file.
    Bleu(BleuArgs),
    /// Convert an external dataset layout into the canonical TSV.
    Import(ImportArgs),
    /// Evaluate a system on a dataset split and print a report.
    Eval(EvalArgs),
    /// Emit synthetic standard-Persian demo sentences.
    Sample(SampleArgs),
    /// Print version, rule-file hash and model format version.
    Version,
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    map_arabic_variants: bool,
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    strip_diacritics: bool,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    normalize_digits: bool,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    collapse_whitespace: bool,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    preserve_zwnj: bool,
}

#[derive(Args)]
struct BreakArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Probability of skipping an applicable conversion site.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    rules: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out_prefix: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Stop after this many emitted sentences.
    #[arg(long)]
    max: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Prefix of the .fab/.fa/.trace corpus files.
    #[arg(long)]
    corpus_prefix: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    #[arg(long)]
    lm_order: Option<usize>,
    /// Add-alpha smoothing over phrase candidates.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    identity_weight: Option<f64>,
    #[arg(long)]
    lm_weight: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemKind {
    Identity,
    Rules,
    Model,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecodeModeArg {
    Greedy,
    Beam,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    MostFrequent,
    FirstListed,
}

#[derive(Args)]
struct StandardizeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    /// Trained model file; switches to the learned transducer.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Use the inverted rule set instead of a model.
    #[arg(long, default_value_t = false)]
    rules_based: bool,
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Standard text whose unigram counts drive the most-frequent policy.
    #[arg(long)]
    freq_from: Option<PathBuf>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    #[arg(long, value_enum, default_value_t = DecodeModeArg::Greedy)]
    mode: DecodeModeArg,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    lm_weight: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SmoothArg {
    Exp,
    None,
}

#[derive(Args)]
struct BleuArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, value_enum, default_value_t = SmoothArg::Exp)]
    smooth: SmoothArg,
}

#[derive(Args)]
struct ImportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long = "out")]
    output: PathBuf,
    /// e.g. source=0,word=1,style=2,genre=3,sep=tab ("-" disables a column)
    #[arg(long, default_value = "")]
    col_map: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Dev,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefArg {
    Word,
    Style,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory holding <split>.tsv in the canonical layout.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    split: SplitArg,
    #[arg(long, value_enum)]
    system: SystemKind,
    #[arg(long)]
    model_file: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long = "ref", value_enum)]
    reference: RefArg,
    /// Also write the report to this path.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DecodeModeArg::Greedy)]
    mode: DecodeModeArg,
    #[arg(long)]
    beam: Option<usize>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "out")]
    output: PathBuf,
}

fn main() {
    // --version carries runtime information (rule hash), so it is handled
    // before clap's static parsing.
    let argv: Vec<String> = std::env::args().collect();
    if argv.iter().skip(1).any(|a| a == "--version" || a == "-V") {
        print_version();
        std::process::exit(0);
    }
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn print_version() {
    println!(
        "guyesh {} (rule-file sha256 {}, model format v{})",
        env!("CARGO_PKG_VERSION"),
        rule_content_hash(DEFAULT_RULES),
        guyesh_core::MODEL_FORMAT_VERSION
    );
}

fn run(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build_global()
        .context("cannot build thread pool")?;
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Normalize(args) => cmd_normalize(args),
        Command::Break(args) => cmd_break(args, &cfg),
        Command::Generate(args) => cmd_generate(args, &cfg),
        Command::Train(args) => cmd_train(args, &cfg),
        Command::Standardize(args) => cmd_standardize(args, &cfg),
        Command::Bleu(args) => cmd_bleu(args),
        Command::Import(args) => cmd_import(args),
        Command::Eval(args) => cmd_eval(args, &cfg),
        Command::Sample(args) => cmd_sample(args, &cfg),
        Command::Version => {
            print_version();
            Ok(())
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .with_context(|| format!("cannot read {}", path.display()))
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{line}").with_context(|| format!("cannot write {}", path.display()))?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

/// Loads the rule set from a flag, the config file, or the shipped default,
/// together with the hash of its content.
fn resolve_rules(flag: &Option<PathBuf>, cfg: &PipelineConfig) -> Result<(RuleSet, String)> {
    let path = flag.clone().or_else(|| cfg.rule_file.clone());
    match path {
        Some(path) => {
            let rs = parse_rule_file(&path)?;
            let content = std::fs::read_to_string(&path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            Ok((rs, rule_content_hash(&content)))
        }
        None => Ok((shipped_rule_set().clone(), rule_content_hash(DEFAULT_RULES))),
    }
}

fn cmd_normalize(args: NormalizeArgs) -> Result<()> {
    let ncfg = NormalizationConfig {
        map_arabic_variants: args.map_arabic_variants,
        strip_diacritics: args.strip_diacritics,
        normalize_digits: args.normalize_digits,
        collapse_whitespace: args.collapse_whitespace,
        preserve_zwnj: args.preserve_zwnj,
    };
    let lines = read_lines(&args.input)?;
    let out: Vec<String> = lines.par_iter().map(|l| normalize_text(l, &ncfg)).collect();
    write_lines(&args.output, &out)
}

fn cmd_break(args: BreakArgs, cfg: &PipelineConfig) -> Result<()> {
    let (rs, hash) = resolve_rules(&args.rules, cfg)?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let p = args.p.or(cfg.skip_probability).unwrap_or(0.1);
    if !(0.0..=1.0).contains(&p) {
        bail!("--p must lie in [0, 1], got {p}");
    }
    let ncfg = NormalizationConfig::default();
    let lines = read_lines(&args.input)?;
    let out: Vec<String> = lines
        .par_iter()
        .enumerate()
        .map(|(idx, raw)| {
            let seq = tokenize(&normalize_text(raw, &ncfg));
            if seq.is_empty() {
                return String::new();
            }
            let mut rng = sentence_rng(seed, idx as u64);
            let (pair, _) = break_sentence(&seq, &rs, p, &mut rng);
            pair.colloquial.to_string()
        })
        .collect();
    write_lines(&args.output, &out)?;
    let meta = format!("seed={seed}\nskip_probability={p}\nrule_hash={hash}\nlines={}\n", out.len());
    std::fs::write(args.output.with_extension("meta"), meta)
        .with_context(|| "cannot write meta file".to_string())?;
    Ok(())
}

fn cmd_generate(args: GenerateArgs, cfg: &PipelineConfig) -> Result<()> {
    let (rs, hash) = resolve_rules(&args.rules, cfg)?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let p = args.p.or(cfg.skip_probability).unwrap_or(0.1);
    if !(0.0..=1.0).contains(&p) {
        bail!("--p must lie in [0, 1], got {p}");
    }
    let gen_cfg = GeneratorConfig { skip_probability: p, rng_seed: seed, max_sentences: args.max };
    let input = File::open(&args.input)
        .with_context(|| format!("cannot open {}", args.input.display()))?;
    let summary = generate_corpus(BufReader::new(input), &rs, &gen_cfg, &args.out_prefix, &hash)?;
    println!(
        "wrote {} sentences ({} skipped), {} conversion sites ({} fired, {} skipped)",
        summary.lines_written,
        summary.lines_skipped,
        summary.sites.applicable,
        summary.sites.fired,
        summary.sites.skipped
    );
    Ok(())
}

fn cmd_train(args: TrainArgs, cfg: &PipelineConfig) -> Result<()> {
    let opts = TrainOptions {
        lm_order: args.lm_order.or(cfg.lm_order).unwrap_or(3),
        phrase_alpha: args.alpha.unwrap_or(0.1),
        identity_weight: args.identity_weight.unwrap_or(0.1),
        lm_weight: args.lm_weight.or(cfg.lm_weight).unwrap_or(1.0),
    };
    let prefix = &args.corpus_prefix;
    let (model, stats) = train_from_files(
        &prefix.with_extension("fab"),
        &prefix.with_extension("fa"),
        &prefix.with_extension("trace"),
        &opts,
    )?;
    save_model(&model, &args.output)?;
    let resolved = PipelineConfig {
        lm_order: Some(opts.lm_order),
        lm_weight: Some(opts.lm_weight),
        ..cfg.clone()
    };
    let (_, hash) = resolve_rules(&None, cfg)?;
    let meta = format!(
        "{}corpus_prefix={}\nphrase_alpha={}\nidentity_weight={}\npairs_used={}\npairs_rejected={}\n",
        resolved.stamp(&hash),
        prefix.display(),
        opts.phrase_alpha,
        opts.identity_weight,
        stats.pairs_used,
        stats.pairs_rejected
    );
    std::fs::write(args.output.with_extension("meta"), meta)
        .with_context(|| "cannot write meta file".to_string())?;
    println!(
        "trained on {} pairs ({} rejected), {} source phrases",
        stats.pairs_used, stats.pairs_rejected, stats.source_phrases
    );
    Ok(())
}

fn decode_config(mode: DecodeModeArg, beam: Option<usize>, lm_weight: Option<f64>, cfg: &PipelineConfig) -> DecodeConfig {
    DecodeConfig {
        mode: match mode {
            DecodeModeArg::Greedy => DecodeMode::Greedy,
            DecodeModeArg::Beam => DecodeMode::Beam,
        },
        beam_size: beam.or(cfg.beam).unwrap_or(4),
        lm_weight: lm_weight.or(cfg.lm_weight),
    }
}

fn build_rule_system(
    rules_flag: &Option<PathBuf>,
    freq_from: &Option<PathBuf>,
    policy: Option<PolicyArg>,
    cfg: &PipelineConfig,
) -> Result<(InvertedRuleSet, BaselinePolicy)> {
    let (rs, _) = resolve_rules(rules_flag, cfg)?;
    let inverted = invert_rule_set(&rs);
    let policy = match (policy, freq_from) {
        (Some(PolicyArg::FirstListed), _) => BaselinePolicy::first_listed(),
        (Some(PolicyArg::MostFrequent), None) => {
            bail!("--policy most-frequent requires --freq-from <standard text file>")
        }
        (_, Some(path)) => {
            let lines = read_lines(path)?;
            let seqs: Vec<TokenSequence> = lines.iter().map(|l| tokenize(l)).collect();
            BaselinePolicy::most_frequent(unigram_counts(seqs.iter()))
        }
        (None, None) => BaselinePolicy::first_listed(),
    };
    Ok((inverted, policy))
}

fn cmd_standardize(args: StandardizeArgs, cfg: &PipelineConfig) -> Result<()> {
    let lines = read_lines(&args.input)?;
    let ncfg = NormalizationConfig::default();
    let out: Vec<String> = match (&args.model, args.rules_based) {
        (Some(model_path), false) => {
            let model = load_model(model_path)?;
            let dcfg = decode_config(args.mode, args.beam, args.lm_weight, cfg);
            lines
                .par_iter()
                .map(|l| standardize(&tokenize(&normalize_text(l, &ncfg)), &model, &dcfg).to_string())
                .collect()
        }
        (None, true) => {
            let (inverted, policy) = build_rule_system(&args.rules, &args.freq_from, args.policy, cfg)?;
            lines
                .par_iter()
                .map(|l| {
                    rule_standardize(&tokenize(&normalize_text(l, &ncfg)), &inverted, &policy)
                        .to_string()
                })
                .collect()
        }
        (Some(_), true) => bail!("choose either --model or --rules-based, not both"),
        (None, false) => bail!("standardize needs --model <file> or --rules-based"),
    };
    write_lines(&args.output, &out)?;
    let (_, hash) = resolve_rules(&args.rules, cfg)?;
    let system = match &args.model {
        Some(path) => format!("model={}", path.display()),
        None => "system=rules".to_string(),
    };
    let meta = format!("{system}\nrule_hash={hash}\nlines={}\n", out.len());
    std::fs::write(args.output.with_extension("meta"), meta)
        .with_context(|| "cannot write meta file".to_string())?;
    Ok(())
}

fn cmd_bleu(args: BleuArgs) -> Result<()> {
    // Input is pre-tokenized: split on whitespace only.
    let to_seqs = |path: &Path| -> Result<Vec<TokenSequence>> {
        read_lines(path)?
            .iter()
            .map(|l| {
                TokenSequence::new(l.split_whitespace().map(str::to_string).collect())
                    .map_err(|e| anyhow!("{}: {e}", path.display()))
            })
            .collect()
    };
    let hyp = to_seqs(&args.hyp)?;
    let reference = to_seqs(&args.reference)?;
    let smoothing = match args.smooth {
        SmoothArg::Exp => Smoothing::Exp,
        SmoothArg::None => Smoothing::None,
    };
    let score = corpus_bleu(&hyp, &reference, smoothing)?;
    println!("{:.1}", score.score);
    println!(
        "precisions={:.4},{:.4},{:.4},{:.4} bp={:.4} hyp_len={} ref_len={} exact={}",
        score.ngram_precisions[0],
        score.ngram_precisions[1],
        score.ngram_precisions[2],
        score.ngram_precisions[3],
        score.brevity_penalty,
        score.hyp_length,
        score.ref_length,
        score.score
    );
    Ok(())
}

fn cmd_import(args: ImportArgs) -> Result<()> {
    let map = ColumnMap::parse(&args.col_map)?;
    let records = load_dataset(&args.input, &map)?;
    guyesh_core::harness::write_dataset(&args.output, &records)
        .with_context(|| format!("cannot write {}", args.output.display()))?;
    println!("imported {} records", records.len());
    Ok(())
}

fn cmd_eval(args: EvalArgs, cfg: &PipelineConfig) -> Result<()> {
    let data_dir = args
        .data
        .clone()
        .or_else(|| cfg.data_dir.clone())
        .ok_or_else(|| anyhow!("--data <dir> is required (or data_dir in the config)"))?;
    let split = match args.split {
        SplitArg::Dev => Split::Dev,
        SplitArg::Test => Split::Test,
    };
    let path = data_dir.join(format!("{}.tsv", split.as_str()));
    let records = load_dataset(&path, &ColumnMap::default())?;
    if let Some(warning) = split_count_warning(split, records.len()) {
        eprintln!("{warning}");
    }
    let reference = match args.reference {
        RefArg::Word => ReferenceType::Word,
        RefArg::Style => ReferenceType::Style,
    };

    type System = Box<dyn Fn(&TokenSequence) -> Result<TokenSequence, String>>;
    let (name, system): (&str, System) =
        match args.system {
            SystemKind::Identity => ("identity", Box::new(|s: &TokenSequence| Ok(s.clone()))),
            SystemKind::Rules => {
                let (inverted, policy) = build_rule_system(&args.rules, &None, None, cfg)?;
                (
                    "rules",
                    Box::new(move |s: &TokenSequence| Ok(rule_standardize(s, &inverted, &policy))),
                )
            }
            SystemKind::Model => {
                let path = args
                    .model_file
                    .clone()
                    .ok_or_else(|| anyhow!("--system model requires --model-file"))?;
                let model = load_model(&path)?;
                let dcfg = decode_config(args.mode, args.beam, None, cfg);
                ("model", Box::new(move |s: &TokenSequence| Ok(standardize(s, &model, &dcfg))))
            }
        };

    let hypotheses = run_system(system.as_ref(), &records)?;
    let report = score_hypotheses(name, &hypotheses, &records, reference)?;
    let (_, hash) = resolve_rules(&args.rules, cfg)?;
    let resolved = PipelineConfig {
        rule_file: args.rules.clone().or_else(|| cfg.rule_file.clone()),
        beam: args.beam.or(cfg.beam),
        ..cfg.clone()
    };
    let mut text = render_report(&report);
    text.push_str(&format!("split={}\n", split.as_str()));
    text.push_str(&format!("data={}\n", path.display()));
    text.push_str(&resolved.stamp(&hash));
    print!("{text}");
    if let Some(report_path) = &args.report {
        std::fs::write(report_path, &text)
            .with_context(|| format!("cannot write {}", report_path.display()))?;
    }
    Ok(())
}

fn cmd_sample(args: SampleArgs, cfg: &PipelineConfig) -> Result<()> {
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let lines = sample_sentences(args.n, seed);
    write_lines(&args.output, &lines)
}
