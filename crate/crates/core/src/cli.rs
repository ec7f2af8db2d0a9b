//! Command-line front end. Every subcommand validates its inputs before
//! it writes anything; results go to stdout, logs to stderr.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use nrm::corpus::{build_vocab, clean_corpus, encode_pairs, load_pairs, write_pairs, Batch, CleanConfig, Side, Vocabulary};
use nrm::decoding::{beam_search, multi_response, DecodeOptions, Response, DEFAULT_BEAM, DEFAULT_MAX_LEN, DEFAULT_MULTI_BEAM};
use nrm::evalstats::{default_categories, fleiss_kappa, friedman_test, score_summary, AnnotationTable, Category, ScoreMatrix};
use nrm::model::{
    is_vector_tensor, load_checkpoint, load_checkpoint_with_precision, save_checkpoint, Dims, ModelParams, Precision, Scheme,
};
use nrm::numerics::Rng;
use nrm::training::{batch_loss, grad_check, init_hybrid_from_pretrained, train, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "nrm", version, about = "Neural Responding Machine: train, decode and evaluate")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Flat `key = value` file; its entries act as `--key value` flags
    /// placed before the command line ones.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (init, shuffling, fresh tensors).
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads for gradient computation.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Suppress log output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Filter a raw post<TAB>response corpus.
    Clean(CleanArgs),
    /// Build a vocabulary for one side of a corpus.
    BuildVocab(BuildVocabArgs),
    /// Train a model with minibatch SGD.
    Train(TrainArgs),
    /// Beam-search responses for each post.
    Generate(GenerateArgs),
    /// Best response per distinct first word from a wide beam.
    MultiGenerate(GenerateArgs),
    /// Per-token perplexity of a model on a pair corpus.
    Perplexity(PerplexityArgs),
    /// Compare analytic gradients with finite differences on a tiny model.
    GradCheck(GradCheckArgs),
    /// Fleiss' kappa and score summary of an annotation file.
    Kappa(KappaArgs),
    /// Friedman test over a subjects x treatments score matrix.
    Friedman(FriedmanArgs),
    /// Print the header and tensor table of a checkpoint.
    InspectCheckpoint(InspectArgs),
}

#[derive(Args, Debug)]
pub struct CleanArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub min_response_tokens: usize,
    #[arg(long, default_value_t = 0)]
    pub max_url_responses: usize,
    #[arg(long, default_value_t = 10)]
    pub max_fanout: usize,
    #[arg(long, default_value_t = 30)]
    pub per_post_cap: usize,
    /// One trivial response per line; replaces the built-in list.
    #[arg(long)]
    pub stoplist: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SideArg {
    Post,
    Response,
}

#[derive(Args, Debug)]
pub struct BuildVocabArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub side: SideArg,
    /// Most frequent tokens kept, not counting the 4 reserved ones.
    #[arg(long, default_value_t = 40_000)]
    pub size: usize,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

#[derive(Args, Debug)]
pub struct VocabPaths {
    #[arg(long)]
    pub post_vocab: PathBuf,
    #[arg(long)]
    pub response_vocab: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[command(flatten)]
    pub vocab: VocabPaths,
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Scheme,
    /// Checkpoint to write.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub clip_norm: f64,
    /// Parameters start uniform in [-r, r].
    #[arg(long, default_value_t = 0.1)]
    pub init_range: f64,
    #[arg(long, default_value_t = 30)]
    pub max_response_len: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 32)]
    pub embed: usize,
    #[arg(long, default_value_t = 64)]
    pub attention: usize,
    #[arg(long, default_value_t = 32)]
    pub stimulus: usize,
    #[arg(long, value_enum, default_value = "f64")]
    pub precision: PrecisionArg,
    /// Continue from an existing checkpoint of the same scheme.
    #[arg(long, conflicts_with_all = ["init_from_loc", "init_from_glo"])]
    pub resume: Option<PathBuf>,
    /// Trained local-scheme checkpoint to warm-start a hybrid model.
    #[arg(long, requires = "init_from_glo")]
    pub init_from_loc: Option<PathBuf>,
    /// Trained global-scheme checkpoint to warm-start a hybrid model.
    #[arg(long, requires = "init_from_loc")]
    pub init_from_glo: Option<PathBuf>,
    /// Keep the encoder(s) and post embeddings fixed.
    #[arg(long)]
    pub freeze_encoder: bool,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub vocab: VocabPaths,
    /// Posts, one per line; anything after a TAB is ignored.
    #[arg(long, required_unless_present = "post")]
    pub input: Option<PathBuf>,
    /// A single post given inline.
    #[arg(long, conflicts_with = "input")]
    pub post: Option<String>,
    /// Beam width (default 10; 500 for multi-generate).
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long)]
    pub suppress_unk: bool,
    /// Emit `post<TAB>rank<TAB>log_prob<TAB>tokens` records with a header.
    #[arg(long)]
    pub listing: bool,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PerplexityArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub vocab: VocabPaths,
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub max_response_len: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GradCheckArgs {
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Scheme,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Args, Debug)]
pub struct KappaArgs {
    /// CSV with header item,rater,label.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Label set as `name:score,...` (default Unsuitable:0,Neutral:1,Suitable:2).
    #[arg(long, value_parser = parse_categories)]
    pub categories: Option<Vec<Category>>,
}

#[derive(Args, Debug)]
pub struct FriedmanArgs {
    /// CSV with a header of treatment names and one row per subject.
    #[arg(long)]
    pub scores: PathBuf,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    s.parse().map_err(|e: nrm::NrmError| e.to_string())
}

fn parse_categories(s: &str) -> std::result::Result<Vec<Category>, String> {
    s.split(',')
        .map(|part| {
            let (name, score) = part
                .split_once(':')
                .ok_or_else(|| format!("category {part:?} is not name:score"))?;
            let score: f64 = score.trim().parse().map_err(|_| format!("bad score in {part:?}"))?;
            Ok(Category {
                name: name.trim().to_string(),
                score,
            })
        })
        .collect()
}

/// Reads `key = value` lines (`#` starts a comment) into flags.
pub fn config_flags(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{}:{}: expected key = value", origin.display(), n + 1))?;
        let key = key.trim().replace('_', "-");
        ensure!(!key.is_empty(), "{}:{}: empty key", origin.display(), n + 1);
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn find_config(argv: &[String]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Inserts config entries right after the subcommand name so explicit
/// flags (which come later) take precedence.
pub fn expand_argv(argv: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = find_config(&argv) else { return Ok(argv) };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    let entries = config_flags(&text, &path)?;

    let root = Cli::command();
    let globals: Vec<String> = root.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect();
    let sub_pos = argv
        .iter()
        .enumerate()
        .skip(1)
        .position(|(_, a)| root.find_subcommand(a).is_some())
        .map(|p| p + 1);
    let Some(sub_pos) = sub_pos else { return Ok(argv) };
    let sub = root.find_subcommand(&argv[sub_pos]).expect("found above");

    let mut known = BTreeSet::new();
    for s in root.get_subcommands() {
        known.extend(s.get_arguments().filter_map(|a| a.get_long().map(str::to_string)));
    }
    known.extend(globals.iter().cloned());

    let mut inserted = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            continue;
        }
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()));
        let Some(arg) = arg else {
            ensure!(known.contains(&key), "config key {key:?} is not a known option");
            continue; // belongs to another subcommand
        };
        // global flags given before the subcommand still beat the file
        let flag = format!("--{key}");
        if argv[1..sub_pos].iter().any(|a| *a == flag || a.starts_with(&format!("{flag}="))) {
            continue;
        }
        if arg.get_action().takes_values() {
            inserted.push(format!("--{key}={value}"));
        } else {
            match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" => inserted.push(format!("--{key}")),
                "false" | "no" | "0" => {}
                _ => bail!("config key {key:?} expects true or false, got {value:?}"),
            }
        }
    }
    let mut out = argv[..=sub_pos].to_vec();
    out.extend(inserted);
    out.extend_from_slice(&argv[sub_pos + 1..]);
    Ok(out)
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    ensure!(path.is_file(), "{what} {} does not exist", path.display());
    Ok(())
}

fn require_output(path: &Path) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    ensure!(parent.is_dir(), "output directory {} does not exist", parent.display());
    ensure!(!path.is_dir(), "output {} is a directory", path.display());
    Ok(())
}

fn stdout() -> BufWriter<io::Stdout> {
    BufWriter::new(io::stdout())
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Clean(a) => clean(a),
        Command::BuildVocab(a) => vocab(a),
        Command::Train(a) => train_cmd(a, cli.seed, cli.threads),
        Command::Generate(a) => generate(a, false),
        Command::MultiGenerate(a) => generate(a, true),
        Command::Perplexity(a) => perplexity(a),
        Command::GradCheck(a) => gradcheck(a, cli.seed),
        Command::Kappa(a) => kappa(a),
        Command::Friedman(a) => friedman(a),
        Command::InspectCheckpoint(a) => inspect(a),
    }
}

fn clean(a: CleanArgs) -> Result<ExitCode> {
    require_file(&a.input, "input")?;
    require_output(&a.output)?;
    let mut config = CleanConfig {
        min_response_tokens: a.min_response_tokens,
        max_url_responses: a.max_url_responses,
        max_fanout: a.max_fanout,
        per_post_cap: a.per_post_cap,
        ..CleanConfig::default()
    };
    if let Some(path) = &a.stoplist {
        require_file(path, "stoplist")?;
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config.stoplist = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    }
    let (pairs, load) = load_pairs(&a.input)?;
    let (kept, report) = clean_corpus(&pairs, &config);
    write_pairs(&a.output, &kept)?;
    let mut out = stdout();
    writeln!(out, "blank_lines\t{}", load.blank_lines)?;
    for (k, v) in [
        ("input", report.input),
        ("empty", report.empty),
        ("trivial", report.trivial),
        ("url", report.url),
        ("fanout", report.fanout),
        ("cap", report.cap),
        ("kept", report.kept),
    ] {
        writeln!(out, "{k}\t{v}")?;
    }
    Ok(ExitCode::SUCCESS)
}

fn vocab(a: BuildVocabArgs) -> Result<ExitCode> {
    require_file(&a.input, "input")?;
    require_output(&a.output)?;
    let (pairs, _) = load_pairs(&a.input)?;
    let side = match a.side {
        SideArg::Post => Side::Post,
        SideArg::Response => Side::Response,
    };
    let (vocab, coverage) = build_vocab(&pairs, side, a.size)?;
    vocab.save(&a.output)?;
    let mut out = stdout();
    writeln!(out, "side\t{side}\nsize\t{}\ncoverage\t{coverage:.6}", vocab.len())?;
    Ok(ExitCode::SUCCESS)
}

fn load_vocabs(v: &VocabPaths) -> Result<(Vocabulary, Vocabulary)> {
    require_file(&v.post_vocab, "post vocabulary")?;
    require_file(&v.response_vocab, "response vocabulary")?;
    Ok((Vocabulary::load(&v.post_vocab)?, Vocabulary::load(&v.response_vocab)?))
}

fn check_model_vocabs(params: &ModelParams, post: &Vocabulary, resp: &Vocabulary) -> Result<()> {
    ensure!(
        params.dims.post_vocab == post.len() && params.dims.response_vocab == resp.len(),
        "checkpoint vocabulary sizes {}/{} do not match the given vocabularies {}/{}",
        params.dims.post_vocab,
        params.dims.response_vocab,
        post.len(),
        resp.len()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs, seed: u64, threads: usize) -> Result<ExitCode> {
    require_file(&a.pairs, "pairs")?;
    let (post_vocab, resp_vocab) = load_vocabs(&a.vocab)?;
    require_output(&a.output)?;
    ensure!(threads >= 1, "--threads must be at least 1");
    ensure!(a.init_range > 0.0, "--init-range must be positive");
    let config = TrainConfig {
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        epochs: a.epochs,
        clip_norm: a.clip_norm,
        seed,
        precision: a.precision.into(),
        init_lo: -a.init_range,
        init_hi: a.init_range,
        max_response_len: a.max_response_len,
        threads,
        freeze_encoder: a.freeze_encoder,
    };
    config.validate()?;
    let dims = Dims {
        hidden: a.hidden,
        embed: a.embed,
        attention: a.attention,
        stimulus: a.stimulus,
        post_vocab: post_vocab.len(),
        response_vocab: resp_vocab.len(),
    };
    dims.validate()?;

    let init = match (&a.resume, &a.init_from_loc, &a.init_from_glo) {
        (Some(path), _, _) => {
            require_file(path, "checkpoint")?;
            Some(load_checkpoint(path)?)
        }
        (None, Some(loc), Some(glo)) => {
            ensure!(a.scheme == Scheme::Hybrid, "--init-from-loc/--init-from-glo need --scheme hyb");
            require_file(loc, "local checkpoint")?;
            require_file(glo, "global checkpoint")?;
            let (local, global) = (load_checkpoint(loc)?, load_checkpoint(glo)?);
            let mut rng = Rng::new(seed);
            let (params, provenance) =
                init_hybrid_from_pretrained(&local, &global, &mut rng, config.init_lo, config.init_hi)?;
            for (name, p) in &provenance {
                info!("hybrid init: {name} <- {p}");
            }
            Some(params)
        }
        _ => None,
    };
    if let Some(p) = &init {
        ensure!(
            p.dims == dims,
            "initial checkpoint dims {:?} differ from requested {:?}",
            p.dims,
            dims
        );
    }

    let (pairs, _) = load_pairs(&a.pairs)?;
    let encoded = encode_pairs(&pairs, &post_vocab, &resp_vocab, Some(a.max_response_len));
    let mut out = stdout();
    writeln!(out, "epoch\tmean_nll\tperplexity")?;
    let mut write_err = None;
    let (params, _) = train(&encoded, a.scheme, dims, &config, init, |e| {
        info!("epoch {} mean nll {:.4} perplexity {:.3}", e.epoch, e.mean_nll, e.perplexity);
        if let Err(err) = writeln!(out, "{e}") {
            write_err.get_or_insert(err);
        }
    })?;
    if let Some(err) = write_err {
        return Err(err.into());
    }
    save_checkpoint(&params, &a.output, config.precision)?;
    Ok(ExitCode::SUCCESS)
}

fn read_posts(a: &GenerateArgs) -> Result<Vec<String>> {
    if let Some(p) = &a.post {
        return Ok(vec![p.clone()]);
    }
    let path = a.input.as_ref().expect("clap requires input or post");
    require_file(path, "input")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| l.split('\t').next().unwrap_or("").trim().to_string())
        .collect())
}

fn generate(a: GenerateArgs, multi: bool) -> Result<ExitCode> {
    require_file(&a.checkpoint, "checkpoint")?;
    let (post_vocab, resp_vocab) = load_vocabs(&a.vocab)?;
    if let Some(o) = &a.output {
        require_output(o)?;
    }
    let beam = a.beam.unwrap_or(if multi { DEFAULT_MULTI_BEAM } else { DEFAULT_BEAM });
    ensure!(beam >= 1, "--beam must be at least 1");
    let params = load_checkpoint(&a.checkpoint)?;
    check_model_vocabs(&params, &post_vocab, &resp_vocab)?;
    let posts = read_posts(&a)?;
    for (i, p) in posts.iter().enumerate() {
        ensure!(!p.is_empty(), "post {} is empty", i + 1);
    }
    let opts = DecodeOptions {
        suppress_unk: a.suppress_unk,
    };

    let mut results: Vec<Vec<Response>> = Vec::with_capacity(posts.len());
    for post in &posts {
        let tokens: Vec<&str> = post.split_whitespace().collect();
        let ids = post_vocab.encode(&tokens, false);
        let responses = if multi {
            multi_response(&params, &ids, beam, a.max_len, &opts)?
        } else {
            beam_search(&params, &ids, beam, a.max_len, &opts)?
        };
        results.push(responses);
    }

    let mut sink: Box<dyn Write> = match &a.output {
        Some(path) => Box::new(BufWriter::new(
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(stdout()),
    };
    if a.listing {
        writeln!(sink, "post\trank\tlog_prob\ttokens")?;
    }
    for (i, (post, responses)) in posts.iter().zip(&results).enumerate() {
        if !a.listing {
            if i > 0 {
                writeln!(sink)?;
            }
            writeln!(sink, "# {post}")?;
        }
        for (rank, r) in responses.iter().enumerate() {
            if a.listing {
                write!(sink, "{}\t", i + 1)?;
            }
            writeln!(sink, "{}", r.format_line(rank + 1, &resp_vocab))?;
        }
    }
    sink.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn perplexity(a: PerplexityArgs) -> Result<ExitCode> {
    require_file(&a.checkpoint, "checkpoint")?;
    require_file(&a.pairs, "pairs")?;
    let (post_vocab, resp_vocab) = load_vocabs(&a.vocab)?;
    let params = load_checkpoint(&a.checkpoint)?;
    check_model_vocabs(&params, &post_vocab, &resp_vocab)?;
    let (pairs, _) = load_pairs(&a.pairs)?;
    let encoded = encode_pairs(&pairs, &post_vocab, &resp_vocab, a.max_response_len);
    let usable: Vec<_> = encoded.iter().filter(|p| !p.post.is_empty()).collect();
    ensure!(!usable.is_empty(), "no pairs with a non-empty post");
    let (mean, tokens) = batch_loss(&params, &Batch::from_pairs(&usable))?;
    let mut out = stdout();
    writeln!(out, "pairs\t{}\ntokens\t{tokens}\nmean_nll\t{mean:.6}\nperplexity\t{:.6}", usable.len(), mean.exp())?;
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(a: GradCheckArgs, seed: u64) -> Result<ExitCode> {
    ensure!(a.tolerance > 0.0, "--tolerance must be positive");
    let report = grad_check(a.scheme, seed, a.tolerance)?;
    let mut out = stdout();
    write!(out, "{report}")?;
    writeln!(out, "max_rel_error\t{:.3e}", report.max_rel_error())?;
    out.flush()?;
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        warn!("gradient check failed for: {}", report.failures().join(", "));
        Ok(ExitCode::FAILURE)
    }
}

fn kappa(a: KappaArgs) -> Result<ExitCode> {
    require_file(&a.annotations, "annotations")?;
    let table = AnnotationTable::load(&a.annotations, a.categories.unwrap_or_else(default_categories))?;
    let summary = score_summary(&table)?;
    let kappa = fleiss_kappa(&table)?;
    let mut out = stdout();
    writeln!(out, "items\t{}\nraters\t{}", table.item_count(), table.rater_count())?;
    writeln!(out, "mean_score\t{:.6}", summary.mean)?;
    for (name, f) in &summary.fractions {
        writeln!(out, "fraction\t{name}\t{f:.6}")?;
    }
    writeln!(out, "fleiss_kappa\t{kappa:.6}")?;
    Ok(ExitCode::SUCCESS)
}

fn friedman(a: FriedmanArgs) -> Result<ExitCode> {
    require_file(&a.scores, "scores")?;
    let m = ScoreMatrix::load(&a.scores)?;
    let r = friedman_test(&m.rows)?;
    let mut out = stdout();
    writeln!(out, "statistic\t{:.6}\ndof\t{}\np_value\t{:.6e}", r.statistic, r.dof, r.p_value)?;
    for (name, rank) in m.treatments.iter().zip(&r.average_ranks) {
        writeln!(out, "average_rank\t{name}\t{rank:.4}")?;
    }
    Ok(ExitCode::SUCCESS)
}

fn inspect(a: InspectArgs) -> Result<ExitCode> {
    require_file(&a.checkpoint, "checkpoint")?;
    let (params, precision) = load_checkpoint_with_precision(&a.checkpoint)?;
    let d = params.dims;
    let mut out = stdout();
    writeln!(out, "scheme\t{}", params.scheme)?;
    writeln!(out, "precision\tf{}", precision.bytes() * 8)?;
    writeln!(
        out,
        "dims\thidden={} embed={} attention={} stimulus={} post_vocab={} response_vocab={}",
        d.hidden, d.embed, d.attention, d.stimulus, d.post_vocab, d.response_vocab
    )?;
    writeln!(out, "parameters\t{}", params.parameter_count())?;
    for (name, t) in params.tensors() {
        let shape = if is_vector_tensor(&name) {
            format!("{}", t.rows())
        } else {
            format!("{}x{}", t.rows(), t.cols())
        };
        writeln!(out, "{name}\t{shape}\t{:.6e}", t.norm())?;
    }
    Ok(ExitCode::SUCCESS)
}
