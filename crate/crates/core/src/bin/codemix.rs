//! `codemix`: offensive-language classification for code-mixed text.
//!
//! Exit codes: 0 success, 2 config/schema error, 3 data error, 4 numeric
//! error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use codemix::cli::{cmd_eval, cmd_predict, cmd_prepare, cmd_train, RunConfig};
use codemix::error::Result;

#[derive(Parser)]
#[command(
    name = "codemix",
    version,
    about = "Train and run an offensive-language classifier for code-mixed Tamil-English text"
)]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for sampling, shuffling, dropout, and init.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean raw TSVs, concatenate train+dev, build the vocabulary, and
    /// report row/class statistics.
    Prepare(Overrides),
    /// Train a model on a prepared corpus and write a checkpoint.
    Train(Overrides),
    /// Score a labeled test TSV against a checkpoint.
    Eval(Overrides),
    /// Predict labels for a TSV or for lines on standard input.
    Predict(Overrides),
}

/// Flag-level overrides for every `RunConfig` field, kebab-cased.
#[derive(Args)]
struct Overrides {
    #[arg(long)]
    remove_urls: Option<bool>,
    #[arg(long)]
    remove_mentions: Option<bool>,
    #[arg(long)]
    remove_emoji: Option<bool>,
    #[arg(long)]
    remove_punct: Option<bool>,
    #[arg(long)]
    remove_stopwords: Option<bool>,
    #[arg(long)]
    lowercase_latin: Option<bool>,

    #[arg(long)]
    train_path: Option<String>,
    #[arg(long)]
    dev_path: Option<String>,
    #[arg(long)]
    test_path: Option<String>,
    #[arg(long)]
    eval_path: Option<String>,
    #[arg(long)]
    text_col: Option<String>,
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long)]
    id_col: Option<String>,
    /// Comma-separated class names in index order.
    #[arg(long, value_delimiter = ',')]
    label_names: Option<Vec<String>>,

    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    min_freq: Option<usize>,

    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    max_seq_len: Option<usize>,
    #[arg(long)]
    pooler_kind: Option<String>,
    #[arg(long)]
    pool_includes_cls: Option<bool>,
    #[arg(long)]
    encoder_dropout: Option<f64>,

    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    adam_eps: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    balance: Option<bool>,
    #[arg(long)]
    warmup_steps: Option<u64>,
    #[arg(long)]
    grad_clip: Option<f64>,

    #[arg(long)]
    out_dir: Option<String>,
    #[arg(long)]
    vocab_path: Option<String>,
    #[arg(long)]
    checkpoint_path: Option<String>,
    #[arg(long)]
    input_path: Option<String>,
    #[arg(long)]
    output_path: Option<String>,
}

macro_rules! apply {
    ($cfg:ident, $ov:ident, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $ov.$field { $cfg.$field = v; })+
    };
}

macro_rules! apply_opt {
    ($cfg:ident, $ov:ident, $($field:ident),+ $(,)?) => {
        $(if $ov.$field.is_some() { $cfg.$field = $ov.$field; })+
    };
}

fn merged_config(config: Option<&PathBuf>, seed: Option<u64>, ov: Overrides) -> Result<RunConfig> {
    let mut cfg = match config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    apply!(
        cfg,
        ov,
        remove_urls,
        remove_mentions,
        remove_emoji,
        remove_punct,
        remove_stopwords,
        lowercase_latin,
        text_col,
        label_col,
        label_names,
        vocab_size,
        min_freq,
        d_model,
        n_layers,
        n_heads,
        d_ff,
        max_seq_len,
        pooler_kind,
        pool_includes_cls,
        encoder_dropout,
        lr,
        batch_size,
        epochs,
        weight_decay,
        dropout,
        adam_eps,
        beta1,
        beta2,
        balance,
        warmup_steps,
        out_dir,
    );
    apply_opt!(
        cfg,
        ov,
        train_path,
        dev_path,
        test_path,
        eval_path,
        id_col,
        grad_clip,
        vocab_path,
        checkpoint_path,
        input_path,
        output_path,
    );
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Write to stdout, exiting quietly when the reading end has gone away
/// (`codemix eval ... | head` must not panic).
fn emit(text: &str) {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    let result = stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.flush());
    if let Err(err) = result {
        if err.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: failed to write output: {err}");
        std::process::exit(2);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(ov) => {
            let cfg = merged_config(cli.config.as_ref(), cli.seed, ov)?;
            let json = cmd_prepare(&cfg)?;
            emit(&format!("{json}\n"));
        }
        Command::Train(ov) => {
            let cfg = merged_config(cli.config.as_ref(), cli.seed, ov)?;
            let json = cmd_train(&cfg)?;
            emit(&format!("{json}\n"));
        }
        Command::Eval(ov) => {
            let cfg = merged_config(cli.config.as_ref(), cli.seed, ov)?;
            let (table, json) = cmd_eval(&cfg)?;
            emit(&table);
            emit(&format!("{json}\n"));
        }
        Command::Predict(ov) => {
            let cfg = merged_config(cli.config.as_ref(), cli.seed, ov)?;
            let tsv = cmd_predict(&cfg)?;
            emit(&tsv);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
