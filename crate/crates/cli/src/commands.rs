use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use draaseq::inference::{chat_respond, ChatOptions};
use draaseq::text::{corpus_fingerprint, load_corpus, load_embeddings, EmbeddingTable, SplitPart};
use draaseq::train::{
    evaluate, history_csv, load_checkpoint, prepare_splits, save_checkpoint, train, EvalReport,
    TrainConfig, TrainData, TrainOptions,
};
use draaseq::Error;

use crate::CliResult;

pub struct TrainArgs {
    pub corpus: PathBuf,
    pub config: String,
    pub embeddings: Option<PathBuf>,
    pub out: PathBuf,
    pub history: Option<PathBuf>,
    pub seed: u64,
    pub timing: bool,
}

/// Where the history CSV goes when no path is given: next to the checkpoint.
pub fn default_history_path(out: &Path) -> PathBuf {
    out.with_extension("history.csv")
}

fn report_line(label: &str, n: usize, r: &EvalReport) -> String {
    format!(
        "{label}: examples={n} token_acc={:.4} exact_acc={:.4} loss={:.4}",
        r.token_acc, r.exact_acc, r.loss
    )
}

/// Preprocess, split, train, then write the checkpoint and history CSV.
pub fn run_train(args: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut config = TrainConfig::resolve(&args.config)?;
    config.seed = args.seed;
    config.validate()?;
    let pairs = load_corpus(&args.corpus)?;
    let (prepared, split) = prepare_splits(&pairs, &config)?;
    writeln!(
        out,
        "corpus: {} pairs, vocabulary {} tokens, split {}/{}/{}",
        pairs.len(),
        prepared.vocab.len(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    )?;

    let embedding_seed = config.seed.wrapping_add(2);
    let mut embedding = match &args.embeddings {
        Some(path) => {
            let table = load_embeddings(path, &prepared.vocab, config.embed_dim, embedding_seed)?;
            writeln!(
                out,
                "embeddings: {:.1}% of vocabulary covered",
                100.0 * table.coverage
            )?;
            table
        }
        None => EmbeddingTable::random(&prepared.vocab, config.embed_dim, embedding_seed)?,
    };
    embedding.trainable = config.trainable_embeddings;

    let data = TrainData {
        vocab: &prepared.vocab,
        train: &split.train,
        val: &split.val,
        corpus_fingerprint: prepared.fingerprint,
    };
    let options = TrainOptions {
        record_timing: args.timing,
    };
    let epochs = config.epochs;
    let mut progress_err = None;
    let checkpoint = train(data, &config, embedding, options, |r| {
        let val = match (r.val_token_acc, r.val_exact_acc) {
            (Some(t), Some(e)) => format!(" val_token_acc={t:.4} val_exact_acc={e:.4}"),
            _ => String::new(),
        };
        if let Err(e) = writeln!(
            out,
            "epoch {}/{epochs} train_loss={:.4} train_token_acc={:.4}{val}",
            r.epoch, r.train_loss, r.train_token_acc
        ) {
            progress_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = progress_err {
        return Err(e.into());
    }

    save_checkpoint(&checkpoint, &args.out)?;
    let history_path = args
        .history
        .clone()
        .unwrap_or_else(|| default_history_path(&args.out));
    fs::write(&history_path, history_csv(&checkpoint.history))
        .map_err(|e| format!("{}: {e}", history_path.display()))?;

    writeln!(
        out,
        "{}",
        report_line(
            "train",
            split.train.len(),
            &evaluate(&checkpoint, &split.train)?
        )
    )?;
    if !split.val.is_empty() {
        writeln!(
            out,
            "{}",
            report_line("val", split.val.len(), &evaluate(&checkpoint, &split.val)?)
        )?;
    }
    writeln!(
        out,
        "wrote {} (model {}) and {}",
        args.out.display(),
        checkpoint.model_id()?,
        history_path.display()
    )?;
    Ok(())
}

/// Score one split of `corpus` with a checkpoint trained on that corpus.
pub fn run_eval(
    checkpoint: &Path,
    corpus: &Path,
    part: SplitPart,
    out: &mut dyn Write,
) -> CliResult<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let pairs = load_corpus(corpus)?;
    let found = corpus_fingerprint(&pairs);
    if found != ckpt.corpus_fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: ckpt.corpus_fingerprint,
            found,
        }
        .into());
    }
    let (_, split) = prepare_splits(&pairs, &ckpt.config)?;
    let examples = split.part(part);
    let name = match part {
        SplitPart::Train => "train",
        SplitPart::Val => "val",
        SplitPart::Test => "test",
    };
    if examples.is_empty() {
        return Err(format!("the {name} split of this corpus is empty").into());
    }
    writeln!(
        out,
        "{}",
        report_line(name, examples.len(), &evaluate(&ckpt, examples)?)
    )?;
    Ok(())
}

/// Answer each input line with `bot: <reply>` until EOF or `/quit`.
pub fn run_chat(
    checkpoint: &Path,
    max_len: Option<usize>,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    prompt: bool,
) -> CliResult<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let options = ChatOptions {
        max_len,
        include_attention: false,
    };
    let mut line = String::new();
    loop {
        if prompt {
            write!(out, "you: ")?;
            out.flush()?;
        }
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        let message = line.trim();
        if message == "/quit" {
            break;
        }
        if message.is_empty() {
            writeln!(out, "(empty message)")?;
            continue;
        }
        match chat_respond(&ckpt, message, &options) {
            Ok(reply) => writeln!(out, "bot: {}", reply.reply_text)?,
            Err(Error::EmptyUtterance) => writeln!(out, "(empty message)")?,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}
