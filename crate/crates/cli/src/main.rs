use std::io::{self, IsTerminal};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use draaseq::text::SplitPart;
use draaseq_cli::commands::{run_chat, run_eval, run_train, TrainArgs};
use draaseq_cli::server::{serve, ServeArgs};
use draaseq_cli::CliResult;

#[derive(Parser)]
#[command(
    name = "draaseq",
    version,
    about = "Train, evaluate and serve an attention seq2seq chatbot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Val,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess a corpus, train a model and write a checkpoint plus history CSV.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// C1, C2, C3 or a path to a key=value config file.
        #[arg(long, default_value = "C2")]
        config: String,
        /// GloVe-format text vectors; random initialization when omitted.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the checkpoint path with a .history.csv extension.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Record per-epoch wall time (makes the history non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Report token accuracy, exact-match accuracy and loss on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
    /// Answer questions read line by line from standard input.
    Chat {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        max_len: Option<usize>,
    },
    /// Serve the HTTP chat API.
    Serve {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Static files served at `/` when the directory exists.
        #[arg(long, default_value = "chat-ui/dist")]
        static_dir: PathBuf,
    },
}

fn init_logging() {
    let level = std::env::var("DRAASEQ_LOG").unwrap_or_else(|_| "info".into());
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp_millis()
        .target(env_logger::Target::Stderr)
        .init();
}

fn run(cli: Cli) -> CliResult<()> {
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Train {
            corpus,
            config,
            embeddings,
            out,
            history,
            seed,
            timing,
        } => run_train(
            &TrainArgs {
                corpus,
                config,
                embeddings,
                out,
                history,
                seed,
                timing,
            },
            &mut stdout,
        ),
        Command::Eval {
            checkpoint,
            corpus,
            split,
        } => {
            let part = match split {
                Split::Train => SplitPart::Train,
                Split::Val => SplitPart::Val,
                Split::Test => SplitPart::Test,
            };
            run_eval(&checkpoint, &corpus, part, &mut stdout)
        }
        Command::Chat {
            checkpoint,
            max_len,
        } => {
            let stdin = io::stdin();
            let prompt = stdin.is_terminal();
            run_chat(&checkpoint, max_len, &mut stdin.lock(), &mut stdout, prompt)
        }
        Command::Serve {
            checkpoint,
            bind,
            port,
            static_dir,
        } => {
            drop(stdout);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve(ServeArgs {
                checkpoint,
                bind,
                port,
                static_dir: Some(static_dir),
            }))
        }
    }
}

fn main() -> ExitCode {
    init_logging();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
