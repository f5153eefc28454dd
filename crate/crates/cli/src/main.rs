use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use oracle_improver::evolution::evolve;
use oracle_improver::expr::parse;
use oracle_improver::fitness::count_deficiencies;
use oracle_improver::improve::{improve, split_mutants, validate, ImproveError};
use oracle_improver::rng::{stream, Stream};
use oracle_improver::state::{StateError, DEFAULT_PRECISION};
use oracle_improver::subjects::{find_subject, list_subjects, Subject, SubjectError};
use oracle_improver::{Budget, EvolutionConfig, Expr, RunConfig, StateRepo, VarSignature};

/// Improve assertion oracles by co-evolutionary search over program states.
#[derive(Parser)]
#[command(name = "oracle-improver", version)]
struct Cli {
    /// Worker threads for fitness evaluation (default: available cores).
    /// Results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in subjects as JSON.
    Subjects,
    /// Sample a subject and write its initial state repository.
    InitStates {
        #[arg(long)]
        subject: String,
        /// Number of sampled inputs.
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..=10_000_000))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Mutants producing negative states, comma separated
        /// (default: all but the held-out ones).
        #[arg(long, value_delimiter = ',')]
        mutants: Option<Vec<String>>,
        #[command(flatten)]
        precision: Precision,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evolve an assertion against a state repository.
    Evolve {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        assertion: String,
        #[command(flatten)]
        search: SearchFlags,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the full improvement loop on a subject and report.
    Improve {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        search: SearchFlags,
        /// Budget of the whole loop (default: three times the internal budget).
        #[arg(long)]
        global_budget: Option<Budget>,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..=10_000_000))]
        init_samples: u64,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..=10_000_000))]
        validation_samples: u64,
        /// Inputs sampled per deficiency search.
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..=100_000_000))]
        deficiency_budget: u64,
        /// Counterexamples kept per deficiency search.
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..=10_000))]
        counterexamples: u64,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..=10_000))]
        max_iterations: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        precision: Precision,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate an assertion on fresh inputs and held-out mutants.
    Validate {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..=10_000_000))]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        precision: Precision,
    },
    /// Count false positives and false negatives of an assertion on a repository.
    Eval {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        assertion: String,
    },
}

#[derive(Args)]
struct Target {
    #[arg(long)]
    subject: String,
    /// Initial assertion (default: the subject's own).
    #[arg(long)]
    assertion: Option<String>,
    /// Held-out mutant ids, comma separated (default: the subject's).
    #[arg(long, value_delimiter = ',')]
    held_out: Option<Vec<String>>,
}

#[derive(Args)]
struct SearchFlags {
    /// Per-evolution budget: a duration (`30s`, `5m`) or `gens:N`.
    #[arg(long, default_value = "30s")]
    internal_budget: Budget,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(2..=100_000))]
    population_size: u64,
    /// Unguided baseline: uniform selection, no elitism, no migration.
    #[arg(long)]
    random: bool,
}

#[derive(Args)]
struct Precision {
    /// Decimal digits kept when rounding numbers and comparing them.
    #[arg(long, default_value_t = DEFAULT_PRECISION, value_parser = clap::value_parser!(u32).range(0..=15))]
    precision: u32,
}

enum Failure {
    Usage(String),
    Parse(String),
    Schema(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Parse(_) => 3,
            Failure::Schema(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Parse(m) | Failure::Schema(m) | Failure::Io(m) => m,
        }
    }
}

impl From<SubjectError> for Failure {
    fn from(e: SubjectError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn load_repo(path: &Path) -> Result<StateRepo, Failure> {
    StateRepo::load(path).map_err(|e| match e {
        StateError::Io(_) => Failure::Io(format!("{}: {e}", path.display())),
        e => Failure::Schema(format!("{}: {e}", path.display())),
    })
}

fn parse_assertion(text: &str, sig: &VarSignature) -> Result<Expr, Failure> {
    parse(text, sig).map_err(|e| Failure::Parse(format!("assertion: {e}")))
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    match out {
        Some(path) => fs::write(path, text + "\n").map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
        None => writeln!(std::io::stdout(), "{text}").map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

fn held_out(subject: &Subject, ids: Option<&[String]>) -> Result<(Vec<usize>, Vec<usize>), Failure> {
    let split = split_mutants(subject, ids)?;
    for w in split.warnings {
        eprintln!("warning: {w}");
    }
    Ok((split.held_out, split.training))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Subjects => {
            let infos: Vec<_> = list_subjects().iter().map(Subject::info).collect();
            emit(&serde_json::to_value(infos).expect("subject info serializes"), None)
        }
        Command::InitStates {
            subject,
            n,
            seed,
            mutants,
            precision,
            out,
        } => {
            let subject = find_subject(&subject)?;
            let mutants = match mutants {
                Some(ids) => ids.iter().map(|id| subject.mutant_index(id)).collect::<Result<Vec<_>, _>>()?,
                None => held_out(&subject, None)?.1,
            };
            let repo = subject.init_repo(n as usize, &mutants, precision.precision, &mut stream(seed, Stream::Init))?;
            repo.save(&out).map_err(|e| Failure::Io(format!("{}: {e}", out.display())))?;
            eprintln!(
                "wrote {} distinct positive and {} distinct negative states to {}",
                repo.positives().len(),
                repo.negatives().len(),
                out.display()
            );
            Ok(())
        }
        Command::Evolve {
            repo,
            assertion,
            search,
            seed,
        } => {
            let repo = load_repo(&repo)?;
            let alpha = parse_assertion(&assertion, repo.signature())?;
            let cfg = EvolutionConfig {
                population_size: search.population_size as usize,
                budget: search.internal_budget,
                seed,
                guided: !search.random,
                ..EvolutionConfig::default()
            };
            let out = evolve(&repo, &alpha, &cfg);
            emit(
                &json!({
                    "assertion": out.best.expr.to_string(),
                    "fitness": out.best.fitness,
                    "initial_fitness": count_deficiencies(&alpha, &repo),
                    "generations": out.generations,
                    "explored": out.explored,
                    "zero_fp_explored": out.zero_fp_explored,
                    "elapsed_ms": out.elapsed.as_millis() as u64,
                }),
                None,
            )
        }
        Command::Improve {
            target,
            search,
            global_budget,
            init_samples,
            validation_samples,
            deficiency_budget,
            counterexamples,
            max_iterations,
            seed,
            precision,
            out,
        } => {
            let cfg = RunConfig {
                subject: target.subject,
                assertion: target.assertion,
                internal_budget: search.internal_budget,
                global_budget,
                init_samples: init_samples as usize,
                validation_samples: validation_samples as usize,
                deficiency_budget,
                counterexamples: counterexamples as usize,
                held_out: target.held_out,
                seed,
                precision: precision.precision,
                guided: !search.random,
                max_iterations: max_iterations as usize,
                population_size: search.population_size as usize,
            };
            let report = improve(&cfg).map_err(|e| match e {
                ImproveError::Parse(_) => Failure::Parse(e.to_string()),
                _ => Failure::Usage(e.to_string()),
            })?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!(
                "{} after {} iterations ({:?}): {}",
                report.subject,
                report.iterations.len(),
                report.stop_reason,
                report.improved_assertion
            );
            emit(&serde_json::to_value(&report).expect("reports serialize"), out.as_deref())
        }
        Command::Validate {
            target,
            samples,
            seed,
            precision,
        } => {
            let subject = find_subject(&target.subject)?;
            let text = target.assertion.as_deref().unwrap_or(subject.default_assertion);
            let e = parse_assertion(text, subject.signature())?;
            let (held, _) = held_out(&subject, target.held_out.as_deref())?;
            let report = validate(&subject, &e, &held, samples as usize, seed, precision.precision);
            emit(&serde_json::to_value(report).expect("reports serialize"), None)
        }
        Command::Eval { repo, assertion } => {
            let repo = load_repo(&repo)?;
            let e = parse_assertion(&assertion, repo.signature())?;
            emit(&serde_json::to_value(count_deficiencies(&e, &repo)).expect("fitness serializes"), None)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
