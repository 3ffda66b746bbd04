use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use xorhorn::corpus;
use xorhorn::domination::{compute_c_set, theory_linearity_witness};
use xorhorn::emit::{emit_proverif, EmitOptions, Encoding};
use xorhorn::engine::{
    check_correspondence, derive_mod_xor, derive_syntactic, replay_to_source, verify_derivation, verify_derivation_with,
    CorrespondenceVerdict, Derivation, Mode, SearchOptions, SearchStats, Verdict,
};
use xorhorn::normal::normal_form;
use xorhorn::reduction::reduce_stats;
use xorhorn::{build_t_plus, parse_atom, parse_theory, Atom, CSet, Error, ParsedTheory, Query, Theory};

const OK: u8 = 0;
const VIOLATION: u8 = 1;
const INCONCLUSIVE: u8 = 2;
const INPUT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "xorhorn", version, about = "Reduce Horn theories with XOR to XOR-free theories and search derivations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a theory; report xor-linearity and the dominating set.
    Check { file: String },
    /// Emit the XOR-free theory as ProVerif Horn clauses.
    Reduce {
        file: String,
        #[arg(long, value_enum, default_value = "optimized")]
        encoding: EncodingArg,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Extra line copied verbatim into the output header (repeatable).
        #[arg(long = "option")]
        options: Vec<String>,
    },
    /// Search for a derivation of the goal (default: the file's first query).
    Solve {
        file: String,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Bundled theories.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
}

#[derive(Subcommand)]
enum CorpusAction {
    List,
    Show { name: String },
    Run {
        name: String,
        #[command(flatten)]
        search: SearchArgs,
    },
}

#[derive(clap::Args)]
struct SearchArgs {
    #[arg(long, value_enum, default_value = "xor")]
    mode: ModeArg,
    /// Goal atom, e.g. "I(m(a, a))".
    #[arg(long)]
    goal: Option<String>,
    #[arg(long, default_value_t = 12)]
    max_depth: usize,
    #[arg(long, default_value_t = 24)]
    max_size: usize,
    #[arg(long, default_value_t = 200_000)]
    max_facts: usize,
    /// Seconds.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    /// Number of session constants for exempt variables.
    #[arg(long, default_value_t = 2)]
    sid_pool: usize,
    /// Apply every composition rule everywhere (complete, slower).
    #[arg(long)]
    unguided: bool,
    /// Print the trace as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Xor,
    Syntactic,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Plain,
    Optimized,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            INPUT_ERROR
        }
    };
    ExitCode::from(code)
}

fn load(spec: &str) -> Result<ParsedTheory, Error> {
    let text = corpus::load(spec)?;
    parse_theory(&text).map_err(Error::Input)
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Check { file } => check(&file),
        Command::Reduce { file, encoding, output, options } => reduce(&file, encoding, output, options),
        Command::Solve { file, search } => solve(&file, &search),
        Command::Corpus { action } => match action {
            CorpusAction::List => {
                for e in corpus::ENTRIES {
                    println!("{:<14} {}", e.name, e.summary);
                }
                Ok(OK)
            }
            CorpusAction::Show { name } => {
                print!("{}", corpus::get(&name)?.source);
                Ok(OK)
            }
            CorpusAction::Run { name, search } => solve(&format!("corpus:{name}"), &search),
        },
    }
}

fn c_set_of(t: &Theory) -> Result<CSet, Error> {
    if let Some(w) = theory_linearity_witness(t) {
        let at = w.clause.map(|i| format!(" in clause {}: {}", i, t.clauses[i])).unwrap_or_default();
        return Err(Error::NotXorLinear(format!("{}{at}", w.term)));
    }
    compute_c_set(t)
}

fn check(file: &str) -> Result<u8, Error> {
    let p = load(file)?;
    let t = &p.theory;
    println!("clauses: {}", t.clauses.len());
    println!("queries: {}", p.queries.len());
    match theory_linearity_witness(t) {
        Some(w) => {
            println!("xor-linear: no");
            match w.clause {
                Some(i) => println!("witness: {} in clause {}: {}", w.term, i, t.clauses[i]),
                None => println!("witness: {}", w.term),
            }
            return Ok(INPUT_ERROR);
        }
        None => println!("xor-linear: yes"),
    }
    let c = compute_c_set(t)?;
    let elems: Vec<String> = c.elements().iter().map(ToString::to_string).collect();
    println!("C = {{{}}}", elems.join(", "));
    match c.closure_norm() {
        Ok(cl) => println!("closure size: {}", cl.len()),
        Err(e) => println!("closure size: {e}"),
    }
    Ok(OK)
}

fn reduce(file: &str, encoding: EncodingArg, output: Option<PathBuf>, options: Vec<String>) -> Result<u8, Error> {
    let p = load(file)?;
    let c = c_set_of(&p.theory)?;
    let rt = build_t_plus(&p.theory, &c)?;
    let stats = reduce_stats(&rt);
    let mut query_goals = Vec::new();
    let mut blocking = Vec::new();
    for q in &p.queries {
        query_goals.push(q.goal().clone());
        if let Query::Correspondence { begin, .. } = q {
            blocking.push(begin.pred.clone());
        }
    }
    let opts = EmitOptions {
        encoding: match encoding {
            EncodingArg::Plain => Encoding::Plain,
            EncodingArg::Optimized => Encoding::Optimized,
        },
        proverif_header_options: options,
        query_goals,
        blocking,
    };
    let text = emit_proverif(&rt, &opts)?;
    match output {
        Some(path) => {
            std::fs::write(&path, text)?;
            eprintln!(
                "wrote {} ({} clauses, per family {:?}, closure size {})",
                path.display(),
                rt.theory.clauses.len(),
                stats.clauses_per_family,
                stats.closure_size
            );
        }
        None => print!("{text}"),
    }
    Ok(OK)
}

fn options(a: &SearchArgs, c: &CSet) -> SearchOptions {
    let mut o = SearchOptions { c_set: Some(c.clone()), guided: !a.unguided, sid_pool: a.sid_pool, ..Default::default() };
    o.bounds.max_depth = a.max_depth;
    o.bounds.max_term_size = a.max_size;
    o.bounds.max_facts = a.max_facts;
    o.bounds.timeout = Duration::from_secs(a.timeout);
    o
}

fn print_trace(d: &Derivation, json: bool) {
    if json {
        println!("{}", serde_json::to_string_pretty(&d.to_json()).unwrap_or_default());
    } else {
        print!("{d}");
    }
}

fn print_stats(s: &SearchStats) {
    eprintln!(
        "searched {} facts ({} stored) in {:.3}s",
        s.processed,
        s.facts,
        s.elapsed.as_secs_f64()
    );
}

fn solve(file: &str, a: &SearchArgs) -> Result<u8, Error> {
    let p = load(file)?;
    let t = &p.theory;
    let query = match &a.goal {
        Some(g) => Query::Secrecy { goal: parse_atom(t, g).map_err(Error::Input)? },
        None => p
            .queries
            .first()
            .cloned()
            .ok_or_else(|| Error::Precondition("no --goal given and the theory has no query".into()))?,
    };
    let c = c_set_of(t)?;
    let opts = options(a, &c);
    let mode = match a.mode {
        ModeArg::Xor => Mode::Xor,
        ModeArg::Syntactic => Mode::Syntactic,
    };
    let rt = match mode {
        Mode::Syntactic => Some(build_t_plus(t, &c)?),
        Mode::Xor => None,
    };
    let norm = |at: &Atom| at.map_args(|x| normal_form(x, &c));
    let target: &Theory = rt.as_ref().map_or(t, |rt| &rt.theory);

    match query {
        Query::Secrecy { goal } => {
            println!("goal: {goal} ({} mode)", mode.name());
            let out = match mode {
                Mode::Xor => derive_mod_xor(t, &goal, &opts)?,
                Mode::Syntactic => derive_syntactic(target, &norm(&goal), &opts)?,
            };
            print_stats(&out.stats);
            match out.verdict {
                Verdict::Found(d) => {
                    println!("derivable: yes");
                    print_trace(&d, a.json);
                    if let Some(rt) = &rt {
                        let src = replay_to_source(rt, &d);
                        let ok = verify_derivation(t, &src, Mode::Xor);
                        println!("replayed against the source theory modulo XOR: {}", if ok { "verified" } else { "FAILED" });
                        print_trace(&src, a.json);
                    }
                    Ok(VIOLATION)
                }
                Verdict::Saturated => {
                    println!("derivable: no (search saturated)");
                    Ok(OK)
                }
                Verdict::Exhausted(why) => {
                    println!("derivable: unknown ({why})");
                    Ok(INCONCLUSIVE)
                }
                Verdict::Timeout => {
                    println!("derivable: unknown (timeout)");
                    Ok(INCONCLUSIVE)
                }
            }
        }
        Query::Correspondence { end, begin, fixed_begins, goal } => {
            let q = match mode {
                Mode::Xor => Query::Correspondence { end, begin, fixed_begins, goal },
                Mode::Syntactic => Query::Correspondence {
                    end: norm(&end),
                    begin: norm(&begin),
                    fixed_begins: fixed_begins.iter().map(norm).collect(),
                    goal: norm(&goal),
                },
            };
            println!("{q} ({} mode)", mode.name());
            let (v, stats) = check_correspondence(target, &q, mode, &opts)?;
            print_stats(&stats);
            match v {
                CorrespondenceVerdict::Violated(d) => {
                    println!("correspondence: violated");
                    print_trace(&d, a.json);
                    if let (Some(rt), Query::Correspondence { fixed_begins, .. }) = (&rt, &q) {
                        let src = replay_to_source(rt, &d);
                        let ok = verify_derivation_with(t, fixed_begins, &src, Mode::Xor);
                        println!("replayed against the source theory modulo XOR: {}", if ok { "verified" } else { "FAILED" });
                    }
                    Ok(VIOLATION)
                }
                CorrespondenceVerdict::Holds { definitive: true } => {
                    println!("correspondence: holds for these begin events (search saturated)");
                    Ok(OK)
                }
                CorrespondenceVerdict::Holds { definitive: false } => {
                    println!("correspondence: holds within bounds");
                    Ok(INCONCLUSIVE)
                }
                CorrespondenceVerdict::Inconclusive(why) => {
                    println!("correspondence: unknown ({why})");
                    Ok(INCONCLUSIVE)
                }
            }
        }
    }
}
