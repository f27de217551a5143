// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ltm::bundle::{write_atomic, Bundle};
use ltm::cld::{dot::to_dot, simplify, summary_table, SimplificationParams};
use ltm::error::Error;
use ltm::export::{write_loop_series_csv, write_loops_csv, write_scores_csv};
use ltm::loops::DEFAULT_LOOP_CAP;
use ltm::model::{parse_model, DeclaredPath, ModelIR};
use ltm::{analyze, AnalysisOptions};

#[derive(Parser)]
#[command(name = "ltm", version, about = "Loop dominance analysis for stock-and-flow models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a model and write its trace as CSV.
    Simulate {
        model: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Output file (stdout when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Simulate, score every link and loop, and write an analysis bundle.
    Analyze {
        model: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Loop count above which a partition falls back to strongest-path discovery.
        #[arg(long, env = "LTM_LOOP_CAP", default_value_t = DEFAULT_LOOP_CAP)]
        loop_cap: usize,
        /// Score this loop regardless of importance, e.g. `a,b,c`. Repeatable.
        #[arg(long = "declare-loop", value_name = "A,B,...")]
        declare_loop: Vec<String>,
        /// Include the full simulation trace in the bundle.
        #[arg(long)]
        trace: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Simplify a bundle into a causal loop diagram (Graphviz DOT).
    ExportCld {
        bundle: PathBuf,
        /// Percent; above 100 disables the link rule.
        #[arg(long, default_value_t = 0.0, value_parser = parse_percent)]
        link_threshold: f64,
        /// Percent.
        #[arg(long, default_value_t = 0.0, value_parser = parse_percent)]
        loop_threshold: f64,
        /// Keep the flows of every retained stock.
        #[arg(long)]
        keep_flows: bool,
        /// Write DOT here and the summary table to stdout. Without it, DOT
        /// goes to stdout and the table to stderr.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Write the loop inventory as CSV.
    ExportLoops {
        bundle: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write per-step relative loop scores here.
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Write per-step link scores as CSV.
    ExportScores {
        bundle: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Overrides {
    /// Override a constant, e.g. `time_to_adjust=2`. Repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE", value_parser = parse_override)]
    set: Vec<(String, f64)>,
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    let v: f64 = v.trim().parse().map_err(|_| format!("'{v}' is not a number"))?;
    if !v.is_finite() {
        return Err(format!("'{v}' is not finite"));
    }
    Ok((k.trim().to_string(), v))
}

fn parse_percent(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("'{s}' is not a percent >= 0")),
    }
}

/// An error together with the file it concerns.
struct Failure {
    file: PathBuf,
    error: Error,
}

impl Failure {
    fn report(&self) -> i32 {
        let file = self.file.display();
        match &self.error {
            Error::Model(m) => match m.pos {
                Some(p) => eprintln!("{file}:{}:{}: {}", p.line, p.col, m.kind),
                None => eprintln!("{file}: {}", m.kind),
            },
            e => eprintln!("{file}: {e}"),
        }
        self.error.exit_code()
    }
}

fn at(file: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |error| Failure {
        file: file.to_path_buf(),
        error,
    }
}

fn load_model(path: &Path, overrides: &Overrides) -> Result<(String, ModelIR, BTreeMap<String, f64>), Failure> {
    let fail = at(path);
    let text = std::fs::read_to_string(path).map_err(|e| fail(e.into()))?;
    let mut ir = parse_model(&text).map_err(|e| fail(e.into()))?;
    let mut applied = BTreeMap::new();
    for (k, v) in &overrides.set {
        ir.set_constant(k, *v).map_err(|e| fail(e.into()))?;
        applied.insert(k.clone(), *v);
    }
    Ok((text, ir, applied))
}

/// Writes to `path` atomically, or to stdout.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), Error> {
    match path {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>) -> Result<Vec<u8>, Error> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate {
            model,
            overrides,
            output,
        } => {
            let (_, ir, _) = load_model(&model, &overrides)?;
            let fail = at(&model);
            let em = ltm::model::expand_macros(&ir).map_err(|e| fail(e.into()))?;
            let trace = ltm::sim::simulate(&em, &em.sim).map_err(&fail)?;
            let bytes = csv_bytes(|b| trace.write_csv(b)).map_err(&fail)?;
            emit(output.as_deref(), &bytes).map_err(at(output.as_deref().unwrap_or(Path::new("-"))))
        }
        Command::Analyze {
            model,
            overrides,
            loop_cap,
            declare_loop,
            trace,
            output,
        } => {
            let (text, ir, applied) = load_model(&model, &overrides)?;
            let fail = at(&model);
            let extra_loops = declare_loop
                .iter()
                .map(|s| DeclaredPath {
                    name: s.clone(),
                    vars: s.split(',').map(|v| v.trim().to_string()).collect(),
                })
                .collect();
            let opts = AnalysisOptions {
                loop_cap,
                extra_loops,
                ..AnalysisOptions::default()
            };
            let a = analyze(&ir, &opts).map_err(&fail)?;
            let bundle = Bundle::from_analysis(&a, &text, &applied, trace);
            let json = bundle.to_json().map_err(|e| fail(e.into()))?;
            emit(output.as_deref(), json.as_bytes()).map_err(at(output.as_deref().unwrap_or(Path::new("-"))))
        }
        Command::ExportCld {
            bundle,
            link_threshold,
            loop_threshold,
            keep_flows,
            dot,
        } => {
            let fail = at(&bundle);
            let b = Bundle::read(&bundle).map_err(&fail)?;
            let cld = simplify(
                &b,
                SimplificationParams {
                    link_threshold,
                    loop_threshold,
                    keep_flows,
                },
            );
            let graph = to_dot(&cld);
            let table = summary_table(&cld);
            match dot {
                Some(path) => {
                    write_atomic(&path, graph.as_bytes()).map_err(at(&path))?;
                    emit(None, table.as_bytes()).map_err(&fail)
                }
                None => {
                    emit(None, graph.as_bytes()).map_err(&fail)?;
                    eprint!("{table}");
                    Ok(())
                }
            }
        }
        Command::ExportLoops {
            bundle,
            output,
            series,
        } => {
            let fail = at(&bundle);
            let b = Bundle::read(&bundle).map_err(&fail)?;
            let bytes = csv_bytes(|w| write_loops_csv(&b, w)).map_err(&fail)?;
            emit(output.as_deref(), &bytes).map_err(&fail)?;
            if let Some(path) = series {
                let bytes = csv_bytes(|w| write_loop_series_csv(&b, w)).map_err(&fail)?;
                write_atomic(&path, &bytes).map_err(at(&path))?;
            }
            Ok(())
        }
        Command::ExportScores { bundle, output } => {
            let fail = at(&bundle);
            let b = Bundle::read(&bundle).map_err(&fail)?;
            let bytes = csv_bytes(|w| write_scores_csv(&b, w)).map_err(&fail)?;
            emit(output.as_deref(), &bytes).map_err(&fail)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => ExitCode::from(f.report() as u8),
    }
}
