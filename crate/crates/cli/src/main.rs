use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use polyopf::{
    apply_plan, parse_plan, rank_relaxation_value, render_csv, render_report, render_table,
    run_solve, run_sweep, Outcome, SolveConfig, SweepSpec,
};
use polyopf_core::{build_poly_opf, build_relaxation, parse_case};
use polyopf_sdp::Precision;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PrecisionArg {
    Auto,
    Double,
    Extended,
}

/// Global AC optimal power flow through the moment-SOS hierarchy.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// Case file (native format or MATPOWER subset).
    #[arg(long)]
    case: PathBuf,
    /// Solve this relaxation order only.
    #[arg(long)]
    order: Option<usize>,
    /// Highest order tried when escalating.
    #[arg(long, default_value_t = 3)]
    max_order: usize,
    /// SDP tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Auto)]
    precision: PrecisionArg,
    /// Parameter sweep PARAM:LO:HI:N with PARAM one of vmax@BUS,
    /// smax@FROM-TO, qmin@BUS.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Only solve the rank relaxation.
    #[arg(long)]
    rank_relaxation: bool,
    /// Minimize squared deviation from a generation plan, BUS=MW,...
    #[arg(long)]
    plan: Option<String>,
    /// Write the relaxation of order --order in SDPA format and exit.
    #[arg(long, requires = "order")]
    export_sdpa: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long)]
    verbose: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(args: &Args) -> Result<bool> {
    let text = fs::read_to_string(&args.case)
        .with_context(|| format!("reading {}", args.case.display()))?;
    let mut case = parse_case(&text).with_context(|| format!("parsing {}", args.case.display()))?;
    if let Some(p) = &args.plan {
        apply_plan(&mut case, &parse_plan(p)?)?;
    }
    let cfg = SolveConfig {
        order: args.order,
        max_order: args.max_order,
        tol: args.tol,
        precision: match args.precision {
            PrecisionArg::Auto => Precision::Auto,
            PrecisionArg::Double => Precision::Double,
            PrecisionArg::Extended => Precision::Extended,
        },
    };

    if let (Some(path), Some(d)) = (&args.export_sdpa, args.order) {
        let sdp = build_relaxation(&build_poly_opf(&case)?, d)?;
        fs::write(path, sdp.to_sdpa()?).with_context(|| format!("writing {}", path.display()))?;
        return Ok(true);
    }

    if let Some(s) = &args.sweep {
        let spec = SweepSpec::parse(s)?;
        let rows = run_sweep(&case, &spec, &cfg)?;
        match args.format {
            Format::Table => print!("{}", render_table(&spec.param.header(), &rows)),
            Format::Csv => print!("{}", render_csv(&rows)),
            Format::Json => println!("{}", serde_json::to_string_pretty(&rows)?),
        }
        return Ok(rows.iter().all(|r| r.order.is_some()));
    }

    if args.rank_relaxation {
        let v = rank_relaxation_value(&case, args.tol)?;
        match args.format {
            Format::Json => println!("{}", serde_json::json!({ "rank_relax_value": v })),
            _ => match v {
                Some(v) => println!("rank relaxation {v:.2} $/h"),
                None => println!("rank relaxation infeasible or not solved"),
            },
        }
        return Ok(v.is_some());
    }

    let rep = run_solve(&case, &cfg)?;
    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&rep)?),
        _ => print!("{}", render_report(&case, &rep)),
    }
    Ok(rep.outcome == Outcome::Certified)
}
