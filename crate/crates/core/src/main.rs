use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tdse_cp::cli::{execute, exit_code, RunConfig};
use tdse_cp::Error;

/// Sectorwise CP solver for the 1D time-dependent Schrödinger equation.
///
/// Settings come from defaults, then `--config`, then the flags below.
#[derive(Parser, Debug)]
#[command(version, allow_negative_numbers = true)]
struct Args {
    /// key=value configuration file (`#` comments)
    #[arg(long)]
    config: Option<PathBuf>,
    /// problem1:<n>, problem2 or problem3
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    xmin: Option<String>,
    #[arg(long)]
    xmax: Option<String>,
    /// spatial steps
    #[arg(long)]
    nx: Option<String>,
    /// spatial step width (alternative to --nx)
    #[arg(long)]
    dx: Option<String>,
    /// final time
    #[arg(long = "T")]
    t: Option<String>,
    /// number of time sectors
    #[arg(long = "K")]
    k: Option<String>,
    /// basis size
    #[arg(long = "N")]
    n: Option<String>,
    /// time substep
    #[arg(long)]
    dt: Option<String>,
    /// time-stepping order: 2 or 4
    #[arg(long)]
    order: Option<String>,
    /// stationary CP order: 2, 4 or 8
    #[arg(long = "cp-order")]
    cp_order: Option<String>,
    /// solve, eigen, sectors, quadcheck, converge or compare-cn
    #[arg(long)]
    mode: Option<String>,
    /// output directory
    #[arg(long)]
    out: Option<String>,
    /// snapshot times t1,t2,...
    #[arg(long)]
    snap: Option<String>,
    /// read T, dt and snapshot times in the problem's natural time unit
    #[arg(long)]
    tau: bool,
    /// compare against a self-reference when no exact solution exists (true/false)
    #[arg(long)]
    reference: Option<String>,
    #[arg(long = "ref-dt-div")]
    ref_dt_div: Option<String>,
    #[arg(long = "ref-extra-n")]
    ref_extra_n: Option<String>,
    #[arg(long = "ref-dx-div")]
    ref_dx_div: Option<String>,
    /// sweep axis for converge mode: dt, N, dx or K
    #[arg(long)]
    sweep: Option<String>,
    /// sweep values v1,v2,...
    #[arg(long)]
    values: Option<String>,
}

fn configure(args: &Args) -> Result<RunConfig, Error> {
    let mut c = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    // problem and domain first so that --dx resolves against them
    let flags: [(&str, &Option<String>); 20] = [
        ("problem", &args.problem),
        ("xmin", &args.xmin),
        ("xmax", &args.xmax),
        ("nx", &args.nx),
        ("dx", &args.dx),
        ("T", &args.t),
        ("K", &args.k),
        ("N", &args.n),
        ("dt", &args.dt),
        ("order", &args.order),
        ("cp-order", &args.cp_order),
        ("mode", &args.mode),
        ("out", &args.out),
        ("snap", &args.snap),
        ("reference", &args.reference),
        ("ref-dt-div", &args.ref_dt_div),
        ("ref-extra-n", &args.ref_extra_n),
        ("ref-dx-div", &args.ref_dx_div),
        ("sweep", &args.sweep),
        ("values", &args.values),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            c.set(key, v)?;
        }
    }
    if args.tau {
        c.natural_units = true;
    }
    Ok(c)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match configure(&args).and_then(|c| execute(&c)) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
