mod bench;
mod config;
mod matrix_io;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use l2pc_core::control::{run_encrypted_loop, ControllerSpec, PlantModel};
use l2pc_core::fixedpoint::quantize;
use l2pc_core::protocol::runner::{party_tcp_endpoint, run_mult, serve_party};
use l2pc_core::protocol::{MsgType, Party, Phase, SessionSeeds};
use l2pc_core::transport::{transcript_round_count, Role};
use l2pc_core::{Dims, Error, FixedPointMatrix};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};

use config::{ParamArgs, RunArgs};

/// One-round two-party fixed-point matrix multiplication and the encrypted
/// control demo. Every flag can also be set through the environment variable
/// shown in its help, prefixed `L2PC_`.
#[derive(Parser, Debug)]
#[command(name = "l2pc", version)]
struct Cli {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    run: RunArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the feasible (k, l) window and check the chosen pair.
    Params,
    /// Compute Z = X Y for CSV matrices through the protocol.
    Mult {
        #[arg(long, env = "L2PC_X")]
        x: PathBuf,
        #[arg(long, env = "L2PC_Y")]
        y: PathBuf,
    },
    /// Run the encrypted control loop and write its trace as CSV.
    Demo {
        /// Last time index; the loop runs tau = 0..=steps.
        #[arg(long, default_value_t = 50, env = "L2PC_STEPS")]
        steps: u64,
    },
    /// Host one computing party over tcp until the client closes the session.
    ServeParty {
        /// p0 or p1.
        #[arg(long, env = "L2PC_ROLE")]
        role: Role,
    },
    /// Time each protocol phase over a grid of n and t. Without --q-bits the
    /// modulus is 2^108 so that every default grid point has a window.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [256usize, 512, 1024], env = "L2PC_BENCH_N")]
        ns: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [2048usize, 8192, 32768], env = "L2PC_BENCH_T")]
        ts: Vec<usize>,
        /// Online repetitions per grid point; the median is reported.
        #[arg(long, default_value_t = 5, env = "L2PC_BENCH_REPS")]
        reps: usize,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Acceptance(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_transport() => 3,
            CliError::Core(
                Error::InvalidParams(_)
                | Error::Infeasible(_)
                | Error::InvalidModulus(_)
                | Error::InvalidFixedPoint { .. },
            ) => 2,
            CliError::Acceptance(_) => 4,
            _ => 1,
        }
    }
}

/// Where the summary goes: stdout, unless stdout carries the data.
struct Report {
    to_stderr: bool,
}

impl Report {
    /// Write errors are ignored so a closed pipe ends output quietly.
    fn line(&self, s: impl AsRef<str>) {
        let _ = if self.to_stderr {
            writeln!(io::stderr(), "{}", s.as_ref())
        } else {
            writeln!(io::stdout(), "{}", s.as_ref())
        };
    }
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn fmt_pow2(v: f64) -> String {
    let e = v.log2();
    if e.fract() == 0.0 {
        format!("2^{e}")
    } else {
        format!("{v:e}")
    }
}

fn fmt_err(v: &BigRational) -> String {
    match v.to_f64() {
        Some(f) if f > 0.0 => format!("2^{:.2}", f.log2()),
        Some(_) => "0".into(),
        None => v.to_string(),
    }
}

fn exact_product(x: &FixedPointMatrix, y: &FixedPointMatrix) -> Vec<BigRational> {
    let den = BigInt::from(1) << (2 * x.spec().l());
    (0..x.rows())
        .flat_map(|i| (0..y.cols()).map(move |j| (i, j)))
        .map(|(i, j)| {
            let s: BigInt = (0..x.cols())
                .map(|k| BigInt::from(x.mantissa(i, k)) * BigInt::from(y.mantissa(k, j)))
                .sum();
            BigRational::new(s, den.clone())
        })
        .collect()
}

fn cmd_params(cli: &Cli) -> Result<(), CliError> {
    let r = cli.params.resolve(None)?;
    let out = Report { to_stderr: false };
    out.line(format!(
        "n = {}, q = 2^{}, t = {}, d = ({}, {}, {}), epsilon = {}",
        r.n,
        r.q_bits,
        r.t,
        r.dims.d1,
        r.dims.d2,
        r.dims.d3,
        fmt_pow2(r.epsilon)
    ));
    match r.window.k_max {
        Some(k) => {
            out.line(format!("k_max = {k:.4}"));
            out.line(format!("l_min(k_max) = {:.4}", r.window.l_min(k)));
            if let Some(k) = r.k {
                out.line(format!("l_min(k = {k}) = {:.4}", r.window.l_min(k as f64)));
            }
        }
        None => out.line("k_max: none, q <= 128 t"),
    }
    out.line(format!("window: {}", r.window.render()));
    if !r.window.ok {
        return Err(Error::Infeasible("the (k, l) window is empty".into()).into());
    }
    let (k, l) = (
        r.k.map_or("?".into(), |k| k.to_string()),
        r.l.map_or("?".into(), |l| l.to_string()),
    );
    match r.params() {
        Ok(_) => {
            out.line(format!("(k, l) = ({k}, {l}): valid"));
            Ok(())
        }
        Err(e) => {
            out.line(format!("(k, l) = ({k}, {l}): invalid"));
            Err(e)
        }
    }
}

fn read_matrix_file(path: &Path, what: &str) -> Result<l2pc_core::RealMatrix, CliError> {
    let f = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    matrix_io::read_matrix(BufReader::new(f), what)
}

fn cmd_mult(cli: &Cli, x: &Path, y: &Path) -> Result<(), CliError> {
    let (xr, yr) = (read_matrix_file(x, "X")?, read_matrix_file(y, "Y")?);
    if xr.cols() != yr.rows() {
        return Err(CliError::Input(format!(
            "X is {:?} but Y is {:?}",
            xr.shape(),
            yr.shape()
        )));
    }
    let dims = Dims::new(xr.rows(), xr.cols(), yr.cols());
    let params = cli.params.resolve(Some(dims))?.params()?;
    let spec = params.fp()?;
    let report = Report {
        to_stderr: cli.run.out.is_none(),
    };
    let (qx, qy) = (quantize(&xr, spec), quantize(&yr, spec));
    if qx.saturated + qy.saturated > 0 {
        eprintln!(
            "warning: {} entries of X and {} of Y saturated at +-2^{}",
            qx.saturated,
            qy.saturated,
            spec.k() - 1 - spec.l()
        );
    }
    let run = run_mult(
        &params,
        &qx.matrix,
        std::slice::from_ref(&qy.matrix),
        &cli.run.deployment()?,
        cli.run.seed,
        cli.run.options()?,
    )?;
    let out = &run.outputs[0];
    let mut w = open_out(&cli.run.out)?;
    matrix_io::write_matrix(&mut w, &out.to_real())?;
    w.flush()?;
    drop(w);

    let entries = run.transcript.entries();
    let phase_bytes = |ph: Phase| -> usize {
        entries
            .iter()
            .filter(|e| e.msg_type.phase() == ph)
            .map(|e| e.bytes)
            .sum()
    };
    let h: Vec<_> = entries
        .iter()
        .filter(|e| e.msg_type == MsgType::HShare)
        .collect();
    report.line(format!(
        "(k, l) = ({}, {}), d = ({}, {}, {})",
        params.k, params.l, dims.d1, dims.d2, dims.d3
    ));
    if h.is_empty() {
        report.line("rounds: not observed, the parties are remote");
    } else {
        report.line(format!("rounds: {}", transcript_round_count(&entries, 0)));
        report.line(format!(
            "H exchange bytes: {} ({} per party)",
            h.iter().map(|e| e.bytes).sum::<usize>(),
            h[0].bytes
        ));
    }
    report.line(format!(
        "bytes: setup {}, offline {}, online {}",
        phase_bytes(Phase::Setup),
        phase_bytes(Phase::Offline),
        phase_bytes(Phase::Online)
    ));
    let eps = BigRational::from_float(params.epsilon).expect("finite epsilon");
    let err = exact_product(&qx.matrix, &qy.matrix)
        .iter()
        .zip(out.to_exact())
        .map(|(a, b)| (a - b).abs())
        .max()
        .expect("non-empty product");
    let pass = err < eps;
    report.line(format!("max |XY - Z| = {}", fmt_err(&err)));
    report.line(format!(
        "max |XY - Z| < {}: {}",
        fmt_pow2(params.epsilon),
        if pass { "PASS" } else { "FAIL" }
    ));
    if pass {
        Ok(())
    } else {
        Err(CliError::Acceptance("product error reached epsilon".into()))
    }
}

fn cmd_demo(cli: &Cli, steps: u64) -> Result<(), CliError> {
    let params = cli.params.resolve(None)?.params()?;
    let report = Report {
        to_stderr: cli.run.out.is_none(),
    };
    let trace = run_encrypted_loop(
        &params,
        &PlantModel::paper(),
        &ControllerSpec::paper(),
        steps,
        &cli.run.deployment()?,
        cli.run.seed,
        cli.run.options()?,
    )?;
    let mut w = open_out(&cli.run.out)?;
    w.write_all(trace.to_csv().as_bytes())?;
    w.flush()?;
    drop(w);

    let eps = BigRational::from_float(params.epsilon).expect("finite epsilon");
    let q = trace.max_err_quant();
    let pass = q < eps;
    report.line(format!(
        "tau = 0..={steps}, (k, l) = ({}, {}), saturated quantizer entries: {}",
        params.k,
        params.l,
        trace.saturated()
    ));
    report.line(format!("max err_quant = {}", fmt_err(&q)));
    report.line(format!(
        "max err_true = {:.6e}",
        trace.max_err_true().to_f64().unwrap_or(f64::NAN)
    ));
    report.line(format!(
        "max err_quant < {}: {}",
        fmt_pow2(params.epsilon),
        if pass { "PASS" } else { "FAIL" }
    ));
    if pass {
        Ok(())
    } else {
        Err(CliError::Acceptance("control error reached epsilon".into()))
    }
}

fn cmd_serve_party(cli: &Cli, role: Role) -> Result<(), CliError> {
    let id = role
        .party_id()
        .ok_or_else(|| CliError::Input(format!("serve-party needs --role p0 or p1, got {role}")))?;
    let listen = cli
        .run
        .listen_addr()?
        .ok_or_else(|| CliError::Input("--listen is required".into()))?;
    let other = Role::party(id.other());
    let peer = cli
        .run
        .peer(other)
        .ok_or_else(|| CliError::Input(format!("--peer {other}=ADDR is required")))?;
    let client = cli
        .run
        .peer(Role::Client)
        .ok_or_else(|| CliError::Input("--peer client=ADDR is required".into()))?;
    let opts = cli.run.options()?;
    let listener = TcpListener::bind(listen)?;
    eprintln!("{role}: listening on {}", listener.local_addr()?);
    let mut endpoint =
        party_tcp_endpoint(id, opts.session, listener, peer, client, None, opts.timeout)?;
    let seed = SessionSeeds::from_master(cli.run.seed).party(id);
    let mut party = Party::new(id, opts.session, seed).with_block_width(opts.block_width);
    let steps = serve_party(&mut party, &mut endpoint)?;
    println!(
        "{role}: session {} closed after {steps} online steps",
        opts.session
    );
    Ok(())
}

fn cmd_bench(cli: &Cli, ns: &[usize], ts: &[usize], reps: usize) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for &n in ns {
        for &t in ts {
            let mut p = cli.params.clone();
            p.q_bits = p.q_bits.or(Some(108));
            p.n = Some(n);
            p.t = Some(t);
            let params = p.resolve(None)?.params()?;
            rows.push(bench::bench_one(&params, cli.run.seed, reps)?);
        }
    }
    let mut w = open_out(&cli.run.out)?;
    w.write_all(bench::render(&rows).as_bytes())?;
    w.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Params => cmd_params(cli),
        Command::Mult { x, y } => cmd_mult(cli, x, y),
        Command::Demo { steps } => cmd_demo(cli, *steps),
        Command::ServeParty { role } => cmd_serve_party(cli, *role),
        Command::Bench { ns, ts, reps } => cmd_bench(cli, ns, ts, *reps),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
