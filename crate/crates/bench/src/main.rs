use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tls13_iot::crypto::SuiteId;
use tls13_iot::state_machine::AuthMode;
use tls13_iot::Protocol;

use tls13_bench::emit::{emit, sign_breaches, warnings, Format};
use tls13_bench::matrix::{load_scenarios, run_matrix};
use tls13_bench::{BenchError, Report, Scenario};

const EXIT_CONFIG: u8 = 1;
const EXIT_PROTOCOL: u8 = 2;
const EXIT_THRESHOLD: u8 = 3;

#[derive(Parser)]
#[command(name = "bench", about = "TLS/DTLS 1.3 wire-overhead benchmark over a simulated network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run(RunArgs),
    /// Run every scenario in a JSON config.
    Matrix(MatrixArgs),
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Add published reference columns and deviation.
    #[arg(long)]
    compare_paper: bool,
    /// With --compare-paper, exit 3 if any row changes in the opposite direction to the published one.
    #[arg(long, requires = "compare_paper")]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    profile: String,
    #[arg(long, value_parser = parse_protocol)]
    protocol: Protocol,
    #[arg(long, value_parser = parse_mode)]
    mode: AuthMode,
    #[arg(long, value_parser = parse_suite)]
    suite: Option<SuiteId>,
    /// Connection ID length (DTLS).
    #[arg(long)]
    cid: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    loss: f64,
    #[arg(long, default_value_t = 0.0)]
    dup: f64,
    #[arg(long, default_value_t = 0.0)]
    reorder: f64,
    #[arg(long)]
    mtu: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    cert_size: Option<usize>,
    /// Per-datagram framing bytes below the record layer.
    #[arg(long, default_value_t = 0)]
    framing: usize,
    #[arg(long)]
    packing: bool,
    #[arg(long)]
    compat: bool,
    #[arg(long)]
    zero_rtt: bool,
    /// Application bytes each way after the handshake.
    #[arg(long, default_value_t = 0)]
    app_payload: usize,
    /// Stateless cookie exchange before the server keeps state.
    #[arg(long)]
    dos: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct MatrixArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_mode(s: &str) -> Result<AuthMode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_suite(s: &str) -> Result<SuiteId, String> {
    SuiteId::from_cli_name(s).ok_or_else(|| format!("unknown suite {s:?}"))
}

impl RunArgs {
    fn scenario(&self) -> Scenario {
        let mut s = Scenario::new(&self.profile, self.protocol, self.mode, self.suite);
        s.net.loss_rate = self.loss;
        s.net.dup_rate = self.dup;
        s.net.reorder_rate = self.reorder;
        if let Some(mtu) = self.mtu {
            s.net.mtu = mtu;
        }
        s.net.seed = self.seed;
        s.net.framing_overhead = self.framing;
        s.overrides.cert_size = self.cert_size;
        s.overrides.compat_mode = self.compat.then_some(true);
        s.overrides.zero_rtt = self.zero_rtt.then_some(true);
        s.app_payload = self.app_payload;
        s.flags.cid = self.cid;
        s.flags.packing = self.packing;
        s.flags.dos = self.dos;
        s.flags.compare_paper = self.output.compare_paper;
        s
    }
}

fn finish(reports: &[Report], output: &OutputArgs) -> Result<u8, BenchError> {
    let rendered = emit(reports, output.format, output.compare_paper)?;
    match &output.out {
        Some(path) => std::fs::write(path, rendered)?,
        None => print!("{rendered}"),
    }
    if output.compare_paper && output.format != Format::Text {
        for w in warnings(reports) {
            eprintln!("{w}");
        }
    }
    if reports.iter().any(|r| !r.ok) {
        return Ok(EXIT_PROTOCOL);
    }
    if output.strict {
        let breaches = sign_breaches(reports);
        for r in &breaches {
            eprintln!("threshold: {} changes in the opposite direction to the published row", r.key);
        }
        if !breaches.is_empty() {
            return Ok(EXIT_THRESHOLD);
        }
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, BenchError> {
    match cli.command {
        Command::Run(args) => {
            let s = args.scenario();
            s.validate()?;
            let report = tls13_bench::run_scenario(&s)?;
            finish(&[report], &args.output)
        }
        Command::Matrix(args) => {
            let json = std::fs::read_to_string(&args.config)?;
            let scenarios = load_scenarios(&json)?;
            for s in &scenarios {
                s.validate()?;
            }
            let reports = run_matrix(&scenarios)?;
            finish(&reports, &args.output)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
