use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use psi_core::{ClientState, IntersectionResult, ResponseMessage, ServerState, SetupMessage};

use psi_cli::bench::{self, BenchConfig};
use psi_cli::error::{CliError, Result};
use psi_cli::input::read_elements;
use psi_cli::keyfile::{DsName, KeyFile, PolicyName};
use psi_cli::net::{Connection, QueryError, Service};

#[derive(Parser)]
#[command(
    name = "psi",
    version,
    about = "Private set intersection over compressed server sets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ds {
    Bloom,
    Gcs,
}

impl From<Ds> for DsName {
    fn from(d: Ds) -> Self {
        match d {
            Ds::Bloom => DsName::Bloom,
            Ds::Gcs => DsName::Gcs,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Pin {
    Psi,
    Cardinality,
}

#[derive(Subcommand)]
enum Command {
    /// Encrypt a server set and write the public setup message and private key file.
    Setup {
        #[arg(long)]
        server_set: PathBuf,
        /// Largest client request the set is sized for.
        #[arg(long)]
        max_queries: usize,
        /// Probability of any false positive across one request.
        #[arg(long)]
        fpr: f64,
        #[arg(long, value_enum, default_value = "gcs")]
        ds: Ds,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        key_out: PathBuf,
        /// Reuse the key from an existing key file instead of drawing a new one.
        #[arg(long)]
        key: Option<PathBuf>,
        /// Only answer requests in this mode.
        #[arg(long, value_enum)]
        pin_reveal: Option<Pin>,
    },
    /// Answer requests over TCP.
    Serve {
        #[arg(long)]
        key: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Refuse further requests after this many; rerun setup to rotate the key.
        #[arg(long)]
        max_requests: Option<u64>,
    },
    /// Run the client side against a server and print the result.
    Query {
        #[arg(long)]
        client_set: PathBuf,
        #[arg(long)]
        setup: PathBuf,
        #[arg(long)]
        connect: String,
        /// Print matching indices instead of only their count.
        #[arg(long)]
        reveal: bool,
    },
    /// Time the four protocol phases, or print structure sizes with --sizes.
    Bench {
        #[arg(long = "server-size", short = 'N', default_value_t = 10_000)]
        server_size: usize,
        #[arg(long = "client-size", short = 'n', default_value_t = 1_000)]
        client_size: usize,
        #[arg(long, default_value_t = 1e-9)]
        fpr: f64,
        #[arg(long, value_enum, default_value = "gcs")]
        ds: Ds,
        #[arg(long)]
        reveal: bool,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        /// Also report setup figures scaled to this server size.
        #[arg(long)]
        extrapolate_to: Option<usize>,
        #[arg(long, default_value_t = bench::DEFAULT_MEMORY_BUDGET >> 20)]
        memory_budget_mib: u64,
        /// Print naive, Bloom and GCS sizes for FPR 1e-6 through 1e-12.
        #[arg(long)]
        sizes: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Setup {
            server_set,
            max_queries,
            fpr,
            ds,
            out,
            key_out,
            key,
            pin_reveal,
        } => {
            let elements = read_elements(&server_set)?;
            let ds: DsName = ds.into();
            let params = psi_core::SetupParams::new(max_queries, fpr, ds.into());
            params.validate()?;
            let (state, msg) = match key {
                Some(path) => {
                    let scalar = KeyFile::load(&path)?.scalar()?;
                    ServerState::setup_with_key(scalar, &elements, params)?
                }
                None => ServerState::setup(&elements, params)?,
            };
            let policy = match pin_reveal {
                None => PolicyName::Any,
                Some(Pin::Psi) => PolicyName::Psi,
                Some(Pin::Cardinality) => PolicyName::Cardinality,
            };
            KeyFile::new(&state, ds, policy).save(&key_out)?;
            write_file(&out, &msg.encode())?;
            println!(
                "wrote {} ({} bytes) for {} elements",
                out.display(),
                msg.encoded_len(),
                elements.len()
            );
        }
        Command::Serve {
            key,
            listen,
            max_requests,
        } => {
            let state = KeyFile::load(&key)?.server_state()?;
            let listener = TcpListener::bind(&listen)
                .map_err(|e| CliError::io(format!("binding {listen}"), e))?;
            let addr = listener
                .local_addr()
                .map_err(|e| CliError::io("reading bound address", e))?;
            println!("listening on {addr}");
            let _ = std::io::stdout().flush();
            Arc::new(Service::new(state, max_requests))
                .serve(listener)
                .map_err(|e| CliError::io("serving", e))?;
        }
        Command::Query {
            client_set,
            setup,
            connect,
            reveal,
        } => {
            let elements = read_elements(&client_set)?;
            let setup_bytes = fs::read(&setup)
                .map_err(|e| CliError::io(format!("reading {}", setup.display()), e))?;
            let setup = SetupMessage::decode(&setup_bytes)?;
            let (mut client, request) = ClientState::create_request(&elements, reveal);
            let mut conn = Connection::connect(&connect)
                .map_err(|e| CliError::io(format!("connecting to {connect}"), e))?;
            let reply = conn.request(&request.encode()).map_err(|e| match e {
                QueryError::Io(e) => CliError::io(format!("talking to {connect}"), e),
                QueryError::Remote(e) => CliError::Remote(e),
            })?;
            let response = ResponseMessage::decode(&reply)?;
            match client.process_response(&setup, &response)? {
                IntersectionResult::Indices(idx) => {
                    for i in idx {
                        println!("{i}");
                    }
                }
                IntersectionResult::Cardinality(c) => println!("{c}"),
            }
        }
        Command::Bench {
            server_size,
            client_size,
            fpr,
            ds,
            reveal,
            runs,
            extrapolate_to,
            memory_budget_mib,
            sizes,
        } => {
            let budget = memory_budget_mib << 20;
            if sizes {
                let rows = bench::size_table(server_size, &bench::TABLE_FPRS, budget)?;
                print!("{}", bench::render_size_table(&rows));
            } else {
                let ds: DsName = ds.into();
                let mut cfg = BenchConfig::new(server_size, client_size, fpr, ds.into(), reveal);
                cfg.runs = runs;
                cfg.memory_budget = budget;
                cfg.extrapolate_to = extrapolate_to;
                let report = bench::run(&cfg)?;
                print!("{}", report.render_table());
                print!("{}", report.render_machine());
            }
        }
    }
    Ok(())
}
