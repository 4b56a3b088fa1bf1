use carelink_core::domain::PrincipalId;
use carelink_core::security::{format_key_file, SubscriberKey};
use carelink_http::{clinic, pharmacy, with_ui, ServerConfig};
use clap::Parser;
use std::collections::HashMap;
use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

/// Runs the clinic and pharmacy HTTP fronts.
#[derive(Parser)]
#[command(name = "carelink-server", version)]
struct Args {
    /// TOML config file. Defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Print the effective registry snapshot and exit.
    #[arg(long)]
    print_registry: bool,
    /// Print a key file with fresh random keys for these principals and exit.
    #[arg(long, value_delimiter = ',', value_name = "ID,...")]
    generate_keys: Option<Vec<String>>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let args = Args::parse();

    if let Some(ids) = args.generate_keys {
        let keys: HashMap<_, _> = ids.iter().map(|id| (PrincipalId::new(id.as_str()), SubscriberKey::generate())).collect();
        print!("{}", format_key_file(&keys));
        return ExitCode::SUCCESS;
    }

    let cfg = match &args.config {
        Some(path) => ServerConfig::load(path),
        None => Ok(ServerConfig::default()),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let d = match cfg.build() {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if args.print_registry {
        print!("{}", d.registry.export_snapshot());
        return ExitCode::SUCCESS;
    }

    let (clinic_addr, pharmacy_addr) = cfg.addrs();
    let mut bound = Vec::new();
    if let Some(addr) = clinic_addr {
        match carelink_http::spawn(addr, with_ui(clinic::router(d.clinic.clone()), cfg.ui_dir())) {
            Ok(a) => bound.push(("clinic", a)),
            Err(e) => {
                eprintln!("error: binding clinic front on {addr}: {e}");
                return ExitCode::FAILURE;
            }
        }
    }
    if let Some(addr) = pharmacy_addr {
        match carelink_http::spawn(addr, with_ui(pharmacy::router(d.pharmacy.clone()), cfg.ui_dir())) {
            Ok(a) => bound.push(("pharmacy", a)),
            Err(e) => {
                eprintln!("error: binding pharmacy front on {addr}: {e}");
                return ExitCode::FAILURE;
            }
        }
    }
    for (name, addr) in &bound {
        tracing::info!("{name} front listening on http://{addr}");
    }
    // the fronts run on their own threads until the process is killed
    loop {
        std::thread::park();
    }
}
