use clap::Parser;
use triage_server::cli::{error_record, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        let (record, code) = error_record(&e);
        eprintln!("{record}");
        std::process::exit(code);
    }
}
