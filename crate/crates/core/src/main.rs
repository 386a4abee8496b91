use clap::Parser;

use tvcavity::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(failure) = run(cli) {
        let report = serde_json::json!({
            "error": { "kind": failure.kind(), "message": failure.message() }
        });
        eprintln!("{report}");
        std::process::exit(failure.exit_code());
    }
}
