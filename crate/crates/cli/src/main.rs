use clap::Parser;
use comformer_cli::{run, Cli};

fn main() {
    // usage errors are input errors; exit 2 is reserved for geometry diagnostics
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = std::env::var("COMFORMER_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second global pool cannot be installed; ignoring keeps the default
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
