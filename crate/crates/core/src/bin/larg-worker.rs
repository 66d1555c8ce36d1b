//! Sandbox worker: speaks the NDJSON execution protocol on stdin/stdout.

fn main() {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    if let Err(e) = larg::sandbox::runner::serve(stdin.lock(), stdout.lock()) {
        eprintln!("larg-worker: {e}");
        std::process::exit(1);
    }
}
