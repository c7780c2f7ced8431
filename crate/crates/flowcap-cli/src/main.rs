use clap::Parser;
use flowcap_cli::cli::Cli;
use flowcap_cli::commands::run;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    if let Err(e) = run(cli, &mut lock) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
