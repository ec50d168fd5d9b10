use clap::Parser;
use nfs_tool::app::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    let code = match execute(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("{}", f.body);
            f.code
        }
    };
    std::process::exit(code);
}
