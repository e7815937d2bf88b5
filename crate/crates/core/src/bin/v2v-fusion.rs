use std::process::ExitCode;

use clap::Parser;
use v2v_fusion::cli::{run, RunOptions};

fn main() -> ExitCode {
    let opts = RunOptions::parse();
    match run(&opts) {
        Ok(out) => {
            print!("{}", out.summary());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
