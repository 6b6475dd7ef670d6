use std::process::ExitCode;

use dividend_eq::cli;

const USAGE: &str = "usage: dividend-eq <solve|eval|sweep|simulate> --config <path> \
                     [--output <path>] [--seed <u64>]";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut command = None;
    let mut config = None;
    let mut output = None;
    let mut seed = None;

    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        match arg.as_str() {
            "--config" => config = iter.next().cloned(),
            "--output" => output = iter.next().cloned(),
            "--seed" => match iter.next().map(|s| s.parse::<u64>()) {
                Some(Ok(s)) => seed = Some(s),
                _ => {
                    eprintln!("error: --seed expects an unsigned integer");
                    return ExitCode::from(1);
                }
            },
            "--help" | "-h" => {
                println!("{USAGE}");
                return ExitCode::SUCCESS;
            }
            other if command.is_none() && !other.starts_with('-') => {
                command = Some(other.to_string());
            }
            other => {
                eprintln!("error: unexpected argument {other}\n{USAGE}");
                return ExitCode::from(1);
            }
        }
    }

    let (Some(command), Some(config)) = (command, config) else {
        eprintln!("{USAGE}");
        return ExitCode::from(1);
    };
    let code = cli::run(&command, &config, output.as_deref(), seed);
    ExitCode::from(code as u8)
}
