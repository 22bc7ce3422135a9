use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(pet_renorm::cli::run(std::env::args_os()) as u8)
}
