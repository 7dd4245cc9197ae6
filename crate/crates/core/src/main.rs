use std::panic;

fn main() {
    let code = panic::catch_unwind(|| polarmix::cli::run(std::env::args_os()))
        .unwrap_or(polarmix::cli::EXIT_INTERNAL);
    std::process::exit(code);
}
