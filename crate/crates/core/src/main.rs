fn main() {
    let env = std::env::var(mssfm::cli::WORKERS_ENV).ok();
    std::process::exit(mssfm::cli::main_with(std::env::args_os(), env.as_deref()));
}
