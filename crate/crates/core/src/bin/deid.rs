fn main() -> std::process::ExitCode {
    deid::cli::run(std::env::args_os())
}
