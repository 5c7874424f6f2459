fn main() -> std::process::ExitCode {
    sbgc::cli::run()
}
