fn main() -> std::process::ExitCode {
    flux_core::cli::main()
}
