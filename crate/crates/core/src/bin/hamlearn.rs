fn main() -> std::process::ExitCode {
    hamlearn::cli::main()
}
