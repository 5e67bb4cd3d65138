fn main() -> std::process::ExitCode {
    mclt::cli::main()
}
