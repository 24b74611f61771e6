fn main() -> std::process::ExitCode {
    splitplace::cli::main()
}
