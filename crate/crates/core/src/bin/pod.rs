fn main() -> std::process::ExitCode {
    analyst_pod::cli::main()
}
