fn main() -> std::process::ExitCode {
    phyfusion::cli::main()
}
