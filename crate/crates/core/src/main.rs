fn main() -> std::process::ExitCode {
    frametop::cli::main()
}
