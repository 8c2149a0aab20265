fn main() -> std::process::ExitCode {
    cake_moisture::cli::main()
}
