fn main() -> std::process::ExitCode {
    hstream_core::cli::main()
}
