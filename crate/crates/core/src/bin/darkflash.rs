fn main() -> std::process::ExitCode {
    darkflash::cli::main()
}
