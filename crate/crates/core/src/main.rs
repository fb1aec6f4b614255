fn main() -> std::process::ExitCode {
    risk_lab::cli::main_entry()
}
