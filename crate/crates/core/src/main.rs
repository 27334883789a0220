fn main() {
    std::process::exit(funnel_core::cli::main_exit_code());
}
