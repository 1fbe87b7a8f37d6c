fn main() {
    std::process::exit(stcl::cli::run_from_env());
}
