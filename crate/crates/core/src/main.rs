fn main() {
    std::process::exit(rds_dichotomy::cli::run(std::env::args_os()));
}
