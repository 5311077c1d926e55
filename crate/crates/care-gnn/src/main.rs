fn main() {
    std::process::exit(care_gnn::cli::run(std::env::args_os()));
}
