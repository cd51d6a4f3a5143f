fn main() {
    std::process::exit(deid_harness::cli::run(std::env::args_os()));
}
