fn main() {
    std::process::exit(nrules::cli::run(std::env::args_os()));
}
