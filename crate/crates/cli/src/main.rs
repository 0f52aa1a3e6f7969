fn main() {
    std::process::exit(sop_cli::run(std::env::args_os()));
}
