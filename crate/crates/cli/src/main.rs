fn main() {
    std::process::exit(eql_cli::run(std::env::args_os()));
}
