fn main() {
    std::process::exit(teamup_cli::run(std::env::args_os()));
}
