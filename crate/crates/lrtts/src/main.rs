fn main() {
    std::process::exit(lrtts::cli::run(std::env::args_os()));
}
