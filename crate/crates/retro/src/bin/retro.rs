fn main() {
    std::process::exit(retro::cli::run(std::env::args_os()));
}
