fn main() {
    env_logger::init();
    std::process::exit(posesprite::cli::run(std::env::args_os()));
}
