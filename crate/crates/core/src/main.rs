fn main() {
    env_logger::init();
    std::process::exit(hrtf4d::cli::run(std::env::args_os()));
}
