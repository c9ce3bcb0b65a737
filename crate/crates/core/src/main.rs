fn main() {
    std::process::exit(boostsel::cli::run(std::env::args_os()));
}
