fn main() {
    std::process::exit(sshk::cli::run(std::env::args_os()));
}
