fn main() {
    let code = vulnclass::cli::run(std::env::args_os());
    std::process::exit(code);
}
