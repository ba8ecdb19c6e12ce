fn main() {
    std::process::exit(mangaroll_service::cli::main(std::env::args_os()));
}
