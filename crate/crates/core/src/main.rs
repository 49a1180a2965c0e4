fn main() {
    std::process::exit(svekit::experiments::cli_main(std::env::args_os()));
}
