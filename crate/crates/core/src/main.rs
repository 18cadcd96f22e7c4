fn main() {
    std::process::exit(owc_noma::cli::cli_main(std::env::args_os()));
}
