fn main() {
    std::process::exit(bearing_forms_cli::run(std::env::args_os()));
}
