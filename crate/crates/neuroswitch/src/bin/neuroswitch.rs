fn main() {
    std::process::exit(neuroswitch::cli::run(std::env::args_os()));
}
