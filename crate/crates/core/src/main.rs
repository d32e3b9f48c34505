fn main() {
    std::process::exit(knobforge::cli::dispatch(std::env::args_os()));
}
