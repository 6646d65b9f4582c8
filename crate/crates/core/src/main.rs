fn main() {
    std::process::exit(mexflow::cli::dispatch(std::env::args_os()));
}
