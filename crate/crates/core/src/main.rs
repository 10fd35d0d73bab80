fn main() {
    std::process::exit(crsf_forge::cli::dispatch(std::env::args_os()));
}
