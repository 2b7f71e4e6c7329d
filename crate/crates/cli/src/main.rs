fn main() {
    std::process::exit(gotmix_cli::dispatch(std::env::args_os().skip(1)));
}
