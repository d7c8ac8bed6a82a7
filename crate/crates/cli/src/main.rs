fn main() {
    std::process::exit(nearfield_cli::dispatch(std::env::args_os()));
}
