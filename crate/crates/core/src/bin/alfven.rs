fn main() {
    std::process::exit(alfven_slab::cli_io::cli(std::env::args_os()));
}
