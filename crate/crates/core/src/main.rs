fn main() {
    std::process::exit(gridtalk::cli::main_entry(std::env::args_os()));
}
