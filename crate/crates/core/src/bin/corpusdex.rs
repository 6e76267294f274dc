fn main() {
    std::process::exit(corpusdex::cli::main_with_args(std::env::args_os()));
}
