fn main() {
    std::process::exit(vcd_cli::run(std::env::args_os()));
}
