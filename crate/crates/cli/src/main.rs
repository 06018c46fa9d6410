fn main() {
    std::process::exit(saa_tool::run(std::env::args_os()));
}
