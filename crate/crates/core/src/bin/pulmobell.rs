fn main() {
    std::process::exit(pulmobell::cli::main(std::env::args_os()));
}
