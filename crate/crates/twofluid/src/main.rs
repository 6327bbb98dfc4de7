fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(twofluid::cli::run(&args));
}
