fn main() { std::process::exit(depcag::cli::run()); }
