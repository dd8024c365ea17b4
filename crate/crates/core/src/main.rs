fn main() { std::process::exit(mssv::cli::run()) }
