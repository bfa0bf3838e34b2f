fn main() { std::process::exit(nbody_blowup::cli::dispatch(&std::env::args().collect::<Vec<_>>())); }
