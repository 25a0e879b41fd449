fn main() {
    std::process::exit(pulse_spectra::cli::main_with(std::env::args_os()));
}
