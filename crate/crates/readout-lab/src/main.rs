fn main() {
    std::process::exit(readout_lab::cli::run());
}
