fn main() {
    std::process::exit(qchannel::cli::main());
}
