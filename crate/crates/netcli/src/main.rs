fn main() {
    std::process::exit(poqm_netcli::cli::main_with_args(std::env::args_os()));
}
