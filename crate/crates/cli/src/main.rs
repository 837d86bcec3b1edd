fn main() {
    std::process::exit(sieve_ate_cli::main_with_args(std::env::args_os()));
}
