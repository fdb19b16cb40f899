fn main() {
    std::process::exit(dfkd_beam::cli::run(std::env::args_os()));
}
