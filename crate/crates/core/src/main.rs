fn main() {
    let cli = <duality_lab::cli::Cli as clap::Parser>::parse();
    let (out, err, code) = duality_lab::cli::run(&cli);
    use std::io::Write;
    let _ = std::io::stdout().write_all(&out);
    eprint!("{err}");
    std::process::exit(code);
}
