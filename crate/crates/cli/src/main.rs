use clap::Parser;

fn main() {
    let cli = mqa_cli::Cli::parse();
    if let Err(e) = mqa_cli::run(cli) {
        // Library errors often repeat their source in their own message.
        let mut msg = String::new();
        for cause in e.chain() {
            let text = cause.to_string();
            if !msg.contains(&text) {
                if !msg.is_empty() {
                    msg.push_str(": ");
                }
                msg.push_str(&text);
            }
        }
        eprintln!("error: {msg}");
        std::process::exit(1);
    }
}
