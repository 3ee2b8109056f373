//! Writes the shared conformance corpus with freshly generated keys.
//!
//!     cargo run -p sigscript-cli --example conformance_corpus -- OUT_DIR

use std::path::PathBuf;
use std::process::ExitCode;

use sigscript_cli::corpus::{write_corpus, CorpusKeys};
use sigscript_core::generate_keypair;

fn main() -> ExitCode {
    let Some(dir) = std::env::args_os().nth(1).map(PathBuf::from) else {
        eprintln!("usage: conformance_corpus OUT_DIR");
        return ExitCode::from(2);
    };
    let key = || generate_keypair(2048).expect("2048-bit keys are supported").private;
    let keys = CorpusKeys { primary: key(), secondary: key(), other: key() };
    match write_corpus(&dir, &keys) {
        Ok(vectors) => {
            println!("wrote {} vectors to {}", vectors.len(), dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("conformance_corpus: {e}");
            ExitCode::FAILURE
        }
    }
}
