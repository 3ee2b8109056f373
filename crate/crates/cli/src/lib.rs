//! The `sigscript` command line.
//!
//! [`run`] is the whole program minus process setup, so tests can drive it
//! in-process with byte buffers for the standard streams.
//!
//! Exit codes: `0` success or PASS, `1` verification failure or malformed
//! input, `2` usage, key or I/O errors. `serve` exits `1` when its
//! configuration or policy cannot be loaded.

pub mod corpus;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sigscript_core::{
    attach_signature, generate_keypair, sha256_digest, sign_payload, strip_signatures,
    verify_resource, Digest, EnvelopeView, KeyId, PrivateKey, PublicKey, TrustRule,
};
use sigscript_gateway::{GatewayConfig, CONFIG_ENV};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Read from standard input instead of a file.
const STDIN_PATH: &str = "-";

#[derive(Debug, Parser)]
#[command(name = "sigscript", version, about = "Sign and verify scripts with embedded signature comments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an RSA key pair as PEM files.
    Keygen(KeygenArgs),
    /// Prepend a signature line covering the whole input.
    Sign(SignArgs),
    /// Check a file against pinned keys and/or a legacy digest.
    Verify(VerifyArgs),
    /// Print the SHA-256 of the exact file bytes.
    Digest(FileArg),
    /// List signature layers without verifying them.
    Inspect(FileArg),
    /// Remove all signature lines, leaving the payload.
    Strip(StripArgs),
    /// Run the verifying gateway.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    #[arg(long, default_value_t = 2048)]
    pub bits: usize,
    #[arg(long, value_name = "PATH")]
    pub out_priv: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub out_pub: PathBuf,
    #[arg(long, value_name = "ID")]
    pub key_id: Option<KeyId>,
    /// Replace existing files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SignArgs {
    #[arg(long, value_name = "PRIV.pem")]
    pub key: PathBuf,
    #[arg(long, value_name = "ID")]
    pub key_id: Option<KeyId>,
    /// Input file, or `-` for stdin.
    #[arg(value_name = "IN")]
    pub input: PathBuf,
    /// Output file (written atomically); stdout if omitted.
    #[arg(short = 'o', value_name = "OUT")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("basis").required(true).multiple(true).args(["pub_keys", "legacy_digest"]))]
pub struct VerifyArgs {
    #[arg(long = "pub", value_name = "PUB.pem")]
    pub pub_keys: Vec<PathBuf>,
    /// Number of distinct pinned keys that must sign. Defaults to 1 with keys.
    #[arg(long, value_name = "K")]
    pub require: Option<usize>,
    #[arg(long, value_name = "HEX", value_parser = parse_digest)]
    pub legacy_digest: Option<Digest>,
    /// Print the verdict as JSON on stdout.
    #[arg(long)]
    pub json: bool,
    #[arg(value_name = "FILE")]
    pub file: PathBuf,
}

#[derive(Debug, Args)]
pub struct FileArg {
    #[arg(value_name = "FILE")]
    pub file: PathBuf,
}

#[derive(Debug, Args)]
pub struct StripArgs {
    #[arg(value_name = "FILE")]
    pub file: PathBuf,
    #[arg(short = 'o', value_name = "OUT")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Gateway config file. Falls back to $SIGSCRIPT_CONFIG.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

fn parse_digest(s: &str) -> Result<Digest, String> {
    Digest::from_hex(&s.to_ascii_lowercase()).ok_or_else(|| "expected 64 hex characters".to_owned())
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn fail(message: impl Into<String>) -> Self {
        Self { code: EXIT_FAIL, message: message.into() }
    }
}

type CmdResult = Result<u8, Failure>;

struct Io<'a> {
    stdin: &'a mut dyn Read,
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = stderr.write_all(rendered.as_bytes());
            } else {
                let _ = stdout.write_all(rendered.as_bytes());
            }
            return e.exit_code().clamp(0, 255) as u8;
        }
    };

    let mut io = Io { stdin, stdout, stderr };
    let result = match cli.command {
        Command::Keygen(args) => keygen(args, &mut io),
        Command::Sign(args) => sign(args, &mut io),
        Command::Verify(args) => verify(args, &mut io),
        Command::Digest(args) => digest(args, &mut io),
        Command::Inspect(args) => inspect(args, &mut io),
        Command::Strip(args) => strip(args, &mut io),
        Command::Serve(args) => serve(args),
    };
    let code = match result {
        Ok(code) => code,
        Err(failure) => {
            let _ = writeln!(io.stderr, "sigscript: {}", failure.message);
            failure.code
        }
    };
    let _ = io.stdout.flush();
    code
}

fn keygen(args: KeygenArgs, io: &mut Io<'_>) -> CmdResult {
    if args.out_priv == args.out_pub {
        return Err(Failure::usage("--out-priv and --out-pub must differ"));
    }
    if !args.force {
        for path in [&args.out_priv, &args.out_pub] {
            if path.exists() {
                return Err(Failure::usage(format!(
                    "refusing to overwrite {} (use --force)",
                    path.display()
                )));
            }
        }
    }

    let pair = generate_keypair(args.bits).map_err(|e| Failure::usage(e.to_string()))?;
    let private_pem = pair.private.to_pem().map_err(|e| Failure::usage(e.to_string()))?;
    let public_pem = pair.public.to_pem().map_err(|e| Failure::usage(e.to_string()))?;

    // Temp files are created owner-only, which is what the private key keeps.
    write_atomic(&args.out_priv, private_pem.as_bytes(), args.force, None)?;
    write_atomic(&args.out_pub, public_pem.as_bytes(), args.force, Some(0o644))?;

    let label = args.key_id.clone().unwrap_or_else(|| pair.public.label());
    let fragment = serde_json::json!({
        "pinned_keys": [args.out_pub.display().to_string()],
        "key_ids": [label.as_str()],
    });
    writeln!(io.stdout, "{fragment}").map_err(io_failure)?;
    let _ = writeln!(
        io.stderr,
        "wrote {} and {} ({} bits, fingerprint {})",
        args.out_priv.display(),
        args.out_pub.display(),
        args.bits,
        pair.public.fingerprint()
    );
    Ok(EXIT_OK)
}

fn sign(args: SignArgs, io: &mut Io<'_>) -> CmdResult {
    let key = PrivateKey::read_pem_file(&args.key).map_err(|e| Failure::usage(e.to_string()))?;
    let key = match args.key_id {
        Some(id) => key.with_key_id(Some(id)),
        None => key,
    };
    let input = read_input(&args.input, io)?;
    let line = sign_payload(&key, &input).map_err(|e| Failure::usage(e.to_string()))?;
    let signed = attach_signature(&input, &line);
    emit(args.output.as_deref(), &signed, io)?;
    Ok(EXIT_OK)
}

fn verify(args: VerifyArgs, io: &mut Io<'_>) -> CmdResult {
    let required = args.require.unwrap_or(usize::from(!args.pub_keys.is_empty()));
    if required > args.pub_keys.len() {
        return Err(Failure::usage(format!(
            "--require {required} exceeds the {} key(s) given with --pub",
            args.pub_keys.len()
        )));
    }

    let keys = args
        .pub_keys
        .iter()
        .map(|path| PublicKey::read_pem_file(path))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::usage(e.to_string()))?;
    let rule = TrustRule::ad_hoc(keys, required, args.legacy_digest)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let file = read_input(&args.file, io)?;

    let verdict = verify_resource(&rule, &file);
    let _ = writeln!(io.stderr, "{verdict}");
    if args.json {
        writeln!(io.stdout, "{}", verdict.to_json()).map_err(io_failure)?;
    }
    Ok(if verdict.is_pass() { EXIT_OK } else { EXIT_FAIL })
}

fn digest(args: FileArg, io: &mut Io<'_>) -> CmdResult {
    let file = read_input(&args.file, io)?;
    writeln!(io.stdout, "{}", sha256_digest(&file).to_hex()).map_err(io_failure)?;
    Ok(EXIT_OK)
}

fn inspect(args: FileArg, io: &mut Io<'_>) -> CmdResult {
    let file = read_input(&args.file, io)?;
    let view = EnvelopeView::parse(&file).map_err(|e| Failure::fail(e.to_string()))?;

    let out = &mut io.stdout;
    let noun = if view.len() == 1 { "signature" } else { "signatures" };
    writeln!(out, "{} {noun}", view.len()).map_err(io_failure)?;
    if !view.is_empty() {
        writeln!(out, "{:<6} {:<32} {:>9} {:>13}", "layer", "key_id", "sig_bytes", "covered_bytes")
            .map_err(io_failure)?;
    }
    for (i, layer) in view.layers().iter().enumerate() {
        let key_id = layer.line.key_id.as_ref().map_or("-", KeyId::as_str);
        writeln!(
            out,
            "{:<6} {:<32} {:>9} {:>13}",
            i,
            key_id,
            layer.line.signature.len(),
            file.len() - layer.covered_from
        )
        .map_err(io_failure)?;
    }
    Ok(EXIT_OK)
}

fn strip(args: StripArgs, io: &mut Io<'_>) -> CmdResult {
    let file = read_input(&args.file, io)?;
    let payload = strip_signatures(&file).map_err(|e| Failure::fail(e.to_string()))?;
    emit(args.output.as_deref(), &payload, io)?;
    Ok(EXIT_OK)
}

fn serve(args: ServeArgs) -> CmdResult {
    let path = args
        .config
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
        .ok_or_else(|| Failure::fail(format!("no config given (use --config or set {CONFIG_ENV})")))?;
    let config = GatewayConfig::load(&path).map_err(|e| Failure::fail(e.to_string()))?;

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::fail(format!("cannot start runtime: {e}")))?;
    runtime
        .block_on(sigscript_gateway::serve(config))
        .map_err(|e| Failure::fail(e.to_string()))?;
    Ok(EXIT_OK)
}

fn io_failure(e: io::Error) -> Failure {
    Failure::usage(e.to_string())
}

fn read_input(path: &Path, io: &mut Io<'_>) -> Result<Vec<u8>, Failure> {
    if path.as_os_str() == STDIN_PATH {
        let mut buf = Vec::new();
        io.stdin.read_to_end(&mut buf).map_err(|e| Failure::usage(format!("stdin: {e}")))?;
        return Ok(buf);
    }
    fs::read(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn emit(output: Option<&Path>, bytes: &[u8], io: &mut Io<'_>) -> Result<(), Failure> {
    match output {
        Some(path) => write_atomic(path, bytes, true, None),
        None => io.stdout.write_all(bytes).map_err(io_failure),
    }
}

/// Writes through a temp file in the target directory and renames it into
/// place. Without `overwrite` an existing target is left alone.
fn write_atomic(path: &Path, bytes: &[u8], overwrite: bool, mode: Option<u32>) -> Result<(), Failure> {
    let err = |e: &dyn std::fmt::Display| Failure::usage(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| err(&e))?;
    tmp.write_all(bytes).map_err(|e| err(&e))?;
    tmp.as_file().sync_all().map_err(|e| err(&e))?;
    #[cfg(unix)]
    if let Some(mode) = mode {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(tmp.path(), fs::Permissions::from_mode(mode)).map_err(|e| err(&e))?;
    }
    #[cfg(not(unix))]
    let _ = mode;
    if overwrite {
        tmp.persist(path).map_err(|e| err(&e.error))?;
    } else {
        tmp.persist_noclobber(path).map_err(|e| err(&e.error))?;
    }
    Ok(())
}
