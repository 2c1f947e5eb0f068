use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use orthoconv::pipeline::write_atomic;
use orthoconv::text::{nfc, nfd};

pub const USAGE: i32 = 1;
pub const DATA: i32 = 2;
pub const RUNTIME: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl fmt::Display) -> Self {
        CliError {
            code: USAGE,
            message: message.to_string(),
        }
    }

    pub fn data(message: impl fmt::Display) -> Self {
        CliError {
            code: DATA,
            message: message.to_string(),
        }
    }

    pub fn runtime(message: impl fmt::Display) -> Self {
        CliError {
            code: RUNTIME,
            message: message.to_string(),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

fn label(path: Option<&Path>) -> String {
    path.map_or_else(|| "<stdin>".to_string(), |p| p.display().to_string())
}

pub fn read_bytes(path: Option<&Path>) -> CliResult<Vec<u8>> {
    let mut bytes = Vec::new();
    match path {
        Some(p) => {
            bytes = std::fs::read(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?
        }
        None => {
            std::io::stdin()
                .read_to_end(&mut bytes)
                .map_err(|e| CliError::data(format!("<stdin>: {e}")))?;
        }
    }
    Ok(bytes)
}

pub fn read_text(path: Option<&Path>) -> CliResult<String> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|e| {
        let line = e.as_bytes()[..e.utf8_error().valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1;
        CliError::data(format!("{}: line {line}: invalid UTF-8", label(path)))
    })
}

/// Lines of a UTF-8 file (or stdin), in canonical decomposed form.
pub fn read_lines(path: Option<&Path>) -> CliResult<Vec<String>> {
    let text = read_text(path)?;
    Ok(text.lines().map(nfd).collect())
}

/// Writes to `out` atomically, or to stdout.
pub fn emit(out: Option<&Path>, contents: &str) -> CliResult {
    match out {
        Some(p) => write_atomic(p, contents.as_bytes())
            .map_err(|e| CliError::runtime(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(contents.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::runtime(format!("<stdout>: {e}")))
        }
    }
}

/// One composed line per entry.
pub fn emit_lines<S: AsRef<str>>(out: Option<&Path>, lines: &[S]) -> CliResult {
    let mut text = String::new();
    for l in lines {
        text.push_str(&nfc(l.as_ref()));
        text.push('\n');
    }
    emit(out, &text)
}

/// Refuses to overwrite any of the command's inputs.
pub fn guard_output(out: Option<&Path>, flag: &str, inputs: &[Option<&PathBuf>]) -> CliResult {
    let Some(out) = out else { return Ok(()) };
    let same = |a: &Path, b: &Path| match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    };
    for input in inputs.iter().flatten() {
        if same(out, input) {
            return Err(CliError::usage(format!(
                "{flag} {} would overwrite an input file",
                out.display()
            )));
        }
    }
    Ok(())
}
