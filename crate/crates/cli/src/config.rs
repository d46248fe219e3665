//! `--config FILE` support: a flat `key=value` file whose entries become
//! flags placed before the command-line flags, so explicit flags win.

use std::ffi::OsString;
use std::path::Path;

use crate::error::CliError;

/// Flags from a config file. `key=true` becomes a bare switch and
/// `key=false` is dropped.
pub fn parse_config(text: &str, path: &Path) -> Result<Vec<OsString>, CliError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "{}:{}: expected key=value, got {line:?}",
                path.display(),
                lineno + 1
            ))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(CliError::Usage(format!(
                "{}:{}: invalid key {key:?}",
                path.display(),
                lineno + 1
            )));
        }
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    Ok(out)
}

/// Removes `--config FILE` from `argv` and splices the file's flags in right
/// after the subcommand.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(arg) = it.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            let v = it
                .next()
                .ok_or_else(|| CliError::Usage("--config needs a file".into()))?;
            config = Some(v);
        } else if let Some(v) = s.strip_prefix("--config=") {
            config = Some(v.into());
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let path = Path::new(&path).to_path_buf();
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let extra = parse_config(&text, &path)?;
    let sub = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 2)
        .unwrap_or(rest.len());
    rest.splice(sub..sub, extra);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_pairs_and_switches() {
        let got = parse_config(
            "# comment\nwindow = 30\nraw_priors=true\nverbose=false\n\nnorm=l1\n",
            Path::new("x"),
        )
        .unwrap();
        assert_eq!(got, os(&["--window", "30", "--raw-priors", "--norm", "l1"]));
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(parse_config("window 30", Path::new("x")).is_err());
    }

    #[test]
    fn config_flags_precede_explicit_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "seed=5\n").unwrap();
        let argv = os(&[
            "tricluster",
            "generate",
            "--seed",
            "9",
            "--config",
            path.to_str().unwrap(),
        ]);
        let got = expand(argv).unwrap();
        assert_eq!(got, os(&["tricluster", "generate", "--seed", "5", "--seed", "9"]));
    }
}
