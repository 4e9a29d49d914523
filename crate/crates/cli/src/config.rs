//! Flat `key = value` config files, spliced into the argument list; keys
//! also given as explicit flags are dropped so the flags win.

use std::fs;
use std::path::Path;

use crate::CliError;

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
        }
        out.push((key, v.trim().trim_matches('"').to_string()));
    }
    Ok(out)
}

/// Turns config pairs into flags. `true` becomes a bare switch and `false`
/// drops the key.
pub fn config_flags(pairs: &[(String, String)]) -> Vec<String> {
    let mut out = Vec::new();
    for (k, v) in pairs {
        match v.as_str() {
            "true" => out.push(format!("--{k}")),
            "false" => {}
            _ => {
                out.push(format!("--{k}"));
                out.push(v.clone());
            }
        }
    }
    out
}

/// Rewrites `ssb <cmd> ... --config FILE ...` into
/// `ssb <cmd> <flags from FILE> ...`.
pub fn expand_args(args: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(
                it.next()
                    .ok_or_else(|| CliError::Usage("--config needs a path".into()))?,
            );
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text = fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
    // keys given explicitly on the command line win over the file
    let explicit: Vec<&str> = rest
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a))
        .collect();
    let pairs: Vec<(String, String)> = parse_config(&text)?
        .into_iter()
        .filter(|(k, _)| !explicit.contains(&k.as_str()))
        .collect();
    let flags = config_flags(&pairs);
    // program name and subcommand stay in front
    let split = rest.len().min(2);
    let mut out: Vec<String> = rest[..split].to_vec();
    out.extend(flags);
    out.extend_from_slice(&rest[split..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blanks_and_underscores() {
        let pairs = parse_config("# header\n\nsigma = 0.5:1.0:0.25 # grid\nmax_iter=3\n").unwrap();
        assert_eq!(
            pairs,
            vec![
                ("sigma".into(), "0.5:1.0:0.25".into()),
                ("max-iter".into(), "3".into())
            ]
        );
        assert!(parse_config("novalue\n").is_err());
    }

    #[test]
    fn switches_follow_booleans() {
        let flags = config_flags(&[("assert".into(), "true".into()), ("quiet".into(), "false".into())]);
        assert_eq!(flags, vec!["--assert"]);
    }

    #[test]
    fn file_flags_precede_user_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        fs::write(&p, "depth = 7\nseed = 3\n").unwrap();
        let args = [
            "ssb",
            "phase-diagram",
            "--config",
            p.to_str().unwrap(),
            "--seed",
            "9",
        ]
        .map(String::from)
        .to_vec();
        let out = expand_args(args).unwrap();
        assert_eq!(out, ["ssb", "phase-diagram", "--depth", "7", "--seed", "9"]);
    }
}
