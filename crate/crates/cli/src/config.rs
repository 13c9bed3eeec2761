//! Plain key=value config files. Every long flag has a config equivalent
//! (same name, `-` or `_` separated); values from the file are injected
//! into the argument list before parsing, but only for flags the command
//! line does not already carry, so explicit flags always win.
//!
//! Lines starting with `#` are comments — manifests written by a run are
//! themselves valid config files and replay it.

use std::path::Path;

use stackpool::{Error, Result};

pub fn load_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                row: lineno + 1,
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(Error::Parse {
                row: lineno + 1,
                message: "empty key".into(),
            });
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}

/// Splices config entries into `args` (after the existing tokens),
/// skipping keys already present as `--key` or `--key=...`.
pub fn merge_into_args(args: &mut Vec<String>, pairs: &[(String, String)]) {
    for (key, value) in pairs {
        let flag = format!("--{key}");
        let flag_eq = format!("--{key}=");
        let present = args
            .iter()
            .any(|a| a == &flag || a.starts_with(&flag_eq));
        if present {
            continue;
        }
        match value.as_str() {
            "true" | "1" if is_switch(key) => args.push(flag),
            "false" | "0" if is_switch(key) => {}
            _ => {
                args.push(flag);
                args.push(value.clone());
            }
        }
    }
}

/// Boolean switches (flags without values).
fn is_switch(key: &str) -> bool {
    matches!(key, "log-scale" | "exact-gillespie")
}

/// Extracts `--config PATH` (or `--config=PATH`) from a raw argument
/// list without invoking the full parser.
pub fn find_config_arg(args: &[String]) -> Option<std::path::PathBuf> {
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        if a == "--config" {
            return iter.next().map(Into::into);
        }
        if let Some(rest) = a.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_merges_with_cli_precedence() {
        let dir = std::env::temp_dir().join("stackpool-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cfg.txt");
        std::fs::write(&path, "# comment\nseed = 9\nreplicates=3\nlog-scale = true\n").unwrap();
        let pairs = load_pairs(&path).unwrap();
        let mut args: Vec<String> = ["stackpool", "simulate", "iid", "--seed", "7"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        merge_into_args(&mut args, &pairs);
        assert!(args.contains(&"--replicates".to_string()));
        assert!(args.contains(&"--log-scale".to_string()));
        // --seed was given on the command line; the config must not add it.
        assert_eq!(args.iter().filter(|a| *a == "--seed").count(), 1);
        assert!(args.contains(&"7".to_string()));
        assert!(!args.contains(&"9".to_string()));
    }

    #[test]
    fn rejects_malformed_lines() {
        let dir = std::env::temp_dir().join("stackpool-config-test2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.txt");
        std::fs::write(&path, "just-a-word\n").unwrap();
        assert!(load_pairs(&path).is_err());
    }
}
