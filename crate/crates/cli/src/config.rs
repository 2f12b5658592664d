//! `key = value` run files.
//!
//! Keys are long flag names (`max-epochs` or `max_epochs`). Entries before any
//! `[section]` header apply to every subcommand that has the flag; entries in
//! `[train]`, `[benchmark]` and so on apply only to that subcommand, and an
//! unknown key there is an error. Blank lines and `#` comments are skipped.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Command;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: Option<String>,
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut section = None;
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(name.trim().to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key = value, found {line:?}", i + 1);
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            bail!("line {}: invalid key {key:?}", i + 1);
        }
        entries.push(Entry { section: section.clone(), key, value: value.trim().to_string(), line: i + 1 });
    }
    Ok(entries)
}

pub fn load(path: &Path) -> Result<Vec<Entry>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse(&text).with_context(|| format!("in config {}", path.display()))
}

/// Turns the entries relevant to `sub` into `--key value` arguments.
pub fn to_args(entries: &[Entry], sub: &Command) -> Result<Vec<OsString>> {
    let name = sub.get_name();
    let mut args = Vec::new();
    for e in entries {
        let known = sub.get_arguments().any(|a| a.get_long() == Some(e.key.as_str()));
        match e.section.as_deref() {
            None if !known => continue,
            Some(s) if s != name => continue,
            Some(_) if !known => bail!("line {}: `{name}` has no option --{}", e.line, e.key),
            _ => {}
        }
        args.push(OsString::from(format!("--{}", e.key)));
        args.push(OsString::from(&e.value));
    }
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Arg;

    #[test]
    fn sections_and_comments() {
        let e = parse("# run\nseed = 3\n\n[train]\nmax_epochs=10 # short\n").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].section, None);
        assert_eq!(e[1].key, "max-epochs");
        assert_eq!(e[1].value, "10");
        assert_eq!(e[1].section.as_deref(), Some("train"));
        assert!(parse("seed 3").is_err());
    }

    #[test]
    fn only_matching_flags_are_forwarded() {
        let sub = Command::new("train").arg(Arg::new("seed").long("seed")).arg(Arg::new("max-epochs").long("max-epochs"));
        let e = parse("seed = 1\norder = 5\n[train]\nmax-epochs = 4\n[generate]\nlength = 9\n").unwrap();
        let args: Vec<String> = to_args(&e, &sub).unwrap().into_iter().map(|s| s.into_string().unwrap()).collect();
        assert_eq!(args, ["--seed", "1", "--max-epochs", "4"]);
        let bad = parse("[train]\nlength = 9\n").unwrap();
        assert!(to_args(&bad, &sub).is_err());
    }
}
