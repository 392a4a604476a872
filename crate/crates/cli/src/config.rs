//! `--config FILE` support. The file holds the same keys as the flags.
//! Top-level keys apply to whichever subcommand knows them; keys inside a
//! `[subcommand]` table must belong to that subcommand. Values are injected
//! as flags only where the command line left the flag out, so flags win.

use clap::{ArgAction, Command};

use crate::Failure;

/// Removes `--config FILE` from `argv` and splices the file's values in.
pub fn apply(mut argv: Vec<String>, cli: &Command) -> Result<Vec<String>, Failure> {
    let Some(path) = take_config(&mut argv)? else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Input(format!("{path}: {e}")))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e: toml::de::Error| Failure::Input(format!("{path}: {}", e.message())))?;

    // without a subcommand clap reports the usage error itself
    let Some(name) = argv.get(1).filter(|a| !a.starts_with('-')).cloned() else {
        return Ok(argv);
    };
    let Some(sub) = cli.find_subcommand(&name) else {
        return Ok(argv);
    };

    let mut entries: Vec<(String, &toml::Value, bool)> = Vec::new();
    for (key, value) in &table {
        match value {
            toml::Value::Table(inner) => {
                if cli.find_subcommand(key).is_none() {
                    return Err(Failure::Usage(format!("{path}: unknown section [{key}]")));
                }
                if *key == name {
                    entries.extend(inner.iter().map(|(k, v)| (k.replace('_', "-"), v, true)));
                }
            }
            _ => entries.push((key.replace('_', "-"), value, false)),
        }
    }

    let mut extra = Vec::new();
    for (key, value, strict) in entries {
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            if strict {
                return Err(Failure::Usage(format!("{path}: [{name}] has no key {key:?}")));
            }
            continue;
        };
        let flag = format!("--{key}");
        let takes_value = !matches!(arg.get_action(), ArgAction::SetTrue | ArgAction::SetFalse);
        let tokens = match (value, takes_value) {
            (toml::Value::Boolean(true), false) => vec![flag.clone()],
            (toml::Value::Boolean(false), false) => vec![],
            (toml::Value::String(s), true) => vec![flag.clone(), s.clone()],
            (toml::Value::Integer(i), true) => vec![flag.clone(), i.to_string()],
            (toml::Value::Boolean(b), true) => vec![flag.clone(), b.to_string()],
            _ => return Err(Failure::Usage(format!("{path}: bad value for {key:?}"))),
        };
        if !argv.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}="))) {
            extra.extend(tokens);
        }
    }
    argv.extend(extra);
    Ok(argv)
}

fn take_config(argv: &mut Vec<String>) -> Result<Option<String>, Failure> {
    let mut found = None;
    let mut i = 1;
    while i < argv.len() {
        if argv[i] == "--" {
            break;
        }
        if argv[i] == "--config" {
            if i + 1 >= argv.len() {
                return Err(Failure::Usage("--config needs a file".into()));
            }
            found = Some(argv.remove(i + 1));
            argv.remove(i);
        } else if let Some(p) = argv[i].strip_prefix("--config=") {
            found = Some(p.to_string());
            argv.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(found)
}
