//! Flag/file configuration merging and run manifests.
//!
//! A config file holds one `key = value` per line with `#` comments.
//! Flags override file entries; whatever wins is echoed into the run's
//! manifest, which is itself a valid config file (plus a `command`
//! entry), so any run can be repeated from its manifest alone.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Exit code 2 for bad invocations, 1 for everything else.
#[derive(Debug)]
pub enum AppError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Runtime(_) => 1,
        }
    }
}

impl Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Usage(msg) => write!(f, "{msg}"),
            AppError::Runtime(err) => write!(f, "{err}"),
        }
    }
}

impl From<govern_core::Error> for AppError {
    fn from(err: govern_core::Error) -> Self {
        AppError::Runtime(err.into())
    }
}

impl From<anyhow::Error> for AppError {
    fn from(err: anyhow::Error) -> Self {
        AppError::Runtime(err)
    }
}

pub type AppResult<T> = Result<T, AppError>;

pub fn usage(msg: impl Into<String>) -> AppError {
    AppError::Usage(msg.into())
}

fn parse_config_file(path: &str) -> AppResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::Runtime(anyhow::anyhow!("cannot read config {path}: {e}")))?;
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(usage(format!(
                "{path}:{}: expected `key = value`, got {line:?}",
                idx + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(usage(format!("{path}:{}: empty key or value", idx + 1)));
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(usage(format!("{path}:{}: duplicate key `{key}`", idx + 1)));
        }
    }
    Ok(map)
}

/// Merges flags over an optional config file, recording every resolved
/// setting for the manifest. Keys match the long flag names. Leftover
/// file keys are rejected in `finish`.
#[derive(Debug)]
pub struct Resolver {
    command: &'static str,
    file: BTreeMap<String, String>,
    resolved: Vec<(String, String)>,
}

impl Resolver {
    pub fn new(command: &'static str, config: Option<&str>) -> AppResult<Self> {
        let mut file = match config {
            Some(path) => parse_config_file(path)?,
            None => BTreeMap::new(),
        };
        if let Some(cmd) = file.remove("command") {
            if cmd != command {
                return Err(usage(format!(
                    "config is a manifest for `{cmd}`, not `{command}`"
                )));
            }
        }
        Ok(Resolver {
            command,
            file,
            resolved: Vec::new(),
        })
    }

    fn record(&mut self, key: &str, value: impl Display) {
        self.resolved.push((key.to_string(), value.to_string()));
    }

    fn parse_file_value<T>(&self, key: &str, raw: &str) -> AppResult<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        raw.parse().map_err(|e| {
            usage(format!("config key `{key}`: invalid value {raw:?}: {e}"))
        })
    }

    pub fn required<T>(&mut self, key: &str, flag: Option<T>) -> AppResult<T>
    where
        T: Display + FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            self.file.remove(key);
            self.record(key, &v);
            return Ok(v);
        }
        match self.file.remove(key) {
            Some(raw) => {
                let v: T = self.parse_file_value(key, &raw)?;
                self.record(key, &v);
                Ok(v)
            }
            None => Err(usage(format!(
                "missing `{key}`: pass --{key} or put `{key} = ...` in the config"
            ))),
        }
    }

    pub fn or_default<T>(&mut self, key: &str, flag: Option<T>, default: T) -> AppResult<T>
    where
        T: Display + FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            self.file.remove(key);
            self.record(key, &v);
            return Ok(v);
        }
        match self.file.remove(key) {
            Some(raw) => {
                let v: T = self.parse_file_value(key, &raw)?;
                self.record(key, &v);
                Ok(v)
            }
            None => {
                self.record(key, &default);
                Ok(default)
            }
        }
    }

    /// Absent key stays absent in the manifest; re-running reproduces
    /// the same default-less resolution.
    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> AppResult<Option<T>>
    where
        T: Display + FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            self.file.remove(key);
            self.record(key, &v);
            return Ok(Some(v));
        }
        match self.file.remove(key) {
            Some(raw) => {
                let v: T = self.parse_file_value(key, &raw)?;
                self.record(key, &v);
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }

    /// Presence-only flags can switch a setting on over the file but
    /// not off; the resolved value is recorded either way.
    pub fn switch(&mut self, key: &str, flag: bool) -> AppResult<bool> {
        let from_file = match self.file.remove(key) {
            Some(raw) => self.parse_file_value::<bool>(key, &raw)?,
            None => false,
        };
        let v = flag || from_file;
        self.record(key, v);
        Ok(v)
    }

    /// Rejects unconsumed file keys and returns the manifest body.
    pub fn finish(self) -> AppResult<Manifest> {
        if let Some(key) = self.file.keys().next() {
            return Err(usage(format!(
                "unknown config key `{key}` for `{}`",
                self.command
            )));
        }
        Ok(Manifest {
            command: self.command,
            entries: self.resolved,
        })
    }
}

#[derive(Debug)]
pub struct Manifest {
    command: &'static str,
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Default location: next to the primary output, else named after
    /// the command in the working directory.
    pub fn path(&self, explicit: Option<&str>, primary_out: Option<&str>) -> PathBuf {
        if let Some(p) = explicit {
            return PathBuf::from(p);
        }
        if let Some(out) = primary_out {
            let mut p = out.to_string();
            p.push_str(".manifest");
            return PathBuf::from(p);
        }
        PathBuf::from(format!("govern-{}.manifest", self.command.replace(' ', "-")))
    }

    pub fn write(&self, path: &Path) -> AppResult<()> {
        fs::write(path, self.render()).map_err(|e| {
            AppError::Runtime(anyhow::anyhow!(
                "cannot write manifest {}: {e}",
                path.display()
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn config_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn flags_override_file_values() {
        let f = config_file("seed = 7\nepochs = 3\n");
        let path = f.path().to_str().unwrap().to_string();
        let mut r = Resolver::new("distill", Some(&path)).unwrap();
        let seed: u64 = r.required("seed", Some(99)).unwrap();
        let epochs: usize = r.required("epochs", None::<usize>).unwrap();
        assert_eq!(seed, 99);
        assert_eq!(epochs, 3);
        let m = r.finish().unwrap();
        assert_eq!(m.render(), "command = distill\nseed = 99\nepochs = 3\n");
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let f = config_file("seeed = 7\n");
        let path = f.path().to_str().unwrap().to_string();
        let mut r = Resolver::new("distill", Some(&path)).unwrap();
        let _ = r.optional::<u64>("seed", None).unwrap();
        let err = r.finish().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("seeed"), "{err}");
    }

    #[test]
    fn manifest_command_is_checked() {
        let f = config_file("command = train\nseed = 7\n");
        let path = f.path().to_str().unwrap().to_string();
        let err = Resolver::new("distill", Some(&path)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(Resolver::new("train", Some(&path)).is_ok());
    }

    #[test]
    fn comments_blanks_and_spacing_are_tolerated() {
        let f = config_file("# a comment\n\n  p   =   0.6  \nn=3\n");
        let path = f.path().to_str().unwrap().to_string();
        let mut r = Resolver::new("simulate condorcet", Some(&path)).unwrap();
        let p: f64 = r.required("p", None::<f64>).unwrap();
        let n: u64 = r.required("n", None::<u64>).unwrap();
        assert_eq!(p, 0.6);
        assert_eq!(n, 3);
        r.finish().unwrap();
    }

    #[test]
    fn malformed_lines_and_duplicates_error() {
        for body in ["just words\n", "a = 1\na = 2\n", "= 3\n", "x =\n"] {
            let f = config_file(body);
            let path = f.path().to_str().unwrap().to_string();
            let err = Resolver::new("gsb", Some(&path)).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{body:?} gave {err}");
        }
    }

    #[test]
    fn missing_required_key_is_usage() {
        let mut r = Resolver::new("gsb", None).unwrap();
        let err = r.required::<u64>("good", None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("good"));
    }

    #[test]
    fn manifest_round_trips_through_resolver() {
        let mut r = Resolver::new("synthesize", None).unwrap();
        let _: u64 = r.required("seed", Some(5)).unwrap();
        let _: f64 = r.or_default("rate", None, 0.6).unwrap();
        let m = r.finish().unwrap();
        let f = config_file(&m.render());
        let path = f.path().to_str().unwrap().to_string();

        let mut r2 = Resolver::new("synthesize", Some(&path)).unwrap();
        let seed: u64 = r2.required("seed", None).unwrap();
        let rate: f64 = r2.or_default("rate", None, 0.25).unwrap();
        assert_eq!(seed, 5);
        assert_eq!(rate, 0.6);
        assert_eq!(r2.finish().unwrap().render(), m.render());
    }

    #[test]
    fn switch_can_come_from_either_side() {
        let f = config_file("exact = true\n");
        let path = f.path().to_str().unwrap().to_string();
        let mut r = Resolver::new("simulate condorcet", Some(&path)).unwrap();
        assert!(r.switch("exact", false).unwrap());
        r.finish().unwrap();

        let mut r = Resolver::new("simulate condorcet", None).unwrap();
        assert!(!r.switch("exact", false).unwrap());
        let m = r.finish().unwrap();
        assert!(m.render().contains("exact = false"));
    }

    #[test]
    fn default_manifest_path_tracks_output() {
        let m = Manifest {
            command: "simulate ensemble-sim",
            entries: vec![],
        };
        assert_eq!(m.path(Some("x.man"), Some("out.tsv")), PathBuf::from("x.man"));
        assert_eq!(m.path(None, Some("out.tsv")), PathBuf::from("out.tsv.manifest"));
        assert_eq!(
            m.path(None, None),
            PathBuf::from("govern-simulate-ensemble-sim.manifest")
        );
    }
}
