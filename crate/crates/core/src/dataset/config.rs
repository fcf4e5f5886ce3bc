use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A parsed `key=value` file. Blank lines and lines starting with `#` are
/// ignored. Keys are looked up by consumers; [`KeyValues::finish`] reports
/// any key nobody asked for.
#[derive(Debug, Default)]
pub struct KeyValues {
    path: String,
    entries: BTreeMap<String, (String, usize)>,
    used: RefCell<BTreeSet<String>>,
}

impl KeyValues {
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Format {
                path: path.to_string(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, found `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(err("empty key".into()));
            }
            if entries.insert(k.to_string(), (v.to_string(), i + 1)).is_some() {
                return Err(err(format!("duplicate key `{k}`")));
            }
        }
        Ok(KeyValues {
            path: path.to_string(),
            entries,
            used: RefCell::default(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        let v = self.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(&v.0)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::config(key, format!("`{v}`: {e}"))))
            .transpose()
    }

    /// Overwrites `target` when `key` is present.
    pub fn set<T: FromStr>(&self, key: &str, target: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.get(key)? {
            *target = v;
        }
        Ok(())
    }

    /// A comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<T>().map_err(|e| Error::config(key, format!("`{s}`: {e}"))))
                    .collect()
            })
            .transpose()
    }

    /// Keys with a given prefix, with the prefix stripped.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.entries.iter().filter_map(move |(k, v)| {
            let rest = k.strip_prefix(prefix)?;
            self.used.borrow_mut().insert(k.clone());
            Some((rest, v.0.as_str()))
        })
    }

    pub fn unused(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.entries.keys().filter(|k| !used.contains(*k)).cloned().collect()
    }

    /// Fails on the first key no consumer read.
    pub fn finish(&self) -> Result<()> {
        match self.unused().first() {
            None => Ok(()),
            Some(k) => Err(Error::Format {
                path: self.path.clone(),
                line: self.entries[k].1,
                message: format!("unknown key `{k}`"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_typed_values_and_lists() {
        let kv = KeyValues::parse("# c\n a = 3 \nb=0.5,1, 2\n\nname=x=y\n", "cfg").unwrap();
        assert_eq!(kv.get::<usize>("a").unwrap(), Some(3));
        assert_eq!(kv.list::<f64>("b").unwrap(), Some(vec![0.5, 1.0, 2.0]));
        assert_eq!(kv.raw("name"), Some("x=y"));
        assert_eq!(kv.get::<u8>("missing").unwrap(), None);
        kv.finish().unwrap();
    }

    #[test]
    fn errors_name_the_line_or_field() {
        let e = KeyValues::parse("a=1\nnonsense\n", "f").unwrap_err();
        assert!(matches!(e, Error::Format { line: 2, .. }));
        let e = KeyValues::parse("a=1\na=2\n", "f").unwrap_err();
        assert!(matches!(e, Error::Format { line: 2, .. }));
        let kv = KeyValues::parse("a=x\nb=1\n", "f").unwrap();
        assert!(matches!(kv.get::<f64>("a"), Err(Error::InvalidConfig { ref field, .. }) if field == "a"));
        assert!(matches!(kv.finish(), Err(Error::Format { line: 2, .. })));
    }
}
