//! Plain-text key=value configuration with `[section]` headers.
//!
//! Used for the dataset manifest and every CLI config. Lines starting with
//! '#' or ';' are comments. Keys are split on the first '='; both sides are
//! trimmed. Section and key order is preserved so a parsed config can be
//! echoed back verbatim-equivalent.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(Error::parse(origin, i + 1, "unterminated section header"));
                }
                current = line[1..line.len() - 1].trim().to_string();
                cfg.ensure_section(&current);
                continue;
            }
            let Some(eq) = line.find('=') else {
                return Err(Error::parse(origin, i + 1, "expected key=value"));
            };
            let key = line[..eq].trim().to_string();
            let value = line[eq + 1..].trim().to_string();
            if key.is_empty() {
                return Err(Error::parse(origin, i + 1, "empty key"));
            }
            cfg.set(&current.clone(), &key, &value);
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn ensure_section(&mut self, name: &str) -> usize {
        if let Some(i) = self.sections.iter().position(|(s, _)| s == name) {
            return i;
        }
        self.sections.push((name.to_string(), Vec::new()));
        self.sections.len() - 1
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        let i = self.ensure_section(section);
        let entries = &mut self.sections[i].1;
        if let Some(e) = entries.iter_mut().find(|(k, _)| k == key) {
            e.1 = value.to_string();
        } else {
            entries.push((key.to_string(), value.to_string()));
        }
    }

    /// Apply an override of the form `section.key=value` (or `key=value` for
    /// the unnamed root section).
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let Some(eq) = spec.find('=') else {
            return Err(Error::InvalidArg(format!(
                "override `{spec}` is not key=value"
            )));
        };
        let (path, value) = (spec[..eq].trim(), spec[eq + 1..].trim());
        let (section, key) = match path.split_once('.') {
            Some((s, k)) => (s, k),
            None => ("", path),
        };
        if key.is_empty() {
            return Err(Error::InvalidArg(format!("override `{spec}` has no key")));
        }
        self.set(section, key, value);
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .iter()
            .find(|(s, _)| s == section)
            .and_then(|(_, entries)| entries.iter().find(|(k, _)| k == key))
            .map(|(_, v)| v.as_str())
    }

    pub fn get_parsed<V: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<V>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(raw) => raw.parse::<V>().map(Some).map_err(|_| {
                Error::InvalidArg(format!("[{section}] {key} = {raw}: unparseable value"))
            }),
        }
    }

    pub fn get_or<V: std::str::FromStr>(&self, section: &str, key: &str, default: V) -> Result<V> {
        Ok(self.get_parsed(section, key)?.unwrap_or(default))
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key)
            .ok_or_else(|| Error::InvalidArg(format!("missing required [{section}] {key}")))
    }

    /// Comma-separated list value; empty/missing yields an empty list.
    pub fn get_list(&self, section: &str, key: &str) -> Vec<String> {
        self.get(section, key)
            .map(|v| {
                v.split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn entries<'a>(&'a self, section: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.sections
            .iter()
            .filter(move |(s, _)| s == section)
            .flat_map(|(_, e)| e.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|(s, _)| s.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (section, entries) in &self.sections {
            if !section.is_empty() {
                out.push_str(&format!("[{section}]\n"));
            }
            for (k, v) in entries {
                out.push_str(&format!("{k} = {v}\n"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_keys_and_comments() {
        let text = "\
# comment
top = 1

[paths]
images = imgs ; not a comment, part of value? no: trimmed value
colmap = sparse

[sequences]
frame_0.png = 0
frame_1.png = 1
";
        let cfg = Config::parse(text, "test").unwrap();
        assert_eq!(cfg.get("", "top"), Some("1"));
        assert_eq!(cfg.get("paths", "colmap"), Some("sparse"));
        assert_eq!(cfg.get("sequences", "frame_1.png"), Some("1"));
        let seqs: Vec<_> = cfg.entries("sequences").collect();
        assert_eq!(seqs.len(), 2);
    }

    #[test]
    fn overrides_replace_and_insert() {
        let mut cfg = Config::parse("[train]\niterations = 10\n", "test").unwrap();
        cfg.apply_override("train.iterations=20").unwrap();
        cfg.apply_override("train.seed=7").unwrap();
        assert_eq!(cfg.get("train", "iterations"), Some("20"));
        assert_eq!(cfg.get_or::<u64>("train", "seed", 0).unwrap(), 7);
        assert!(cfg.apply_override("no_equals_here").is_err());
    }

    #[test]
    fn render_round_trips() {
        let text = "[a]\nx = 1\n\n[b]\ny =ز\n\n";
        let cfg = Config::parse(text, "test").unwrap();
        let cfg2 = Config::parse(&cfg.render(), "echo").unwrap();
        assert_eq!(cfg, cfg2);
    }
}
