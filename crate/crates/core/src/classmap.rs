//! Dataset-to-task class mappings.
//!
//! Text format, one entry per line: `<raw_id> <train_id> <name>`. The name
//! runs to the end of the line and may contain spaces. `#` starts a comment.
//! Raw ids missing from a map read as the ignore id 0.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::cloud::IGNORE_ID;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMapEntry {
    pub raw_id: u16,
    pub train_id: u16,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    entries: Vec<ClassMapEntry>,
    lookup: BTreeMap<u16, u16>,
    class_count: u16,
}

/// Maps shipped with the crate: (name, source text, class count).
const BUILTIN: &[(&str, &str, u16)] = &[
    ("synlidar-19", include_str!("../maps/synlidar_19.txt"), 19),
    ("kitti-19", include_str!("../maps/kitti_19.txt"), 19),
    ("synlidar-13", include_str!("../maps/synlidar_13.txt"), 13),
    ("poss-13", include_str!("../maps/poss_13.txt"), 13),
    ("kitti-7", include_str!("../maps/kitti_7.txt"), 7),
    ("nuscenes-7", include_str!("../maps/nuscenes_7.txt"), 7),
];

impl ClassMap {
    pub fn from_entries(entries: Vec<ClassMapEntry>, class_count: u16) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::Config("class map needs at least one class".into()));
        }
        let mut lookup = BTreeMap::new();
        for e in &entries {
            if e.train_id > class_count {
                return Err(Error::Config(format!(
                    "raw id {} maps to train id {} beyond class count {class_count}",
                    e.raw_id, e.train_id
                )));
            }
            if lookup.insert(e.raw_id, e.train_id).is_some() {
                return Err(Error::Config(format!("duplicate raw id {}", e.raw_id)));
            }
        }
        Ok(ClassMap {
            entries,
            lookup,
            class_count,
        })
    }

    /// Identity map over `1..=class_count`, for files that already hold train ids.
    pub fn identity(class_count: u16) -> Result<Self> {
        let entries = (1..=class_count)
            .map(|k| ClassMapEntry {
                raw_id: k,
                train_id: k,
                name: format!("class-{k}"),
            })
            .collect();
        Self::from_entries(entries, class_count)
    }

    /// Parses the text format. The class count is the largest train id
    /// unless widened with [`ClassMap::with_class_count`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen: BTreeMap<u16, usize> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, char::is_whitespace);
            let (raw, train, name) = (parts.next(), parts.next(), parts.next());
            let parse_id = |s: Option<&str>| s.and_then(|s| s.trim().parse::<u16>().ok());
            let (Some(raw_id), Some(train_id), Some(name)) =
                (parse_id(raw), parse_id(train), name.map(str::trim))
            else {
                return Err(Error::Config(format!(
                    "line {lineno}: expected `<raw_id> <train_id> <name>`, got {line:?}"
                )));
            };
            if name.is_empty() {
                return Err(Error::Config(format!("line {lineno}: missing class name")));
            }
            if let Some(first) = seen.insert(raw_id, lineno) {
                return Err(Error::Config(format!(
                    "line {lineno}: duplicate raw id {raw_id} (first defined on line {first})"
                )));
            }
            entries.push(ClassMapEntry {
                raw_id,
                train_id,
                name: name.to_string(),
            });
        }
        let k = entries.iter().map(|e| e.train_id).max().unwrap_or(0);
        if k == 0 {
            return Err(Error::Config(
                "class map defines no training classes".into(),
            ));
        }
        Self::from_entries(entries, k)
    }

    pub fn with_class_count(self, class_count: u16) -> Result<Self> {
        Self::from_entries(self.entries, class_count)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let (_, text, k) = BUILTIN.iter().find(|(n, _, _)| *n == name).ok_or_else(|| {
            Error::Config(format!(
                "unknown built-in class map {name:?}; available: {}",
                Self::builtin_names().join(", ")
            ))
        })?;
        Self::parse(text)?.with_class_count(*k)
    }

    pub fn builtin_names() -> Vec<&'static str> {
        BUILTIN.iter().map(|(n, _, _)| *n).collect()
    }

    pub fn entries(&self) -> &[ClassMapEntry] {
        &self.entries
    }

    pub fn class_count(&self) -> u16 {
        self.class_count
    }

    pub fn train_id(&self, raw_id: u16) -> u16 {
        self.lookup.get(&raw_id).copied().unwrap_or(IGNORE_ID)
    }

    /// Display name of a train class: the first entry mapping to it.
    pub fn class_name(&self, train_id: u16) -> String {
        self.entries
            .iter()
            .find(|e| e.train_id == train_id)
            .map(|e| e.name.clone())
            .unwrap_or_else(|| format!("class-{train_id}"))
    }

    /// Names for train ids `1..=K`, index 0 holding class 1.
    pub fn class_names(&self) -> Vec<String> {
        (1..=self.class_count).map(|k| self.class_name(k)).collect()
    }
}

pub fn load_class_map(path: impl AsRef<Path>) -> Result<ClassMap> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ClassMap::parse(&text)
}

/// Resolves either a built-in map name or a path to a map file.
pub fn resolve_class_map(spec: &str) -> Result<ClassMap> {
    if ClassMap::builtin_names().contains(&spec) {
        ClassMap::builtin(spec)
    } else {
        load_class_map(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_of(map: &ClassMap, name: &str) -> u16 {
        map.entries()
            .iter()
            .find(|e| e.name == name)
            .unwrap_or_else(|| panic!("{name} missing"))
            .raw_id
    }

    #[test]
    fn parses_single_line() {
        let map = ClassMap::parse("17 1 car\n").unwrap();
        assert_eq!(
            map.entries(),
            &[ClassMapEntry {
                raw_id: 17,
                train_id: 1,
                name: "car".into()
            }]
        );
        assert_eq!(map.class_count(), 1);
    }

    #[test]
    fn comments_and_spaced_names() {
        let map = ClassMap::parse("# header\n10 11 traffic sign 1  # trailing\n\n").unwrap();
        assert_eq!(map.entries()[0].name, "traffic sign 1");
        assert_eq!(map.train_id(10), 11);
        assert_eq!(map.train_id(99), 0);
    }

    #[test]
    fn duplicate_raw_id_is_config_error() {
        let err = ClassMap::parse("1 1 car\n1 2 truck\n").unwrap_err();
        assert!(
            matches!(err, Error::Config(ref m) if m.contains("line 2")),
            "{err}"
        );
    }

    #[test]
    fn garbage_line_is_config_error() {
        assert!(matches!(ClassMap::parse("car 1 x"), Err(Error::Config(_))));
        assert!(matches!(ClassMap::parse("1 1"), Err(Error::Config(_))));
        assert!(matches!(
            ClassMap::parse("1 70000 big"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn builtin_maps_load_with_task_class_counts() {
        for (name, k) in [
            ("synlidar-19", 19),
            ("kitti-19", 19),
            ("synlidar-13", 13),
            ("poss-13", 13),
            ("kitti-7", 7),
            ("nuscenes-7", 7),
        ] {
            let map = ClassMap::builtin(name).unwrap();
            assert_eq!(map.class_count(), k, "{name}");
        }
        assert!(ClassMap::builtin("nope").is_err());
    }

    #[test]
    fn builtin_rows_match_unified_label_space() {
        let syn19 = ClassMap::builtin("synlidar-19").unwrap();
        assert_eq!(syn19.train_id(raw_of(&syn19, "car")), 1);
        for kid in ["female", "male", "kid"] {
            assert_eq!(syn19.train_id(raw_of(&syn19, kid)), 6);
        }
        let kitti19 = ClassMap::builtin("kitti-19").unwrap();
        assert_eq!(kitti19.train_id(raw_of(&kitti19, "bicyclist")), 7);
        assert_eq!(kitti19.train_id(raw_of(&kitti19, "moving-bicyclist")), 7);
        let syn13 = ClassMap::builtin("synlidar-13").unwrap();
        assert_eq!(syn13.train_id(raw_of(&syn13, "pole")), 10);
        let poss13 = ClassMap::builtin("poss-13").unwrap();
        assert_eq!(poss13.train_id(raw_of(&poss13, "rider")), 4);
        let nus7 = ClassMap::builtin("nuscenes-7").unwrap();
        assert_eq!(nus7.train_id(raw_of(&nus7, "static.manmade")), 6);
    }
}
