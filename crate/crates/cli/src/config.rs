//! Run configuration: built-in defaults, then a `key = value` file, then flags.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use banff_core::{AliasTable, CellClass, ScoringConfig, StructureClass};

use crate::error::{CliError, CliResult};

pub const DEFAULT_TRIALS: u64 = 1000;

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scoring: ScoringConfig,
    pub aliases: AliasTable,
    /// Aliases added on top of the built-in table, as written in the config.
    pub extra_aliases: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub trials: u64,
    pub out_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scoring: ScoringConfig::default(),
            aliases: AliasTable::default(),
            extra_aliases: BTreeMap::new(),
            seed: None,
            trials: DEFAULT_TRIALS,
            out_dir: None,
        }
    }
}

/// Overrides taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub min_confidence: Option<f64>,
    pub classes: Option<String>,
    pub dedup_radius: Option<String>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub out_dir: Option<String>,
}

fn parse_classes(value: &str, key: &str) -> CliResult<BTreeSet<CellClass>> {
    let set = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|t| CellClass::from_token(&t.to_lowercase()).map_err(|e| CliError::input(format!("{key}: {e}"))))
        .collect::<CliResult<BTreeSet<_>>>()?;
    if set.is_empty() {
        return Err(CliError::input(format!("{key}: at least one cell class is required")));
    }
    Ok(set)
}

fn parse_f64(value: &str, key: &str) -> CliResult<f64> {
    value
        .parse::<f64>()
        .map_err(|_| CliError::input(format!("{key}: `{value}` is not a number")))
}

fn parse_u64(value: &str, key: &str) -> CliResult<u64> {
    value
        .parse::<u64>()
        .map_err(|_| CliError::input(format!("{key}: `{value}` is not a non-negative integer")))
}

fn parse_radius(value: &str, key: &str) -> CliResult<Option<f64>> {
    match value.trim() {
        "off" | "none" => Ok(None),
        v => parse_f64(v, key).map(Some),
    }
}

impl RunConfig {
    fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let value = value.trim();
        match key {
            "min_confidence" => self.scoring.min_confidence = parse_f64(value, key)?,
            "classes" => {
                let set = parse_classes(value, key)?;
                self.scoring.g_classes = set.clone();
                self.scoring.ptc_classes = set.clone();
                self.scoring.v_classes = set;
            }
            "classes.g" => self.scoring.g_classes = parse_classes(value, key)?,
            "classes.ptc" => self.scoring.ptc_classes = parse_classes(value, key)?,
            "classes.v" => self.scoring.v_classes = parse_classes(value, key)?,
            "dedup_radius" => self.scoring.dedup_radius = parse_radius(value, key)?,
            "seed" => self.seed = Some(parse_u64(value, key)?),
            "trials" => self.trials = parse_u64(value, key)?,
            "out_dir" => self.out_dir = Some(value.to_string()),
            _ => {
                if let Some(name) = key.strip_prefix("alias.structure.") {
                    let class = StructureClass::from_token(value).map_err(|e| CliError::input(format!("{key}: {e}")))?;
                    self.aliases.insert_structure(name, class);
                } else if let Some(name) = key.strip_prefix("alias.cell.") {
                    let class = CellClass::from_token(value).map_err(|e| CliError::input(format!("{key}: {e}")))?;
                    self.aliases.insert_cell(name, class);
                } else {
                    return Err(CliError::input(format!("unknown config key `{key}`")));
                }
                self.extra_aliases.insert(key.to_string(), value.to_string());
            }
        }
        Ok(())
    }

    /// Applies a config document: one `key = value` per line, `#` starts a comment.
    pub fn apply_document(&mut self, text: &str, origin: &str) -> CliResult<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::input(format!("{origin}:{}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| CliError::input(format!("{origin}:{}: {}", n + 1, e.message())))?;
        }
        Ok(())
    }

    pub fn apply_flags(&mut self, flags: &FlagOverrides) -> CliResult<()> {
        if let Some(v) = flags.min_confidence {
            self.set("min_confidence", &v.to_string())?;
        }
        if let Some(v) = &flags.classes {
            self.set("classes", v)?;
        }
        if let Some(v) = &flags.dedup_radius {
            self.set("dedup_radius", v)?;
        }
        if let Some(v) = flags.seed {
            self.seed = Some(v);
        }
        if let Some(v) = flags.trials {
            self.trials = v;
        }
        if let Some(v) = &flags.out_dir {
            self.out_dir = Some(v.clone());
        }
        Ok(())
    }

    /// Defaults, then the optional file, then flags.
    pub fn resolve(file: Option<&Path>, flags: &FlagOverrides) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = crate::io::read_text(path)?;
            cfg.apply_document(&text, &path.display().to_string())?;
        }
        cfg.apply_flags(flags)?;
        cfg.scoring.validate().map_err(CliError::from)?;
        if cfg.trials == 0 {
            return Err(CliError::input("trials must be at least 1"));
        }
        Ok(cfg)
    }

    /// Flat view echoed into every output. Paths are left out so outputs do
    /// not depend on where they were written.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let mut m = self.scoring.snapshot();
        m.insert("seed".into(), self.seed.map_or_else(|| "spec".into(), |s| s.to_string()));
        m.insert("trials".into(), self.trials.to_string());
        m.extend(self.extra_aliases.clone());
        m
    }

    /// Union of the classes counted by any indicator.
    pub fn counted_classes(&self) -> BTreeSet<CellClass> {
        let s = &self.scoring;
        s.g_classes.iter().chain(&s.ptc_classes).chain(&s.v_classes).cloned().collect()
    }
}
