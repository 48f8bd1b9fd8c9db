//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative dataset
//! paths in a file resolve against the file's directory and are stored as
//! absolute paths. `--set key=value` overrides go through the same setter
//! as file entries.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::{load_graph, Graph, Preprocess};
use crate::trainer::{preset_learning_rate, TrainConfig};

/// Every key accepted by [`RunConfig::set`], in manifest order.
pub const KEYS: &[&str] = &[
    "dataset.name",
    "dataset.attr",
    "dataset.edges",
    "dataset.labels",
    "dataset.preprocess",
    "k",
    "alpha",
    "tau",
    "temp",
    "lr",
    "epochs",
    "stage2_start",
    "seed",
    "structure_augmentor",
    "attribute_augmentor",
    "hidden_dim",
    "embedding_dim",
    "filter_depth",
    "grad_clip",
    "confidence_rule",
    "ntxent_variant",
    "nmi_norm",
    "augmentation",
    "augmentation_rate",
    "freeze_augmentors",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetConfig {
    pub name: Option<String>,
    pub attr: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub preprocess: Preprocess,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub k: Option<usize>,
    pub train: TrainConfig,
    lr_set: bool,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| Error::BadValue {
        key: key.to_string(),
        msg: format!("`{value}`: {e}"),
    })
}

fn optional(value: &str) -> Option<&str> {
    (!value.is_empty()).then_some(value)
}

impl RunConfig {
    /// Parses config text; `base` anchors relative dataset paths.
    pub fn parse(text: &str, source: &Path, base: Option<&Path>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: source.to_path_buf(),
                    line: idx + 1,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            cfg.set_with_base(key.trim(), value.trim(), base)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text, path, path.parent())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_with_base(key, value, None)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| Error::BadValue {
            key: assignment.to_string(),
            msg: "override must look like key=value".into(),
        })?;
        self.set(key.trim(), value.trim())
    }

    fn set_with_base(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let path = |v: &str| {
            optional(v).map(|v| {
                let p = PathBuf::from(v);
                let p = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p,
                };
                // absolute, so a manifest stays valid wherever it is read from
                std::path::absolute(&p).unwrap_or(p)
            })
        };
        let t = &mut self.train;
        match key {
            "dataset.name" => self.dataset.name = optional(value).map(str::to_string),
            "dataset.attr" => self.dataset.attr = path(value),
            "dataset.edges" => self.dataset.edges = path(value),
            "dataset.labels" => self.dataset.labels = path(value),
            "dataset.preprocess" => self.dataset.preprocess = parse_value(key, value)?,
            "k" => self.k = optional(value).map(|v| parse_value(key, v)).transpose()?,
            "alpha" => t.alpha = parse_value(key, value)?,
            "tau" => t.tau = parse_value(key, value)?,
            "temp" => t.temp = parse_value(key, value)?,
            "lr" => {
                t.lr = parse_value(key, value)?;
                self.lr_set = true;
            }
            "epochs" => t.epochs = parse_value(key, value)?,
            "stage2_start" => t.stage2_start = parse_value(key, value)?,
            "seed" => t.seed = parse_value(key, value)?,
            "structure_augmentor" => t.structure_augmentor = parse_value(key, value)?,
            "attribute_augmentor" => t.attribute_augmentor = parse_value(key, value)?,
            "hidden_dim" => t.hidden_dim = parse_value(key, value)?,
            "embedding_dim" => t.embedding_dim = parse_value(key, value)?,
            "filter_depth" => t.filter_depth = parse_value(key, value)?,
            "grad_clip" => t.grad_clip = parse_value(key, value)?,
            "confidence_rule" => t.confidence_rule = parse_value(key, value)?,
            "ntxent_variant" => t.ntxent_variant = parse_value(key, value)?,
            "nmi_norm" => t.nmi_norm = parse_value(key, value)?,
            "augmentation" => t.augmentation = parse_value(key, value)?,
            "augmentation_rate" => t.augmentation_rate = parse_value(key, value)?,
            "freeze_augmentors" => t.freeze_augmentors = parse_value(key, value)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Fills dataset-dependent defaults and checks the training settings.
    pub fn finalize(&mut self) -> Result<()> {
        if !self.lr_set {
            if let Some(lr) = self.dataset.name.as_deref().and_then(preset_learning_rate) {
                self.train.lr = lr;
            }
            self.lr_set = true;
        }
        self.train.validate().map_err(|e| Error::BadValue {
            key: "config".into(),
            msg: e.to_string(),
        })
    }

    /// Loads the configured dataset.
    pub fn load_graph(&self) -> Result<Graph> {
        let need = |p: &Option<PathBuf>, key: &str| {
            p.clone().ok_or_else(|| Error::BadValue {
                key: key.into(),
                msg: "required".into(),
            })
        };
        let attr = need(&self.dataset.attr, "dataset.attr")?;
        let edges = need(&self.dataset.edges, "dataset.edges")?;
        let g = load_graph(&attr, &edges, self.dataset.labels.as_deref(), self.k)?;
        Ok(g.preprocess(self.dataset.preprocess))
    }

    /// The value of `key` as it would be written in a config file.
    pub fn get(&self, key: &str) -> Result<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let t = &self.train;
        Ok(match key {
            "dataset.name" => self.dataset.name.clone().unwrap_or_default(),
            "dataset.attr" => path(&self.dataset.attr),
            "dataset.edges" => path(&self.dataset.edges),
            "dataset.labels" => path(&self.dataset.labels),
            "dataset.preprocess" => self.dataset.preprocess.to_string(),
            "k" => self.k.map(|k| k.to_string()).unwrap_or_default(),
            "alpha" => t.alpha.to_string(),
            "tau" => t.tau.to_string(),
            "temp" => t.temp.to_string(),
            "lr" => t.lr.to_string(),
            "epochs" => t.epochs.to_string(),
            "stage2_start" => t.stage2_start.to_string(),
            "seed" => t.seed.to_string(),
            "structure_augmentor" => t.structure_augmentor.to_string(),
            "attribute_augmentor" => t.attribute_augmentor.to_string(),
            "hidden_dim" => t.hidden_dim.to_string(),
            "embedding_dim" => t.embedding_dim.to_string(),
            "filter_depth" => t.filter_depth.to_string(),
            "grad_clip" => t.grad_clip.to_string(),
            "confidence_rule" => t.confidence_rule.to_string(),
            "ntxent_variant" => t.ntxent_variant.to_string(),
            "nmi_norm" => t.nmi_norm.to_string(),
            "augmentation" => t.augmentation.to_string(),
            "augmentation_rate" => t.augmentation_rate.to_string(),
            "freeze_augmentors" => t.freeze_augmentors.to_string(),
            _ => return Err(Error::UnknownKey(key.to_string())),
        })
    }

    /// Every key with its resolved value; parses back to an equal config.
    pub fn manifest(&self, output_dir: &Path) -> String {
        let mut out = String::from("# augclust run manifest\n");
        let _ = writeln!(out, "# output = {}", output_dir.display());
        for key in KEYS {
            let value = self.get(key).expect("KEYS are all readable");
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::StructureKind;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("test.cfg"), Some(Path::new("/data")))
    }

    #[test]
    fn parses_keys_and_comments() {
        let cfg = parse("# comment\n\nalpha = 0.9\nstructure_augmentor=gcn\ndataset.attr = x.csv\n").unwrap();
        assert_eq!(cfg.train.alpha, 0.9);
        assert_eq!(cfg.train.structure_augmentor, StructureKind::Gcn);
        assert_eq!(cfg.dataset.attr.as_deref(), Some(Path::new("/data/x.csv")));
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        assert!(matches!(parse("beta = 1"), Err(Error::UnknownKey(k)) if k == "beta"));
        assert!(matches!(parse("alpha = lots"), Err(Error::BadValue { key, .. }) if key == "alpha"));
        assert!(matches!(parse("alpha"), Err(Error::Parse { line: 1, .. })));
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_override("alpha").is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = parse("alpha = 0.2").unwrap();
        cfg.apply_override("alpha=0.9").unwrap();
        assert_eq!(cfg.train.alpha, 0.9);
    }

    #[test]
    fn dataset_name_selects_learning_rate_unless_set() {
        let mut cfg = parse("dataset.name = uat").unwrap();
        cfg.finalize().unwrap();
        assert_eq!(cfg.train.lr, 1e-3);
        let mut cfg = parse("dataset.name = uat\nlr = 0.05").unwrap();
        cfg.finalize().unwrap();
        assert_eq!(cfg.train.lr, 0.05);
    }

    #[test]
    fn manifest_round_trips() {
        let mut cfg = parse("dataset.name = cora\ndataset.attr = a.csv\ndataset.edges = e.txt\nk = 7\ntau = 0.9\nlr = 0.00003\n").unwrap();
        cfg.finalize().unwrap();
        let text = cfg.manifest(Path::new("out"));
        let mut back = RunConfig::parse(&text, Path::new("m.txt"), None).unwrap();
        back.finalize().unwrap();
        assert_eq!(back, cfg);
        for key in KEYS {
            assert!(text.contains(&format!("{key} = ")), "{key}");
        }
    }

    #[test]
    fn finalize_rejects_invalid_training_settings() {
        let mut cfg = parse("tau = 1.5").unwrap();
        assert!(cfg.finalize().is_err());
    }
}
