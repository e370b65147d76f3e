use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use uada3d::adapt::{AlignmentConfig, AlignmentMode, AugmentConfig, DiscDesign, TrainConfig, UpdateOrder};
use uada3d::augment::RosConfig;
use uada3d::autodiff::GrlCoefficient;
use uada3d::detector::GridSpec;
use uada3d::eval::EvalSettings;
use uada3d::synthgen::DomainProfile;
use uada3d::{Error, Result};

/// Every accepted key with its default. An empty default means "unset".
const KEYS: &[(&str, &str)] = &[
    ("mode", "uada3d"),
    ("seed", "0"),
    ("source", "car64"),
    ("source_scenes", "100"),
    ("source_seed", ""),
    ("source_grid", ""),
    ("target", "robot16"),
    ("target_scenes", "100"),
    ("target_seed", ""),
    ("target_grid", ""),
    ("target_test", ""),
    ("target_test_scenes", "100"),
    ("target_test_seed", ""),
    ("source_val", ""),
    ("source_val_scenes", "50"),
    ("source_val_seed", ""),
    ("channels", "32"),
    ("epochs", "10"),
    ("batch_size", "4"),
    ("lr_detector", "0.001"),
    ("lr_discriminator", "0.001"),
    ("lambda_mode", "constant"),
    ("lambda", "0.1"),
    ("alpha", "0.1"),
    ("gamma", "10"),
    ("design", "c"),
    ("ros", "off"),
    ("ros_vehicle", "0.8,1.2"),
    ("ros_pedestrian", "0.9,1.1"),
    ("ros_cyclist", "0.9,1.1"),
    ("downsample", "1"),
    ("ground_shift", "on"),
    ("conf_floor", "0.1"),
    ("max_instances", "32"),
    ("detach_confidence", "on"),
    ("update", "combined"),
    ("eval_conf_threshold", "0.1"),
    ("eval_nms_iou", "0.25"),
    ("out", "runs/default"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    SourceOnly,
    Oracle,
    Uada3d,
    Uada3dMarginal,
    Uada3dCombined,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::SourceOnly, Mode::Oracle, Mode::Uada3d, Mode::Uada3dMarginal, Mode::Uada3dCombined];

    pub fn name(self) -> &'static str {
        match self {
            Mode::SourceOnly => "source-only",
            Mode::Oracle => "oracle",
            Mode::Uada3d => "uada3d",
            Mode::Uada3dMarginal => "uada3d-marginal",
            Mode::Uada3dCombined => "uada3d-combined",
        }
    }

    pub fn alignment(self) -> Option<AlignmentMode> {
        match self {
            Mode::SourceOnly | Mode::Oracle => None,
            Mode::Uada3d => Some(AlignmentMode::Conditional),
            Mode::Uada3dMarginal => Some(AlignmentMode::Marginal),
            Mode::Uada3dCombined => Some(AlignmentMode::Combined),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode '{s}'")))
    }
}

/// A dataset given either as a built-in profile generated in memory or as a
/// directory written by `gen`.
#[derive(Debug, Clone, PartialEq)]
pub enum DataRef {
    Generated { profile: DomainProfile, scenes: usize, seed: u64 },
    Dir(PathBuf),
}

/// A parsed run configuration. `values` holds every key after defaults are
/// applied and is what gets written back out.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub values: BTreeMap<String, String>,
    pub mode: Mode,
    pub source: DataRef,
    pub target: Option<DataRef>,
    pub target_test: Option<DataRef>,
    pub source_val: Option<DataRef>,
    pub source_grid: Option<GridSpec>,
    pub target_grid: Option<GridSpec>,
    pub train: TrainConfig,
    pub out: PathBuf,
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("bad value '{v}' for {key}")))
}

fn parse_switch(key: &str, v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key} must be on or off, got '{v}'"))),
    }
}

fn parse_list(key: &str, v: &str, n: usize) -> Result<Vec<f64>> {
    let out = v.split(',').map(|p| parse_value::<f64>(key, p.trim())).collect::<Result<Vec<_>>>()?;
    if out.len() != n {
        return Err(Error::Config(format!("{key} needs {n} comma-separated numbers, got '{v}'")));
    }
    Ok(out)
}

impl RunConfig {
    /// Parses `key = value` lines. `#` starts a comment; blank lines are
    /// skipped; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut given = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if given.insert(k.clone(), v).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", n + 1)));
            }
        }
        Self::from_pairs(given)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            return Self::from_resolved_json(&text);
        }
        Self::parse(&text)
    }

    /// Rebuilds a configuration from a `resolved_config.json`.
    pub fn from_resolved_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let map = v
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| Error::Format("resolved config lacks a 'config' object".into()))?;
        let mut given = BTreeMap::new();
        for (k, v) in map {
            let s = v.as_str().ok_or_else(|| Error::Format(format!("config value of {k} is not a string")))?;
            given.insert(k.clone(), s.to_string());
        }
        Self::from_pairs(given)
    }

    pub fn from_pairs(given: BTreeMap<String, String>) -> Result<Self> {
        let mut values: BTreeMap<String, String> = KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in given {
            match values.get_mut(&k) {
                Some(slot) => *slot = v,
                None => return Err(Error::Config(format!("unknown key '{k}'"))),
            }
        }
        let get = |k: &str| values[k].as_str();
        let seed: u64 = parse_value("seed", get("seed"))?;
        let mode: Mode = get("mode").parse()?;
        let data = |role: &str, index: u64| -> Result<Option<DataRef>> {
            let spec = get(role);
            if spec.is_empty() {
                return Ok(None);
            }
            if !DomainProfile::BUILTIN.contains(&spec) {
                return Ok(Some(DataRef::Dir(PathBuf::from(spec))));
            }
            let scenes = parse_value(&format!("{role}_scenes"), get(&format!("{role}_scenes")))?;
            let seed_key = format!("{role}_seed");
            let data_seed = match get(&seed_key) {
                "" => seed.wrapping_add(index),
                s => parse_value(&seed_key, s)?,
            };
            Ok(Some(DataRef::Generated { profile: DomainProfile::builtin(spec)?, scenes, seed: data_seed }))
        };
        let source = data("source", 0)?.ok_or_else(|| Error::Config("source must be set".into()))?;
        let target = data("target", 1)?;
        let target_test = data("target_test", 2)?;
        let source_val = data("source_val", 3)?;
        let grid = |key: &str| -> Result<Option<GridSpec>> {
            match get(key) {
                "" => Ok(None),
                v => {
                    let g = parse_list(key, v, 5)?;
                    let spec = GridSpec { x_range: (g[0], g[1]), y_range: (g[2], g[3]), cell: g[4] };
                    spec.validate()?;
                    Ok(Some(spec))
                }
            }
        };
        let interval = |key: &str| -> Result<(f64, f64)> {
            let v = parse_list(key, get(key), 2)?;
            Ok((v[0], v[1]))
        };
        let lambda = match get("lambda_mode") {
            "constant" => GrlCoefficient::Constant { lambda: parse_value("lambda", get("lambda"))? },
            "scheduled" => GrlCoefficient::Scheduled {
                alpha: parse_value("alpha", get("alpha"))?,
                gamma: parse_value("gamma", get("gamma"))?,
            },
            other => return Err(Error::Config(format!("lambda_mode must be constant or scheduled, got '{other}'"))),
        };
        let alignment = match mode.alignment() {
            None => None,
            Some(m) => {
                let design: DiscDesign = get("design").parse()?;
                // a marginal run has no instance discriminators to design
                let design = if m == AlignmentMode::Marginal { DiscDesign::A } else { design };
                Some(AlignmentConfig { mode: m, design })
            }
        };
        let ros = if parse_switch("ros", get("ros"))? {
            Some(RosConfig {
                intervals: [interval("ros_vehicle")?, interval("ros_pedestrian")?, interval("ros_cyclist")?],
            })
        } else {
            None
        };
        let train = TrainConfig {
            seed,
            channels: parse_value("channels", get("channels"))?,
            epochs: parse_value("epochs", get("epochs"))?,
            batch_size: parse_value("batch_size", get("batch_size"))?,
            lr_detector: parse_value("lr_detector", get("lr_detector"))?,
            lr_discriminator: parse_value("lr_discriminator", get("lr_discriminator"))?,
            lambda,
            alignment,
            augment: AugmentConfig {
                ros,
                downsample: parse_value("downsample", get("downsample"))?,
                ground_shift: parse_switch("ground_shift", get("ground_shift"))?,
            },
            conf_floor: parse_value("conf_floor", get("conf_floor"))?,
            max_instances: parse_value("max_instances", get("max_instances"))?,
            detach_confidence: parse_switch("detach_confidence", get("detach_confidence"))?,
            update: get("update").parse::<UpdateOrder>()?,
            eval: EvalSettings {
                conf_threshold: parse_value("eval_conf_threshold", get("eval_conf_threshold"))?,
                nms_iou: parse_value("eval_nms_iou", get("eval_nms_iou"))?,
            },
        };
        train.validate()?;
        if matches!(mode, Mode::Oracle) && target.is_none() {
            return Err(Error::Config("oracle mode trains on the target dataset, which is not set".into()));
        }
        if mode.alignment().is_some() && target.is_none() {
            return Err(Error::Config(format!("mode {mode} needs a target dataset")));
        }
        Ok(Self {
            mode,
            source,
            target,
            target_test,
            source_val,
            source_grid: grid("source_grid")?,
            target_grid: grid("target_grid")?,
            out: PathBuf::from(get("out")),
            train,
            values,
        })
    }

    /// The resolved `key = value` text; parsing it gives back this config.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.values,
            "train": self.train,
        })
    }
}
