//! Experiment configuration: CLI flags, optional key=value config file, and
//! strict validation. Flags override file values and unknown keys are
//! rejected in both sources.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use thiserror::Error;

use crate::keyschedule::FrameConfig;
use crate::unitary::TransformForm;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key {key:?}")]
    UnknownKey { key: String },
    #[error("flag --{key} is missing its value")]
    MissingValue { key: String },
    #[error("field {field}: {reason} (got {value:?})")]
    InvalidValue {
        field: &'static str,
        value: String,
        reason: String,
    },
    #[error("field {field} is required but missing")]
    MissingField { field: &'static str },
    #[error("field {field}: {reason}")]
    Inapplicable { field: &'static str, reason: String },
    #[error("key {key:?} given more than once in the same source")]
    DuplicateKey { key: String },
    #[error("expected a --flag, got {arg:?}")]
    UnexpectedArgument { arg: String },
    #[error("config file {path}: line {line} is not key=value")]
    MalformedLine { path: String, line: usize },
    #[error("config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config file may not name another config file")]
    NestedConfig,
}

const KNOWN_KEYS: &[&str] = &[
    "protocol",
    "alice-form",
    "theta",
    "phi",
    "psi",
    "eve",
    "trials",
    "bits",
    "l",
    "k",
    "seed",
    "output",
    "config",
];

/// Which protocol an experiment drives, with its resolved angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProtocolChoice {
    ThreeStage {
        form: TransformForm,
        theta: f64,
        phi: f64,
    },
    SingleStage {
        theta: f64,
    },
}

/// Which eavesdropper the harness instantiates per trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategyChoice {
    Passive,
    CloneDuplicate { psi: f64 },
    CloneForge { psi: f64 },
    CloneBlock { psi: f64 },
    AngleGuess { psi: f64 },
    MeasureResend,
}

impl StrategyChoice {
    pub fn cli_name(self) -> &'static str {
        match self {
            StrategyChoice::Passive => "none",
            StrategyChoice::CloneDuplicate { .. } => "clone-duplicate",
            StrategyChoice::CloneForge { .. } => "clone-forge",
            StrategyChoice::CloneBlock { .. } => "clone-block",
            StrategyChoice::AngleGuess { .. } => "angle-guess",
            StrategyChoice::MeasureResend => "measure-resend",
        }
    }

    pub fn psi(self) -> Option<f64> {
        match self {
            StrategyChoice::CloneDuplicate { psi }
            | StrategyChoice::CloneForge { psi }
            | StrategyChoice::CloneBlock { psi }
            | StrategyChoice::AngleGuess { psi } => Some(psi),
            _ => None,
        }
    }

    /// Whether the strategy records per-bit guesses at all.
    pub fn guesses(self) -> bool {
        matches!(
            self,
            StrategyChoice::CloneDuplicate { .. }
                | StrategyChoice::CloneForge { .. }
                | StrategyChoice::AngleGuess { .. }
                | StrategyChoice::MeasureResend
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl OutputFormat {
    pub fn cli_name(self) -> &'static str {
        match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
        }
    }
}

/// A fully resolved, validated experiment description.
///
/// The basis is always computational; the experiment layer has no flag for
/// it and library callers who want a tilted basis drive the protocol modules
/// directly.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub protocol: ProtocolChoice,
    pub strategy: StrategyChoice,
    pub trials: u64,
    pub bits_per_trial: u64,
    /// Engages the rotating-key framing (single-stage only). Set when the
    /// command line or config file names `l` or `k` explicitly.
    pub frame: Option<FrameConfig>,
    pub master_seed: u64,
    pub output_format: OutputFormat,
}

impl ExperimentConfig {
    /// Parses command-line arguments, folding in `--config FILE` when given.
    pub fn parse(args: &[String]) -> Result<Self, ConfigError> {
        let cli = tokenize(args)?;
        let mut merged: BTreeMap<String, String> = BTreeMap::new();
        if let Some(path) = cli.get("config") {
            merged = parse_file(Path::new(path))?;
        }
        for (k, v) in cli {
            if k != "config" {
                merged.insert(k, v);
            }
        }
        Self::from_keys(&merged)
    }

    /// Renders the config back into its canonical flag list. Parsing that
    /// list reproduces the config exactly.
    pub fn to_argv(&self) -> Vec<String> {
        let mut argv: Vec<String> = Vec::new();
        let mut push = |k: &str, v: String| {
            argv.push(format!("--{k}"));
            argv.push(v);
        };
        match self.protocol {
            ProtocolChoice::ThreeStage { form, theta, phi } => {
                push("protocol", "three-stage".into());
                push("alice-form", form.as_str().into());
                push("theta", fmt_f64(theta));
                push("phi", fmt_f64(phi));
            }
            ProtocolChoice::SingleStage { theta } => {
                push("protocol", "single-stage".into());
                push("theta", fmt_f64(theta));
            }
        }
        push("eve", self.strategy.cli_name().into());
        if let Some(psi) = self.strategy.psi() {
            push("psi", fmt_f64(psi));
        }
        push("trials", self.trials.to_string());
        push("bits", self.bits_per_trial.to_string());
        if let Some(frame) = &self.frame {
            push("l", frame.l().to_string());
            push("k", frame.k().to_string());
        }
        push("seed", self.master_seed.to_string());
        push("output", self.output_format.cli_name().into());
        argv
    }

    fn from_keys(keys: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let invalid = |field: &'static str, value: &str, reason: &str| ConfigError::InvalidValue {
            field,
            value: value.to_string(),
            reason: reason.to_string(),
        };

        let protocol_word = keys
            .get("protocol")
            .ok_or(ConfigError::MissingField { field: "protocol" })?
            .as_str();

        let theta =
            parse_finite(keys, "theta")?.ok_or(ConfigError::MissingField { field: "theta" })?;

        let protocol = match protocol_word {
            "three-stage" | "three-stage-complex" => {
                let form = match (protocol_word, keys.get("alice-form")) {
                    ("three-stage-complex", None) => TransformForm::PhasePair,
                    ("three-stage-complex", Some(word)) => {
                        let form = parse_form(word).map_err(|r| invalid("alice-form", word, &r))?;
                        if form != TransformForm::PhasePair {
                            return Err(invalid(
                                "alice-form",
                                word,
                                "three-stage-complex fixes the form to phase-pair",
                            ));
                        }
                        form
                    }
                    ("three-stage", None) => TransformForm::Rotation,
                    ("three-stage", Some(word)) => {
                        parse_form(word).map_err(|r| invalid("alice-form", word, &r))?
                    }
                    _ => unreachable!(),
                };
                let phi =
                    parse_finite(keys, "phi")?.ok_or(ConfigError::MissingField { field: "phi" })?;
                ProtocolChoice::ThreeStage { form, theta, phi }
            }
            "single-stage" => {
                if !(0.0..PI).contains(&theta) {
                    return Err(invalid(
                        "theta",
                        &theta.to_string(),
                        "single-stage theta must lie in [0, pi)",
                    ));
                }
                for field in ["phi", "alice-form"] {
                    if keys.contains_key(field) {
                        return Err(ConfigError::Inapplicable {
                            field: if field == "phi" { "phi" } else { "alice-form" },
                            reason: "not applicable to single-stage".to_string(),
                        });
                    }
                }
                ProtocolChoice::SingleStage { theta }
            }
            other => {
                return Err(invalid(
                    "protocol",
                    other,
                    "expected three-stage, three-stage-complex or single-stage",
                ))
            }
        };

        let eve_word = keys.get("eve").map(String::as_str).unwrap_or("none");
        let psi = parse_finite(keys, "psi")?;
        let need_psi = |strategy: &'static str| {
            psi.ok_or(ConfigError::Inapplicable {
                field: "psi",
                reason: format!("required by --eve {strategy}"),
            })
        };
        let strategy = match eve_word {
            "none" => StrategyChoice::Passive,
            "clone-duplicate" => StrategyChoice::CloneDuplicate {
                psi: need_psi("clone-duplicate")?,
            },
            "clone-forge" => StrategyChoice::CloneForge {
                psi: need_psi("clone-forge")?,
            },
            "clone-block" => StrategyChoice::CloneBlock {
                psi: need_psi("clone-block")?,
            },
            "angle-guess" => StrategyChoice::AngleGuess {
                psi: need_psi("angle-guess")?,
            },
            "measure-resend" => StrategyChoice::MeasureResend,
            other => {
                return Err(invalid(
                    "eve",
                    other,
                    "expected none, clone-duplicate, clone-forge, clone-block, angle-guess or measure-resend",
                ))
            }
        };

        match (&protocol, &strategy) {
            (
                ProtocolChoice::SingleStage { .. },
                StrategyChoice::CloneDuplicate { .. }
                | StrategyChoice::CloneForge { .. }
                | StrategyChoice::CloneBlock { .. },
            ) => {
                return Err(ConfigError::Inapplicable {
                    field: "eve",
                    reason: "clone strategies target the three-stage protocol".to_string(),
                })
            }
            (
                ProtocolChoice::ThreeStage { .. },
                StrategyChoice::AngleGuess { .. } | StrategyChoice::MeasureResend,
            ) => {
                return Err(ConfigError::Inapplicable {
                    field: "eve",
                    reason: "this strategy targets the single-stage protocol".to_string(),
                })
            }
            _ => {}
        }
        if psi.is_some() && strategy.psi().is_none() {
            return Err(ConfigError::Inapplicable {
                field: "psi",
                reason: format!("--eve {eve_word} takes no angle"),
            });
        }

        let trials = parse_u64(keys, "trials")?.unwrap_or(100);
        if trials == 0 {
            return Err(invalid("trials", "0", "must be at least 1"));
        }
        let bits_per_trial = parse_u64(keys, "bits")?.unwrap_or(128);
        if bits_per_trial == 0 {
            return Err(invalid("bits", "0", "must be at least 1"));
        }

        let frame = if keys.contains_key("l") || keys.contains_key("k") {
            if matches!(protocol, ProtocolChoice::ThreeStage { .. }) {
                return Err(ConfigError::Inapplicable {
                    field: "l",
                    reason: "framing applies to the single-stage protocol only".to_string(),
                });
            }
            let l = parse_u64(keys, "l")?.unwrap_or(64);
            let k = parse_u64(keys, "k")?.unwrap_or(4);
            let config = FrameConfig::new(l as usize, k as usize).map_err(|e| {
                ConfigError::InvalidValue {
                    field: "l",
                    value: format!("l={l}, k={k}"),
                    reason: e.to_string(),
                }
            })?;
            Some(config)
        } else {
            None
        };

        let master_seed = parse_u64(keys, "seed")?.unwrap_or(0);

        let output_format = match keys.get("output").map(String::as_str).unwrap_or("json") {
            "json" => OutputFormat::Json,
            "csv" => OutputFormat::Csv,
            other => return Err(invalid("output", other, "expected json or csv")),
        };

        Ok(Self {
            protocol,
            strategy,
            trials,
            bits_per_trial,
            frame,
            master_seed,
            output_format,
        })
    }
}

/// Floats are rendered with 17 significant digits so every value survives a
/// text round trip bit for bit.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_form(word: &str) -> Result<TransformForm, String> {
    word.parse::<TransformForm>()
}

fn parse_finite(
    keys: &BTreeMap<String, String>,
    field: &'static str,
) -> Result<Option<f64>, ConfigError> {
    let Some(raw) = keys.get(field) else {
        return Ok(None);
    };
    let value: f64 = raw.parse().map_err(|_| ConfigError::InvalidValue {
        field,
        value: raw.clone(),
        reason: "not a real number".to_string(),
    })?;
    if !value.is_finite() {
        return Err(ConfigError::InvalidValue {
            field,
            value: raw.clone(),
            reason: "must be finite".to_string(),
        });
    }
    Ok(Some(value))
}

fn parse_u64(
    keys: &BTreeMap<String, String>,
    field: &'static str,
) -> Result<Option<u64>, ConfigError> {
    let Some(raw) = keys.get(field) else {
        return Ok(None);
    };
    raw.parse::<u64>()
        .map(Some)
        .map_err(|_| ConfigError::InvalidValue {
            field,
            value: raw.clone(),
            reason: "not a non-negative integer".to_string(),
        })
}

/// Splits argv into key/value pairs, accepting `--key value` and
/// `--key=value`. Duplicate keys within one source are rejected.
fn tokenize(args: &[String]) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut pairs = BTreeMap::new();
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let Some(stripped) = arg.strip_prefix("--") else {
            return Err(ConfigError::UnexpectedArgument { arg: arg.clone() });
        };
        let (key, value) = if let Some((k, v)) = stripped.split_once('=') {
            (k.to_string(), v.to_string())
        } else {
            let value = iter.next().ok_or_else(|| ConfigError::MissingValue {
                key: stripped.to_string(),
            })?;
            (stripped.to_string(), value.clone())
        };
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey { key });
        }
        if pairs.insert(key.clone(), value).is_some() {
            return Err(ConfigError::DuplicateKey { key });
        }
    }
    Ok(pairs)
}

/// Reads a flat `key=value` file mirroring the flags. Blank lines and lines
/// starting with `#` are skipped.
fn parse_file(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut pairs = BTreeMap::new();
    for (number, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::MalformedLine {
                path: path.display().to_string(),
                line: number + 1,
            });
        };
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        if key == "config" {
            return Err(ConfigError::NestedConfig);
        }
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey { key });
        }
        if pairs.insert(key, value).is_some() {
            return Err(ConfigError::DuplicateKey {
                key: line
                    .split('=')
                    .next()
                    .unwrap_or_default()
                    .trim()
                    .to_string(),
            });
        }
    }
    Ok(pairs)
}
