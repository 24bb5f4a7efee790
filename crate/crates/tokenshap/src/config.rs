//! Run configuration: one TOML file, with command line flags taking
//! precedence. Relative paths are resolved against the file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use tokenshap_core::aggregate::{AverageMode, TOP_K};
use tokenshap_core::attribution::{ExplainConfig, Method};
use tokenshap_core::corpus::Dimension;
use tokenshap_core::model::{MaskingStrategy, OutputMode};
use tokenshap_core::report::Palette;

use crate::error::{require_file, CliError, CliResult};

/// The only generator the permutation explainer implements.
pub const RNG_NAME: &str = "chacha8";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub corrections: Option<PathBuf>,
    pub model: Option<String>,
    pub method: Option<String>,
    pub output_mode: Option<String>,
    pub n_perms: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub batch_size: Option<usize>,
    pub masking: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub top_k: Option<usize>,
    pub average: Option<String>,
    pub scope: Option<String>,
    pub keep_subwords: Option<bool>,
    pub rng: Option<String>,
    pub request_timeout_secs: Option<f64>,
    pub dimension: Option<String>,
    #[serde(default)]
    pub dimensions: Vec<DimensionSection>,
    #[serde(default)]
    pub caps: CapsSection,
    pub palette: Option<PaletteSection>,
    pub simcheck: Option<SimcheckSection>,
    pub freq: Option<FreqSection>,
    pub eval: Option<EvalSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionSection {
    pub name: String,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapsSection {
    pub exact: Option<usize>,
    pub owen: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaletteSection {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimcheckSection {
    pub embeddings: PathBuf,
    pub threshold: f64,
    #[serde(default)]
    pub anchors: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreqSection {
    pub document: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// CSV of `id,label`; without it predictions come from the model.
    pub predictions: Option<PathBuf>,
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub method: Option<String>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelRef {
    Builtin(PathBuf),
    Bridge(String),
}

#[derive(Debug, Clone)]
pub struct SimcheckConfig {
    pub embeddings: PathBuf,
    pub threshold: f64,
    pub anchors: BTreeMap<String, Vec<String>>,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Directory relative paths were resolved against.
    pub base_dir: PathBuf,
    pub corpus: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub corrections: Option<PathBuf>,
    pub model: Option<ModelRef>,
    pub method: Method,
    pub output_mode: Option<OutputMode>,
    pub n_perms: Option<usize>,
    pub seed: u64,
    pub workers: usize,
    pub batch_size: usize,
    pub masking: MaskingStrategy,
    pub out_dir: PathBuf,
    pub top_k: usize,
    pub average: AverageMode,
    pub gold_scope: bool,
    pub keep_subwords: bool,
    pub request_timeout: Duration,
    /// Active dimension; `None` means "whatever the model declares".
    pub dimension: Option<Dimension>,
    pub exact_cap: usize,
    pub owen_cap: usize,
    pub palette: Palette,
    pub simcheck: Option<SimcheckConfig>,
    pub freq_document: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

fn invalid(e: impl ToString) -> CliError {
    CliError::validation(e.to_string())
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        require_file("config file", path)?;
        let text = fs::read_to_string(path)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let file: FileConfig =
            toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::resolve(file, &base, overrides)
    }

    pub fn resolve(file: FileConfig, base_dir: &Path, overrides: &Overrides) -> CliResult<Self> {
        let at = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };
        let existing = |what: &str, p: Option<PathBuf>| -> CliResult<Option<PathBuf>> {
            let Some(p) = p.map(at) else { return Ok(None) };
            require_file(what, &p)?;
            Ok(Some(p))
        };

        let rng = file.rng.as_deref().unwrap_or(RNG_NAME);
        if rng != RNG_NAME {
            return Err(invalid(format!("rng `{rng}` is not supported; use `{RNG_NAME}`")));
        }

        let method: Method = overrides
            .method
            .as_deref()
            .or(file.method.as_deref())
            .unwrap_or("partition")
            .parse()
            .map_err(invalid)?;
        if method == Method::Permutation && file.n_perms.is_none() {
            return Err(invalid("method `permutation` requires `n_perms`"));
        }
        if file.n_perms == Some(0) {
            return Err(invalid("`n_perms` must be at least 1"));
        }

        let model = match file.model.as_deref() {
            None => None,
            Some(spec) => Some(if let Some(p) = spec.strip_prefix("builtin:") {
                let p = at(PathBuf::from(p));
                require_file("builtin model", &p)?;
                ModelRef::Builtin(p)
            } else if let Some(cmd) = spec.strip_prefix("bridge:") {
                if cmd.trim().is_empty() {
                    return Err(invalid("`bridge:` needs a command line"));
                }
                ModelRef::Bridge(cmd.to_string())
            } else {
                return Err(invalid(format!(
                    "model `{spec}` must start with `builtin:` or `bridge:`"
                )));
            }),
        };

        let dimension = match (&file.dimension, file.dimensions.as_slice()) {
            (_, []) => {
                if let Some(name) = &file.dimension {
                    return Err(invalid(format!("dimension `{name}` is not defined")));
                }
                None
            }
            (None, [only]) => Some(Dimension::new(only.name.clone(), only.classes.clone()).map_err(invalid)?),
            (None, _) => return Err(invalid("several dimensions are defined; select one with `dimension`")),
            (Some(name), all) => {
                let d = all
                    .iter()
                    .find(|d| &d.name == name)
                    .ok_or_else(|| invalid(format!("dimension `{name}` is not defined")))?;
                Some(Dimension::new(d.name.clone(), d.classes.clone()).map_err(invalid)?)
            }
        };

        let palette = match &file.palette {
            None => Palette::default(),
            Some(p) => Palette::from_hex(&p.positive, &p.negative).map_err(invalid)?,
        };

        let simcheck = match file.simcheck {
            None => None,
            Some(s) => {
                if !(-1.0..=1.0).contains(&s.threshold) {
                    return Err(invalid(format!(
                        "simcheck threshold {} is outside [-1, 1]",
                        s.threshold
                    )));
                }
                let embeddings = at(s.embeddings);
                require_file("embeddings", &embeddings)?;
                Some(SimcheckConfig {
                    embeddings,
                    threshold: s.threshold,
                    anchors: s.anchors,
                })
            }
        };

        let timeout = file.request_timeout_secs.unwrap_or(5.0);
        if !(timeout.is_finite() && timeout > 0.0) {
            return Err(invalid("`request_timeout_secs` must be positive"));
        }
        let workers = overrides.workers.or(file.workers).unwrap_or(1);
        let batch_size = file.batch_size.unwrap_or(256);
        let top_k = file.top_k.unwrap_or(TOP_K);
        for (name, v) in [("workers", workers), ("batch_size", batch_size), ("top_k", top_k)] {
            if v == 0 {
                return Err(invalid(format!("`{name}` must be at least 1")));
            }
        }
        let defaults = ExplainConfig::default();

        Ok(RunConfig {
            base_dir: base_dir.to_path_buf(),
            corpus: existing("corpus", file.corpus)?,
            gazetteer: existing("gazetteer", file.gazetteer)?,
            corrections: existing("corrections", file.corrections)?,
            model,
            method,
            output_mode: file.output_mode.as_deref().map(str::parse).transpose().map_err(invalid)?,
            n_perms: file.n_perms,
            seed: overrides.seed.or(file.seed).unwrap_or(0),
            workers,
            batch_size,
            masking: file.masking.as_deref().map(str::parse).transpose().map_err(invalid)?.unwrap_or_default(),
            out_dir: match &overrides.out_dir {
                Some(d) => d.clone(),
                None => at(file.out_dir.unwrap_or_else(|| PathBuf::from("out"))),
            },
            top_k,
            average: file.average.as_deref().map(str::parse).transpose().map_err(invalid)?.unwrap_or_default(),
            gold_scope: match file.scope.as_deref().unwrap_or("all") {
                "all" => false,
                "gold" => true,
                other => return Err(invalid(format!("scope `{other}` is not `all` or `gold`"))),
            },
            keep_subwords: file.keep_subwords.unwrap_or(false),
            request_timeout: Duration::from_secs_f64(timeout),
            dimension,
            exact_cap: file.caps.exact.unwrap_or(defaults.exact_cap),
            owen_cap: file.caps.owen.unwrap_or(defaults.owen_cap),
            palette,
            simcheck,
            freq_document: existing("frequency document", file.freq.map(|f| f.document))?,
            predictions: existing("predictions", file.eval.and_then(|e| e.predictions))?,
        })
    }

    pub fn explain_config(&self) -> ExplainConfig {
        ExplainConfig {
            exact_cap: self.exact_cap,
            owen_cap: self.owen_cap,
            n_perms: self.n_perms.unwrap_or(ExplainConfig::default().n_perms),
            seed: self.seed,
            batch_size: self.batch_size,
        }
    }

    pub fn out(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }
}
