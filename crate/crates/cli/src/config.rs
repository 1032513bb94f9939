//! Run options from flags and an optional TOML file. Flags win.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use optctrl::DistanceKind;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::read_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Optctrl,
    Fps,
    Random,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distance {
    MeanNorm,
    MeanSquared,
}

impl From<Distance> for DistanceKind {
    fn from(d: Distance) -> Self {
        match d {
            Distance::MeanNorm => DistanceKind::MeanNorm,
            Distance::MeanSquared => DistanceKind::MeanSquaredNorm,
        }
    }
}

/// Options shared by `optimize`, `baseline` and `bench`. Every field may
/// also be given in the `--config` file under the same snake_case name.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    /// Template tetrahedral mesh (Medit .mesh).
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Directory of target .xyz files, one per target shape.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// Number of control points.
    #[arg(long)]
    pub k: Option<usize>,
    /// Regularization added to the Bilaplacian (default 1e-8 · trace/N).
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Search passes over all control points.
    #[arg(long)]
    pub passes: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Random-search samples (default N·K).
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_enum)]
    pub distance: Option<Distance>,
    /// Directory holding cached operator inverses.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Output file (standard output when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with defaults for any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Write `timings_ms` as an empty map so reports compare byte for byte.
    #[arg(long)]
    pub no_timings: bool,
}

/// Fully resolved options.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub template: PathBuf,
    pub targets: Option<PathBuf>,
    pub k: usize,
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub passes: usize,
    pub method: Method,
    pub trials: Option<usize>,
    pub distance: Distance,
    pub cache_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub timings: bool,
}

impl RunArgs {
    fn from_file(path: &Path) -> CliResult<Self> {
        let text = read_text(path)?;
        let mut file: RunArgs = toml::from_str(&text)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut file.template, &mut file.targets, &mut file.cache_dir, &mut file.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(file)
    }

    fn or(self, file: RunArgs) -> RunArgs {
        RunArgs {
            template: self.template.or(file.template),
            targets: self.targets.or(file.targets),
            k: self.k.or(file.k),
            epsilon: self.epsilon.or(file.epsilon),
            seed: self.seed.or(file.seed),
            passes: self.passes.or(file.passes),
            method: self.method.or(file.method),
            trials: self.trials.or(file.trials),
            distance: self.distance.or(file.distance),
            cache_dir: self.cache_dir.or(file.cache_dir),
            out: self.out.or(file.out),
            config: self.config,
            no_timings: self.no_timings || file.no_timings,
        }
    }

    /// Merges the config file, applies defaults and checks required options.
    pub fn resolve(self, default_method: Method) -> CliResult<RunConfig> {
        let merged = match &self.config {
            Some(path) => {
                let file = Self::from_file(path)?;
                self.or(file)
            }
            None => self,
        };
        let template = merged
            .template
            .ok_or_else(|| CliError::Usage("--template is required".into()))?;
        let k = merged.k.ok_or_else(|| CliError::Usage("--k is required".into()))?;
        if k == 0 {
            return Err(CliError::Usage("--k must be at least 1".into()));
        }
        let passes = merged.passes.unwrap_or(1);
        if passes == 0 {
            return Err(CliError::Usage("--passes must be at least 1".into()));
        }
        if let Some(e) = merged.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(CliError::Usage("--epsilon must be positive and finite".into()));
            }
        }
        if merged.trials == Some(0) {
            return Err(CliError::Usage("--trials must be at least 1".into()));
        }
        Ok(RunConfig {
            template,
            targets: merged.targets,
            k,
            epsilon: merged.epsilon,
            seed: merged.seed.unwrap_or(0),
            passes,
            method: merged.method.unwrap_or(default_method),
            trials: merged.trials,
            distance: merged.distance.unwrap_or(Distance::MeanNorm),
            cache_dir: merged.cache_dir,
            out: merged.out,
            timings: !merged.no_timings,
        })
    }
}

impl RunConfig {
    pub fn targets_dir(&self) -> CliResult<&Path> {
        self.targets
            .as_deref()
            .ok_or_else(|| CliError::Usage("--targets is required".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_paths_are_relative_to_it() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(
            &cfg,
            "template = \"bar.mesh\"\nk = 4\nseed = 9\nmethod = \"random\"\ndistance = \"mean-squared\"\nno_timings = true\n",
        )
        .unwrap();
        let args = RunArgs {
            k: Some(6),
            config: Some(cfg),
            ..Default::default()
        };
        let r = args.resolve(Method::Optctrl).unwrap();
        assert_eq!(r.k, 6);
        assert_eq!(r.seed, 9);
        assert_eq!(r.method, Method::Random);
        assert_eq!(r.distance, Distance::MeanSquared);
        assert_eq!(r.template, dir.path().join("bar.mesh"));
        assert!(!r.timings);
        assert_eq!(r.passes, 1);
    }

    #[test]
    fn unknown_keys_and_missing_options_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.toml");
        std::fs::write(&cfg, "kk = 3\n").unwrap();
        let args = RunArgs {
            config: Some(cfg),
            ..Default::default()
        };
        assert!(matches!(args.resolve(Method::Optctrl), Err(CliError::Invalid(_))));
        let missing = RunArgs {
            template: Some("x.mesh".into()),
            ..Default::default()
        };
        assert!(matches!(missing.resolve(Method::Optctrl), Err(CliError::Usage(_))));
    }
}
