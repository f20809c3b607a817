//! Scenario files: one JSON document describing a selection experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sensorsel::lti::generate::GeneratorSpec;
use sensorsel::lti::io::PlantFile;
use sensorsel::metric::LOGDET_EIGEN_FLOOR;
use sensorsel::regressors::AssemblyConfig;
use sensorsel::selector::{CollectionMode, ObservabilityPolicy, PipelineConfig};
use sensorsel::{Error, ExcitationConfig, Horizon, LtiSystem, Metric, SelectionIndex, TolPolicy};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlantSource {
    File { file: PathBuf },
    Generator(GeneratorSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Pseudoinverse cut-off for the regressor matrices.
    #[serde(default)]
    pub pinv: TolPolicy,
    /// Singular-value threshold for the observability rank test.
    #[serde(default)]
    pub rank: TolPolicy,
    #[serde(default = "default_floor")]
    pub logdet_floor: f64,
}

fn default_floor() -> f64 {
    LOGDET_EIGEN_FLOOR
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { pinv: TolPolicy::Default, rank: TolPolicy::Default, logdet_floor: LOGDET_EIGEN_FLOOR }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub plant: PlantSource,
    /// Seed sensors, counted from 1.
    pub seed_sensors: Vec<usize>,
    /// Eligible sensors, counted from 1; all when absent.
    #[serde(default)]
    pub candidates: Option<Vec<usize>>,
    /// Size `p'` of the final set.
    pub select: usize,
    pub metric: Metric,
    /// Window length `N`.
    pub history: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub max_columns: Option<usize>,
    pub excitation: ExcitationConfig,
    #[serde(default)]
    pub mode: CollectionMode,
    #[serde(default)]
    pub observability: ObservabilityPolicy,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Output directory; the `--out-dir` flag and `SENSORSEL_OUT_DIR` override.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

impl Scenario {
    /// Reads and validates. Relative plant paths resolve against the
    /// scenario's directory.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut sc: Scenario = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let PlantSource::File { file } = &mut sc.plant {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(&*file);
                }
            }
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.seed_sensors.is_empty() {
            return Err(Error::Config("seed_sensors must name at least one sensor".into()));
        }
        match self.metric.horizon {
            Horizon::Infinite { discount } if !(discount > 0.0 && discount < 1.0) => {
                return Err(Error::Config(format!("discount must lie in (0, 1), got {discount}")));
            }
            Horizon::Finite { steps: 0 } => return Err(Error::Config("finite horizon needs T >= 1".into())),
            _ => {}
        }
        if self.history == 0 || self.stride == 0 {
            return Err(Error::Config("history and stride must be positive".into()));
        }
        if self.select == 0 {
            return Err(Error::Config("select must be positive".into()));
        }
        Ok(())
    }

    pub fn build_plant(&self) -> Result<(LtiSystem, Vec<String>), Error> {
        match &self.plant {
            PlantSource::File { file } => {
                let pf = PlantFile::read(file)?;
                let sys = pf.to_system()?;
                Ok((sys, pf.labels()))
            }
            PlantSource::Generator(spec) => {
                let sys = spec.build()?;
                let labels = (1..=sys.p()).map(|k| format!("s{k}")).collect();
                Ok((sys, labels))
            }
        }
    }

    pub fn assembly(&self) -> AssemblyConfig {
        AssemblyConfig {
            history: self.history,
            stride: self.stride,
            max_columns: self.max_columns,
            tol: self.tolerances.pinv,
        }
    }

    pub fn pipeline(&self, p: usize) -> Result<PipelineConfig, Error> {
        let seed = SelectionIndex::from_one_based(&self.seed_sensors, p)?;
        let candidates = self
            .candidates
            .as_ref()
            .map(|c| SelectionIndex::from_one_based(c, p))
            .transpose()?;
        Ok(PipelineConfig {
            seed_sensors: seed,
            candidates,
            cardinality: self.select,
            metric: self.metric,
            assembly: self.assembly(),
            excitation: self.excitation.clone(),
            mode: self.mode,
            observability: self.observability,
            obs_tol: self.tolerances.rank,
            logdet_floor: self.tolerances.logdet_floor,
            state_dim: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "plant": {"generator": "random-stable", "n": 4, "m": 1, "p": 5, "seed": 3},
        "seed_sensors": [1, 2],
        "select": 2,
        "metric": {"kind": "trace", "horizon": "finite", "steps": 4},
        "history": 3,
        "excitation": {"seed": 1, "horizon": 400}
    }"#;

    #[test]
    fn parses_with_defaults() {
        let sc: Scenario = serde_json::from_str(MINIMAL).unwrap();
        sc.validate().unwrap();
        assert_eq!(sc.stride, 1);
        assert_eq!(sc.tolerances, Tolerances::default());
        assert_eq!(sc.mode, CollectionMode::Concurrent);
        assert!(matches!(sc.plant, PlantSource::Generator(GeneratorSpec::RandomStable { n: 4, .. })));
    }

    #[test]
    fn file_plant_source() {
        let text = MINIMAL.replace(r#"{"generator": "random-stable", "n": 4, "m": 1, "p": 5, "seed": 3}"#, r#"{"file": "p.json"}"#);
        let sc: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(sc.plant, PlantSource::File { file: "p.json".into() });
    }

    #[test]
    fn rejects_bad_values() {
        let mut sc: Scenario = serde_json::from_str(MINIMAL).unwrap();
        sc.schema_version = 2;
        assert!(sc.validate().is_err());
        let mut sc: Scenario = serde_json::from_str(MINIMAL).unwrap();
        sc.metric = Metric::trace_inf(1.0);
        assert!(sc.validate().is_err());
        let mut sc: Scenario = serde_json::from_str(MINIMAL).unwrap();
        sc.seed_sensors.clear();
        assert!(sc.validate().is_err());
        assert!(serde_json::from_str::<Scenario>(&MINIMAL.replace("\"history\"", "\"histroy\"")).is_err());
    }
}
