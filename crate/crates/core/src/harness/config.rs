//! Flat TOML experiment configuration.
//!
//! ```toml
//! graph = "regular_tree"
//! k = 3
//! height = 15
//! source = "canonical"
//! model = "gaussian"
//! mu0 = 0.0
//! mu1 = 2.0
//! alpha = 0.1
//! radius = 0            # or "5logn", "sqrt_n"
//! n_grid = [1000, 2000, 4000]
//! trials_per_point = 50
//! base_seed = 1
//! output_dir = "out/figure1"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graph::{Graph, GraphError, GraphKind, Vertex};
use crate::obs_model::{ModelError, ObservationModel};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("missing key `{key}` for {context}")]
    Missing { key: &'static str, context: String },
    #[error("key `{key}` does not apply to {context}")]
    Inapplicable { key: &'static str, context: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Confidence radius, possibly depending on `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadiusSpec {
    #[default]
    Zero,
    Constant(usize),
    /// `round(5 ln n)`.
    FiveLogN,
    /// `round(√n)`.
    SqrtN,
}

impl RadiusSpec {
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            RadiusSpec::Zero => 0,
            RadiusSpec::Constant(r) => r,
            RadiusSpec::FiveLogN => (5.0 * (n as f64).ln()).round() as usize,
            RadiusSpec::SqrtN => (n as f64).sqrt().round() as usize,
        }
    }
}

impl fmt::Display for RadiusSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadiusSpec::Zero => write!(f, "0"),
            RadiusSpec::Constant(r) => write!(f, "{r}"),
            RadiusSpec::FiveLogN => write!(f, "5logn"),
            RadiusSpec::SqrtN => write!(f, "sqrt_n"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum IntOrName {
    Int(u64),
    Name(String),
}

impl Serialize for RadiusSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            RadiusSpec::Zero => IntOrName::Int(0),
            RadiusSpec::Constant(r) => IntOrName::Int(r as u64),
            other => IntOrName::Name(other.to_string()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RadiusSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match IntOrName::deserialize(d)? {
            IntOrName::Int(0) => Ok(RadiusSpec::Zero),
            IntOrName::Int(r) => Ok(RadiusSpec::Constant(r as usize)),
            IntOrName::Name(s) => match s.as_str() {
                "5logn" => Ok(RadiusSpec::FiveLogN),
                "sqrt_n" => Ok(RadiusSpec::SqrtN),
                _ => Err(serde::de::Error::custom(format!(
                    "radius must be an integer, \"5logn\" or \"sqrt_n\", got {s:?}"
                ))),
            },
        }
    }
}

/// A vertex given by label, or the graph's canonical center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceSpec {
    #[default]
    Canonical,
    Label(usize),
}

impl SourceSpec {
    pub fn resolve(&self, graph: &Graph) -> Result<Vertex, GraphError> {
        match *self {
            SourceSpec::Canonical => Ok(graph.canonical_source()),
            SourceSpec::Label(l) => graph.vertex(l),
        }
    }
}

impl fmt::Display for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceSpec::Canonical => write!(f, "canonical"),
            SourceSpec::Label(l) => write!(f, "{l}"),
        }
    }
}

impl Serialize for SourceSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            SourceSpec::Canonical => IntOrName::Name("canonical".into()),
            SourceSpec::Label(l) => IntOrName::Int(l as u64),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SourceSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match IntOrName::deserialize(d)? {
            IntOrName::Int(l) => Ok(SourceSpec::Label(l as usize)),
            IntOrName::Name(s) if s == "canonical" => Ok(SourceSpec::Canonical),
            IntOrName::Name(s) => {
                Err(serde::de::Error::custom(format!("source must be a vertex label or \"canonical\", got {s:?}")))
            }
        }
    }
}

fn default_trials() -> usize {
    50
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// One experiment: host graph, true source, candidate center, model, error
/// budget, radius rule and the grid of candidate-set sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `regular_tree`, `complete_tree`, `line` or `lattice`.
    pub graph: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branching: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
    /// True cascade source.
    #[serde(default)]
    pub source: SourceSpec,
    /// Center of the candidate set; defaults to the source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<SourceSpec>,
    /// `gaussian` (unit variance) or `bernoulli`.
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
    pub alpha: f64,
    #[serde(default)]
    pub radius: RadiusSpec,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials_per_point: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Label of the sweep series; derived from graph and radius if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    /// Checks everything that does not require building the graph.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.graph_kind()?;
        self.observation_model()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ConfigError::Invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.n_grid.is_empty() {
            return Err(ConfigError::Invalid("n_grid is empty".into()));
        }
        if self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::Invalid(format!(
                "n_grid must be positive and strictly increasing: {:?}",
                self.n_grid
            )));
        }
        if self.trials_per_point == 0 {
            return Err(ConfigError::Invalid("trials_per_point must be at least 1".into()));
        }
        Ok(())
    }

    pub fn graph_kind(&self) -> Result<GraphKind, ConfigError> {
        let context = format!("graph = {:?}", self.graph);
        let params: [(&'static str, Option<usize>); 7] = [
            ("k", self.k),
            ("height", self.height),
            ("branching", self.branching),
            ("levels", self.levels),
            ("length", self.length),
            ("dim", self.dim),
            ("side", self.side),
        ];
        let wanted: &[&str] = match self.graph.as_str() {
            "regular_tree" => &["k", "height"],
            "complete_tree" => &["branching", "levels"],
            "line" => &["length"],
            "lattice" => &["dim", "side"],
            other => return Err(ConfigError::Invalid(format!("unknown graph kind {other:?}"))),
        };
        for (key, value) in params {
            if value.is_some() && !wanted.contains(&key) {
                return Err(ConfigError::Inapplicable { key, context });
            }
        }
        let get = |key: &'static str| {
            params
                .iter()
                .find(|(k, _)| *k == key)
                .and_then(|(_, v)| *v)
                .ok_or_else(|| ConfigError::Missing { key, context: context.clone() })
        };
        Ok(match self.graph.as_str() {
            "regular_tree" => GraphKind::RegularTree { k: get("k")?, height: get("height")? },
            "complete_tree" => GraphKind::CompleteTree { branching: get("branching")?, levels: get("levels")? },
            "line" => GraphKind::Line { length: get("length")? },
            _ => GraphKind::Lattice { dim: get("dim")?, side: get("side")? },
        })
    }

    pub fn observation_model(&self) -> Result<ObservationModel, ConfigError> {
        let context = format!("model = {:?}", self.model);
        type Keys = [(&'static str, Option<f64>); 2];
        let (wanted, unwanted): (Keys, Keys) = match self.model.as_str() {
            "gaussian" => ([("mu0", self.mu0), ("mu1", self.mu1)], [("p0", self.p0), ("p1", self.p1)]),
            "bernoulli" => ([("p0", self.p0), ("p1", self.p1)], [("mu0", self.mu0), ("mu1", self.mu1)]),
            other => return Err(ConfigError::Invalid(format!("unknown model family {other:?}"))),
        };
        if let Some((key, _)) = unwanted.iter().find(|(_, v)| v.is_some()) {
            return Err(ConfigError::Inapplicable { key, context });
        }
        let mut values = [0.0; 2];
        for (slot, (key, value)) in values.iter_mut().zip(wanted) {
            *slot = value.ok_or(ConfigError::Missing { key, context: context.clone() })?;
        }
        Ok(match self.model.as_str() {
            "gaussian" => ObservationModel::gaussian(values[0], values[1])?,
            _ => ObservationModel::bernoulli(values[0], values[1])?,
        })
    }

    pub fn series_label(&self) -> String {
        match &self.series {
            Some(s) => s.clone(),
            None => format!("{}/R={}", self.graph_kind().map(|k| k.to_string()).unwrap_or_default(), self.radius),
        }
    }

    /// Preset tree sweep for one degree `k`.
    pub fn figure1(k: usize) -> Self {
        let height = match k {
            3 => 15,
            4 => 11,
            5 => 9,
            _ => panic!("figure 1 covers k = 3, 4, 5"),
        };
        ExperimentConfig {
            graph: "regular_tree".into(),
            k: Some(k),
            height: Some(height),
            branching: None,
            levels: None,
            length: None,
            dim: None,
            side: None,
            source: SourceSpec::Canonical,
            center: None,
            model: "gaussian".into(),
            mu0: Some(0.0),
            mu1: Some(2.0),
            p0: None,
            p1: None,
            alpha: 0.1,
            radius: RadiusSpec::Zero,
            n_grid: vec![1000, 2000, 4000, 8000, 16000],
            trials_per_point: 50,
            base_seed: 1,
            output_dir: PathBuf::from("out/figure1"),
            series: Some(format!("k={k}")),
        }
    }

    /// Preset line sweep for one radius rule.
    pub fn figure2(radius: RadiusSpec) -> Self {
        ExperimentConfig {
            graph: "line".into(),
            k: None,
            height: None,
            length: Some(1000),
            source: SourceSpec::Label(500),
            mu1: Some(0.5),
            alpha: 0.2,
            radius,
            n_grid: vec![25, 101, 201, 301, 401, 499],
            output_dir: PathBuf::from("out/figure2"),
            series: Some(format!("R={radius}")),
            ..Self::figure1(3)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TREE: &str = r#"
graph = "regular_tree"
k = 3
height = 6
model = "gaussian"
mu0 = 0.0
mu1 = 2.0
alpha = 0.1
n_grid = [10, 20]
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml_str(TREE).unwrap();
        assert_eq!(c.graph_kind().unwrap(), GraphKind::RegularTree { k: 3, height: 6 });
        assert_eq!(c.radius, RadiusSpec::Zero);
        assert_eq!(c.source, SourceSpec::Canonical);
        assert_eq!(c.trials_per_point, 50);
        assert_eq!(c.observation_model().unwrap(), ObservationModel::gaussian(0.0, 2.0).unwrap());
    }

    #[test]
    fn round_trips_through_toml() {
        for c in [ExperimentConfig::figure1(4), ExperimentConfig::figure2(RadiusSpec::FiveLogN)] {
            assert_eq!(ExperimentConfig::from_toml_str(&c.to_toml()).unwrap(), c);
        }
        let mut c = ExperimentConfig::figure2(RadiusSpec::Constant(3));
        c.source = SourceSpec::Label(496);
        c.center = Some(SourceSpec::Label(500));
        assert_eq!(ExperimentConfig::from_toml_str(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        let unknown = format!("{TREE}\nbogus = 1\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&unknown), Err(ConfigError::Parse(_))));
        let wrong_param = format!("{TREE}\nlength = 5\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&wrong_param), Err(ConfigError::Inapplicable { .. })));
        let missing = TREE.replace("height = 6\n", "");
        assert!(matches!(ExperimentConfig::from_toml_str(&missing), Err(ConfigError::Missing { key: "height", .. })));
        let unsorted = TREE.replace("[10, 20]", "[20, 10]");
        assert!(matches!(ExperimentConfig::from_toml_str(&unsorted), Err(ConfigError::Invalid(_))));
        let bad_radius = format!("{TREE}\nradius = \"log\"\n");
        assert!(ExperimentConfig::from_toml_str(&bad_radius).is_err());
        let bad_alpha = TREE.replace("alpha = 0.1", "alpha = 1.5");
        assert!(ExperimentConfig::from_toml_str(&bad_alpha).is_err());
        let bernoulli_mu = TREE.replace("\"gaussian\"", "\"bernoulli\"");
        assert!(ExperimentConfig::from_toml_str(&bernoulli_mu).is_err());
    }

    #[test]
    fn radius_rules() {
        assert_eq!(RadiusSpec::FiveLogN.resolve(500), 31);
        assert_eq!(RadiusSpec::SqrtN.resolve(500), 22);
        assert_eq!(RadiusSpec::FiveLogN.resolve(499), 31);
        assert_eq!(RadiusSpec::SqrtN.resolve(499), 22);
        assert_eq!(RadiusSpec::Zero.resolve(499), 0);
        assert_eq!(RadiusSpec::Constant(4).resolve(1), 4);
    }

    #[test]
    fn source_spec() {
        let g = Graph::line(1000).unwrap();
        assert_eq!(SourceSpec::Label(500).resolve(&g).unwrap().label(), 500);
        assert_eq!(SourceSpec::Canonical.resolve(&g).unwrap().label(), 500);
        assert!(SourceSpec::Label(1001).resolve(&g).is_err());
    }
}
