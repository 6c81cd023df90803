//! Run configuration: strict JSON with documented defaults.

use std::fmt;
use std::path::PathBuf;

use fraclab_core::forward::{Bump, GridSpec, Potential};
use fraclab_core::geometry::{build_disk_grids, build_exterior_patch, DiskGeometry, FractionalOrder, InteriorGrid, SigmaArc};
use fraclab_core::inverse::InversionConfig;
use fraclab_core::response::SourceBasis;
use serde::{Deserialize, Serialize};

/// A configuration problem, tied to the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl fmt::Display) -> Self {
        Self {
            key: key.to_string(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    Bump {
        center: [f64; 2],
        width: f64,
        height: f64,
    },
    /// Bumps centered at `(±offset, 0)`.
    TwoBumps {
        offset: f64,
        width: f64,
        height: f64,
    },
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self::Bump {
            center: [0.3, 0.0],
            width: 0.3,
            height: 5.0,
        }
    }
}

impl PotentialSpec {
    pub fn bumps(&self) -> Vec<Bump> {
        match *self {
            Self::Zero => Vec::new(),
            Self::Bump { center, width, height } => vec![Bump { center, width, height }],
            Self::TwoBumps { offset, width, height } => [offset, -offset]
                .iter()
                .map(|&x| Bump {
                    center: [x, 0.0],
                    width,
                    height,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSpec {
    /// Number of bumps on the mid-circle of the exterior patch.
    pub size: usize,
    /// Support radius of each bump.
    pub width: f64,
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self {
            size: SourceBasis::DEFAULT_SIZE,
            width: SourceBasis::DEFAULT_WIDTH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleSpec {
    pub omega_radius: f64,
    pub degree: usize,
    pub seed: u64,
}

impl Default for CounterexampleSpec {
    fn default() -> Self {
        Self {
            omega_radius: 0.4,
            degree: 10,
            seed: 20240901,
        }
    }
}

pub const CHECKS: [&str; 10] = [
    "large-harmonic",
    "ibp",
    "ibp-bump",
    "gov",
    "gov-bump",
    "local-characterization",
    "converse",
    "counterexample",
    "boundary-ucp",
    "range-density",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    /// Subset of the named checks; empty runs all of them.
    pub checks: Vec<String>,
    /// Refinement level of the p.v. oracle.
    pub quad_level: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            checks: Vec::new(),
            quad_level: 2,
        }
    }
}

impl VerifySpec {
    pub fn selected(&self) -> Vec<&str> {
        if self.checks.is_empty() {
            CHECKS.to_vec()
        } else {
            CHECKS.iter().copied().filter(|c| self.checks.iter().any(|k| k == c)).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelTableSpec {
    /// Interior sample points; the table holds every ordered pair.
    pub points: usize,
}

impl Default for KernelTableSpec {
    fn default() -> Self {
        Self { points: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub a: f64,
    pub grid: GridSpec,
    pub potential: PotentialSpec,
    pub source: SourceSpec,
    pub sigma: SigmaArc,
    pub inversion: InversionConfig,
    pub counterexample: CounterexampleSpec,
    pub verify: VerifySpec,
    pub kernels: KernelTableSpec,
    pub output_dir: PathBuf,
    /// Directory holding `response.csv` and `response.json` for `invert`;
    /// defaults to `output_dir`.
    pub data_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            a: 0.5,
            grid: GridSpec::default(),
            potential: PotentialSpec::default(),
            source: SourceSpec::default(),
            sigma: SigmaArc::half(),
            inversion: InversionConfig::default(),
            counterexample: CounterexampleSpec::default(),
            verify: VerifySpec::default(),
            kernels: KernelTableSpec::default(),
            output_dir: PathBuf::from("fraclab-out"),
            data_dir: None,
        }
    }
}

/// Dotted key path of a deserialization failure; unknown keys are appended
/// to the path of the object that contained them.
fn offending_key(path: &str, message: &str) -> String {
    let named = message
        .strip_prefix("unknown field `")
        .and_then(|rest| rest.split('`').next());
    let parent = if path == "." { "" } else { path };
    match named {
        Some(k) if parent.is_empty() => k.to_string(),
        Some(k) if parent.ends_with(k) => parent.to_string(),
        Some(k) => format!("{parent}.{k}"),
        None if parent.is_empty() => "<document>".to_string(),
        None => parent.to_string(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let message = e.inner().to_string();
            ConfigError {
                key: offending_key(&e.path().to_string(), &message),
                message,
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn order(&self) -> FractionalOrder {
        FractionalOrder::new(self.a).expect("validated")
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.output_dir.clone())
    }

    /// Cheap checks of everything the numerical modules would reject.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let order = FractionalOrder::new(self.a).map_err(|e| ConfigError::new("a", e))?;
        let geometry = DiskGeometry::unit();
        let (interior, boundary) = build_disk_grids(geometry, self.grid.radial_count, self.grid.angular_count, order)
            .map_err(|e| ConfigError::new("grid", e))?;
        let patch = build_exterior_patch(
            geometry,
            self.grid.patch_inner,
            self.grid.patch_outer,
            self.grid.patch_radial,
            self.grid.patch_angular,
        )
        .map_err(|e| ConfigError::new("grid", e))?;
        SigmaArc::new(self.sigma.start, self.sigma.end).map_err(|e| ConfigError::new("sigma", e))?;
        boundary.with_sigma(self.sigma).map_err(|e| ConfigError::new("sigma", e))?;
        self.potential_on(&interior).map_err(|e| ConfigError::new("potential", e))?;
        if self.source.size < 1 {
            return Err(ConfigError::new("source.size", "must be at least 1"));
        }
        SourceBasis::on_mid_circle(&patch, self.source.size, self.source.width)
            .map_err(|e| ConfigError::new("source.width", e))?;
        self.inversion.validate().map_err(|e| ConfigError::new("inversion", e))?;
        let c = &self.counterexample;
        if !(c.omega_radius > 0.0 && c.omega_radius < 1.0) {
            return Err(ConfigError::new("counterexample.omega_radius", "must lie in (0, 1)"));
        }
        if c.degree < 2 {
            return Err(ConfigError::new("counterexample.degree", "must be at least 2"));
        }
        if let Some(bad) = self.verify.checks.iter().find(|k| !CHECKS.contains(&k.as_str())) {
            return Err(ConfigError::new(
                "verify.checks",
                format!("unknown check `{bad}`; known: {}", CHECKS.join(", ")),
            ));
        }
        if !(1..=4).contains(&self.verify.quad_level) {
            return Err(ConfigError::new("verify.quad_level", "must lie in 1..=4"));
        }
        if self.kernels.points < 2 {
            return Err(ConfigError::new("kernels.points", "must be at least 2"));
        }
        Ok(())
    }

    pub fn potential_on(&self, grid: &InteriorGrid) -> fraclab_core::error::Result<Potential> {
        let bumps = self.potential.bumps();
        if bumps.iter().any(|b| !(b.width > 0.0 && b.height.is_finite())) {
            return Err(fraclab_core::error::FracError::InvalidArgument(
                "bump width must be positive and height finite".into(),
            ));
        }
        Potential::from_bumps(&bumps, grid)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_every_key() {
        let c = RunConfig::parse(r#"{"a": 0.5}"#).unwrap();
        assert_eq!(c, RunConfig::default());
        let echo: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        for key in ["a", "grid", "potential", "source", "sigma", "inversion", "counterexample", "verify", "kernels", "output_dir"] {
            assert!(echo.get(key).is_some(), "{key}");
        }
        assert_eq!(RunConfig::parse(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn out_of_range_order_names_a() {
        let e = RunConfig::parse(r#"{"a": 1.5}"#).unwrap_err();
        assert_eq!(e.key, "a");
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = RunConfig::parse(r#"{"aa": 0.5}"#).unwrap_err();
        assert_eq!(e.key, "aa");
        let e = RunConfig::parse(r#"{"grid": {"radial": 8}}"#).unwrap_err();
        assert_eq!(e.key, "grid.radial");
        let e = RunConfig::parse(r#"{"potential": {"kind": "bump", "center": [0, 0], "width": 0.3, "height": 1, "hight": 2}}"#).unwrap_err();
        assert_eq!(e.key, "potential.hight");
        let e = RunConfig::parse(r#"{"grid": {"radial_count": "many"}}"#).unwrap_err();
        assert_eq!(e.key, "grid.radial_count");
    }

    #[test]
    fn malformed_documents_are_rejected() {
        assert!(RunConfig::parse("{").is_err());
        assert!(RunConfig::parse(r#"{"a": "half"}"#).is_err());
    }

    #[test]
    fn module_invariants_are_checked() {
        assert_eq!(RunConfig::parse(r#"{"grid": {"radial_count": 2}}"#).unwrap_err().key, "grid");
        assert_eq!(RunConfig::parse(r#"{"sigma": {"start": 1.0, "end": 1.0}}"#).unwrap_err().key, "sigma");
        assert_eq!(
            RunConfig::parse(r#"{"potential": {"kind": "bump", "center": [0.8, 0], "width": 0.3, "height": 1}}"#)
                .unwrap_err()
                .key,
            "potential"
        );
        assert_eq!(RunConfig::parse(r#"{"verify": {"checks": ["nope"]}}"#).unwrap_err().key, "verify.checks");
        assert_eq!(
            RunConfig::parse(r#"{"inversion": {"regularization_weight": 0}}"#).unwrap_err().key,
            "inversion"
        );
    }

    #[test]
    fn potential_kinds() {
        let c = RunConfig::parse(r#"{"potential": {"kind": "two-bumps", "offset": 0.3, "width": 0.3, "height": 5}}"#).unwrap();
        assert_eq!(c.potential.bumps().len(), 2);
        let c = RunConfig::parse(r#"{"potential": {"kind": "zero"}}"#).unwrap();
        assert!(c.potential.bumps().is_empty());
    }
}
