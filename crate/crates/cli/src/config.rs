//! Pipeline configuration, read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shape_concepts::concepts::DEFAULT_MIN_SIZE;
use shape_concepts::eval::{ClassifierParams, CvProtocol, TsneParams, DEFAULT_K_FRACTION, DEFAULT_RESOLUTION};
use shape_concepts::geometry::{DescriptorParams, RegionGrowParams, ShapeSpec};
use shape_concepts::motif::DEFAULT_SIGMA;
use shape_concepts::topo::{CutRule, DEFAULT_MAX_STEPS};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub segment: SegmentConfig,
    pub descriptor: DescriptorConfig,
    pub dictionary: DictionaryConfig,
    pub ensemble: EnsembleConfig,
    pub filtration: FiltrationConfig,
    pub concepts: ConceptsConfig,
    pub sweep: SweepConfig,
    pub classifier: ClassifierConfig,
    pub tsne: TsneConfig,
    pub grid: GridConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            synth: SynthConfig::default(),
            segment: SegmentConfig::default(),
            descriptor: DescriptorConfig::default(),
            dictionary: DictionaryConfig::default(),
            ensemble: EnsembleConfig::default(),
            filtration: FiltrationConfig::default(),
            concepts: ConceptsConfig::default(),
            sweep: SweepConfig::default(),
            classifier: ClassifierConfig::default(),
            tsne: TsneConfig::default(),
            grid: GridConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub label: String,
    pub geometry: ShapeSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub classes: Vec<ClassSpec>,
    pub scans_per_class: usize,
    pub noise_sigma: f64,
    /// Every dimension of a scan's shape is scaled by one factor drawn from
    /// `[1 - size_jitter, 1 + size_jitter]`.
    pub size_jitter: f64,
    pub elevation_deg: [f64; 2],
    pub distance: f64,
    pub resolution: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: vec![
                ClassSpec {
                    label: "box".into(),
                    geometry: ShapeSpec::Box { size: [0.2, 0.15, 0.25] },
                },
                ClassSpec {
                    label: "can".into(),
                    geometry: ShapeSpec::can(0.06, 0.2),
                },
                ClassSpec {
                    label: "sphere".into(),
                    geometry: ShapeSpec::Sphere { radius: 0.1 },
                },
            ],
            scans_per_class: 30,
            noise_sigma: 0.002,
            size_jitter: 0.15,
            elevation_deg: [15.0, 55.0],
            distance: 1.0,
            resolution: 56,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    pub normal_k: usize,
    pub angle_thresh_deg: f64,
    /// Neighbor radius as a multiple of the median point spacing.
    pub distance_factor: f64,
    pub curvature_thresh: Option<f64>,
    pub relative_curvature: Option<f64>,
    pub min_segment_size: usize,
    pub min_segment_fraction: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        let p = RegionGrowParams::new(15.0, 1.0);
        Self {
            normal_k: 16,
            angle_thresh_deg: p.angle_thresh_deg,
            distance_factor: 5.0,
            curvature_thresh: p.curvature_thresh,
            relative_curvature: p.relative_curvature,
            min_segment_size: p.min_segment_size,
            min_segment_fraction: p.min_segment_fraction,
        }
    }
}

impl SegmentConfig {
    pub fn params(&self, spacing: f64) -> RegionGrowParams {
        RegionGrowParams {
            angle_thresh_deg: self.angle_thresh_deg,
            dist_thresh: self.distance_factor * spacing,
            curvature_thresh: self.curvature_thresh,
            relative_curvature: self.relative_curvature,
            min_segment_size: self.min_segment_size,
            min_segment_fraction: self.min_segment_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescriptorConfig {
    pub radius_factor: f64,
    pub radius: Option<f64>,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        let d = DescriptorParams::default();
        Self {
            radius_factor: d.radius_factor,
            radius: d.radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DictionaryConfig {
    pub depth: usize,
    pub max_iter: usize,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        Self { depth: 4, max_iter: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub sigma: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { sigma: DEFAULT_SIGMA }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FiltrationConfig {
    pub max_steps: usize,
}

impl Default for FiltrationConfig {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

/// Cut time policy: `"auto"` picks the step with the most annexations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TStar {
    Fixed(f64),
    Policy(TStarPolicy),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TStarPolicy {
    Auto,
}

impl std::str::FromStr for TStar {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(TStar::Policy(TStarPolicy::Auto));
        }
        s.parse::<f64>()
            .map(TStar::Fixed)
            .map_err(|_| format!("expected `auto` or a number, got `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConceptsConfig {
    pub t_star: TStar,
    pub min_size: usize,
    pub rule: CutRule,
    pub shrinkage: f64,
}

impl Default for ConceptsConfig {
    fn default() -> Self {
        Self {
            t_star: TStar::Policy(TStarPolicy::Auto),
            min_size: DEFAULT_MIN_SIZE,
            rule: CutRule::default(),
            shrinkage: shape_concepts::concepts::DEFAULT_SHRINKAGE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub cut_times: Vec<f64>,
    pub min_sizes: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            cut_times: (0..=10).map(|i| i as f64 / 10.0).collect(),
            min_sizes: vec![2, 3, 5, 8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub eta0: f64,
    pub lambda: f64,
    pub split_ratio: f64,
    pub repetitions: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        let c = ClassifierParams::default();
        let p = CvProtocol::default();
        Self {
            epochs: c.epochs,
            eta0: c.eta0,
            lambda: c.lambda,
            split_ratio: p.split_ratio,
            repetitions: p.repetitions,
        }
    }
}

impl ClassifierConfig {
    pub fn params(&self) -> ClassifierParams {
        ClassifierParams {
            epochs: self.epochs,
            eta0: self.eta0,
            lambda: self.lambda,
        }
    }

    pub fn protocol(&self, seed: u64) -> CvProtocol {
        CvProtocol {
            split_ratio: self.split_ratio,
            repetitions: self.repetitions,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        let t = TsneParams::default();
        Self {
            perplexity: t.perplexity,
            iterations: t.iterations,
            learning_rate: t.learning_rate,
            early_exaggeration: t.early_exaggeration,
            exaggeration_iters: t.exaggeration_iters,
        }
    }
}

impl TsneConfig {
    pub fn params(&self, seed: u64) -> TsneParams {
        TsneParams {
            perplexity: self.perplexity,
            iterations: self.iterations,
            learning_rate: self.learning_rate,
            early_exaggeration: self.early_exaggeration,
            exaggeration_iters: self.exaggeration_iters,
            seed,
            ..TsneParams::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub k_fraction: f64,
    pub resolution: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            k_fraction: DEFAULT_K_FRACTION,
            resolution: DEFAULT_RESOLUTION,
        }
    }
}

impl PipelineConfig {
    /// Parses TOML, rejecting unknown keys and out-of-range values.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let mut unknown = Vec::new();
        let de = toml::Deserializer::new(text);
        let cfg: PipelineConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| CliError::Config(vec![e.to_string().trim().to_string()]))?;
        if !unknown.is_empty() {
            return Err(CliError::Config(unknown.into_iter().map(|k| format!("unknown key `{k}`")).collect()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Lists every offending value.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut bad = Vec::new();
        let mut check = |ok: bool, key: &str, msg: &str| {
            if !ok {
                bad.push(format!("`{key}` {msg}"));
            }
        };
        let s = &self.synth;
        check(!s.classes.is_empty(), "synth.classes", "must not be empty");
        let mut labels: Vec<&str> = s.classes.iter().map(|c| c.label.as_str()).collect();
        labels.sort_unstable();
        let distinct = labels.windows(2).all(|w| w[0] != w[1]);
        check(distinct, "synth.classes", "labels must be distinct");
        check(
            labels.iter().all(|l| !l.is_empty() && !l.contains(char::is_whitespace)),
            "synth.classes.label",
            "must be non-empty without whitespace",
        );
        check(s.scans_per_class >= 2, "synth.scans_per_class", "must be >= 2");
        check(s.noise_sigma >= 0.0 && s.noise_sigma.is_finite(), "synth.noise_sigma", "must be >= 0");
        check((0.0..1.0).contains(&s.size_jitter), "synth.size_jitter", "must be in [0, 1)");
        check(
            s.elevation_deg[0] <= s.elevation_deg[1] && s.elevation_deg.iter().all(|e| (-90.0..=90.0).contains(e)),
            "synth.elevation_deg",
            "must be an ordered range within [-90, 90]",
        );
        check(s.distance > 0.0 && s.distance.is_finite(), "synth.distance", "must be > 0");
        check(s.resolution >= 2, "synth.resolution", "must be >= 2");

        let g = &self.segment;
        check(g.normal_k >= 3, "segment.normal_k", "must be >= 3");
        check((0.0..=180.0).contains(&g.angle_thresh_deg), "segment.angle_thresh_deg", "must be in [0, 180]");
        check(g.distance_factor > 0.0 && g.distance_factor.is_finite(), "segment.distance_factor", "must be > 0");
        check(g.curvature_thresh.is_none_or(|c| c >= 0.0), "segment.curvature_thresh", "must be >= 0");
        check(g.relative_curvature.is_none_or(|c| c >= 0.0), "segment.relative_curvature", "must be >= 0");
        check((0.0..1.0).contains(&g.min_segment_fraction), "segment.min_segment_fraction", "must be in [0, 1)");

        let d = &self.descriptor;
        check(d.radius_factor > 0.0 && d.radius_factor.is_finite(), "descriptor.radius_factor", "must be > 0");
        check(d.radius.is_none_or(|r| r > 0.0 && r.is_finite()), "descriptor.radius", "must be > 0");

        check((1..=16).contains(&self.dictionary.depth), "dictionary.depth", "must be in [1, 16]");
        check(self.dictionary.max_iter >= 1, "dictionary.max_iter", "must be >= 1");
        check(self.ensemble.sigma > 0.0 && self.ensemble.sigma.is_finite(), "ensemble.sigma", "must be > 0");
        check(self.filtration.max_steps >= 2, "filtration.max_steps", "must be >= 2");

        let c = &self.concepts;
        if let TStar::Fixed(t) = c.t_star {
            check((0.0..=1.0).contains(&t), "concepts.t_star", "must be `auto` or in [0, 1]");
        }
        check(c.min_size >= 1, "concepts.min_size", "must be >= 1");
        check(c.shrinkage >= 0.0 && c.shrinkage.is_finite(), "concepts.shrinkage", "must be >= 0");

        let w = &self.sweep;
        check(!w.cut_times.is_empty(), "sweep.cut_times", "must not be empty");
        check(w.cut_times.iter().all(|t| (0.0..=1.0).contains(t)), "sweep.cut_times", "must lie in [0, 1]");
        check(!w.min_sizes.is_empty(), "sweep.min_sizes", "must not be empty");
        check(w.min_sizes.iter().all(|m| *m >= 2), "sweep.min_sizes", "must all be >= 2");

        let k = &self.classifier;
        check(k.epochs >= 1, "classifier.epochs", "must be >= 1");
        check(k.eta0 > 0.0 && k.eta0.is_finite(), "classifier.eta0", "must be > 0");
        check(k.lambda >= 0.0 && k.lambda.is_finite(), "classifier.lambda", "must be >= 0");
        check(k.split_ratio > 0.0 && k.split_ratio < 1.0, "classifier.split_ratio", "must be in (0, 1)");
        check(k.repetitions >= 1, "classifier.repetitions", "must be >= 1");

        let t = &self.tsne;
        check(t.perplexity > 0.0 && t.perplexity.is_finite(), "tsne.perplexity", "must be > 0");
        check(t.learning_rate > 0.0 && t.learning_rate.is_finite(), "tsne.learning_rate", "must be > 0");
        check(t.early_exaggeration >= 1.0, "tsne.early_exaggeration", "must be >= 1");

        check(self.grid.k_fraction > 0.0 && self.grid.k_fraction <= 1.0, "grid.k_fraction", "must be in (0, 1]");
        check(self.grid.resolution >= 2, "grid.resolution", "must be >= 2");

        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(bad))
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    /// Seed for one stage, derived from the root seed and the stage name.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }
}

pub fn derive_seed(root: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_listed() {
        let err = PipelineConfig::from_toml("seed = 1\nbogus = 2\n[dictionary]\ndepht = 3\n").unwrap_err();
        let CliError::Config(keys) = err else { panic!("{err:?}") };
        assert_eq!(keys.len(), 2);
        assert!(keys.iter().any(|k| k.contains("bogus")));
        assert!(keys.iter().any(|k| k.contains("dictionary.depht")));
    }

    #[test]
    fn out_of_range_values_are_listed() {
        let err = PipelineConfig::from_toml("[ensemble]\nsigma = -1.0\n[concepts]\nt_star = 2.0\n").unwrap_err();
        let CliError::Config(keys) = err else { panic!("{err:?}") };
        assert_eq!(keys.len(), 2);
    }

    #[test]
    fn t_star_accepts_auto_and_numbers() {
        let a = PipelineConfig::from_toml("[concepts]\nt_star = \"auto\"\n").unwrap();
        assert_eq!(a.concepts.t_star, TStar::Policy(TStarPolicy::Auto));
        let b = PipelineConfig::from_toml("[concepts]\nt_star = 0.25\n").unwrap();
        assert_eq!(b.concepts.t_star, TStar::Fixed(0.25));
        assert!(PipelineConfig::from_toml("[concepts]\nt_star = \"never\"\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.ensemble.sigma = 0.03;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn stage_seeds_differ() {
        let cfg = PipelineConfig::default();
        assert_ne!(cfg.stage_seed("synth"), cfg.stage_seed("embed"));
        assert_eq!(cfg.stage_seed("synth"), derive_seed(cfg.seed, "synth"));
    }
}
