//! Curriculum data with known ground truth.
//!
//! Pseudo-videos concatenate 2-4 synthetic "images", each repeated verbatim
//! for 3-6 frames, so the residual is exactly zero inside a segment and jumps
//! at image boundaries. Drift videos replace this with an AR(1) background,
//! wandering salient objects and time-varying evidence.
//!
//! Salient tokens carry `evidence * u_c` on top of the background, where
//! `u_c` is the unit direction of the video's class in a [`ClassBasis`].

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding;
use crate::tokenstream::{StreamError, TokenGrid};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Stream(#[from] StreamError),
}

pub type Result<T> = std::result::Result<T, GenError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pseudo,
    Drift,
}

impl Stage {
    fn tag(self) -> u64 {
        match self {
            Stage::Pseudo => 1,
            Stage::Drift => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Pseudo => "pseudo",
            Stage::Drift => "drift",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pseudo" => Ok(Stage::Pseudo),
            "drift" => Ok(Stage::Drift),
            other => Err(format!("unknown stage {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub dim: usize,
    pub tokens_per_frame: usize,
    pub classes: usize,
    /// Inclusive range of images per pseudo-video.
    pub images_per_video: [usize; 2],
    /// Inclusive range of repeats per image.
    pub repeats_per_image: [usize; 2],
    /// Inclusive frame-count range for drift videos.
    pub drift_frames: [usize; 2],
    /// AR(1) temporal correlation of drift backgrounds.
    pub gamma: f64,
    /// Per-channel standard deviation of background tokens.
    pub noise_scale: f64,
    /// Salient tokens per frame; `None` means `ceil(N / 8)`.
    pub salient_per_frame: Option<usize>,
    pub evidence: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            tokens_per_frame: 64,
            classes: 8,
            images_per_video: [2, 4],
            repeats_per_image: [3, 6],
            drift_frames: [8, 24],
            gamma: 0.9,
            noise_scale: 1.0,
            salient_per_frame: None,
            evidence: 4.0,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn salient_count(&self) -> usize {
        self.salient_per_frame
            .unwrap_or_else(|| self.tokens_per_frame.div_ceil(8))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(GenError::InvalidConfig(msg.to_string()));
        if self.dim == 0 || self.tokens_per_frame == 0 || self.classes == 0 {
            return bad("dim, tokens_per_frame and classes must be positive");
        }
        for (name, [lo, hi]) in [
            ("images_per_video", self.images_per_video),
            ("repeats_per_image", self.repeats_per_image),
        ] {
            if lo == 0 || lo > hi {
                return bad(&format!("{name} must be a non-empty positive range"));
            }
        }
        let [lo, hi] = self.drift_frames;
        if lo < 2 || lo > hi {
            return bad("drift_frames must be a non-empty range starting at >= 2");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return bad("noise_scale must be finite and non-negative");
        }
        if !self.evidence.is_finite() {
            return bad("evidence must be finite");
        }
        let k = self.salient_count();
        if k == 0 || k > self.tokens_per_frame {
            return bad("salient_per_frame must lie in [1, tokens_per_frame]");
        }
        Ok(())
    }
}

/// Fixed unit direction per class; orthonormal when `classes <= dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassBasis {
    dim: usize,
    dirs: Vec<Vec<f64>>,
}

impl ClassBasis {
    pub fn new(classes: usize, dim: usize, seed: u64) -> Self {
        let mut rng = seeding::substream(seed, 0xBA5E);
        let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(classes);
        while dirs.len() < classes {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            if dirs.len() < dim {
                for u in &dirs {
                    let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|a| *a /= norm);
                dirs.push(v);
            }
        }
        Self { dim, dirs }
    }

    pub fn classes(&self) -> usize {
        self.dirs.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn direction(&self, class: usize) -> &[f64] {
        &self.dirs[class]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVideo {
    pub id: u64,
    pub grid: TokenGrid,
    pub class_label: usize,
    /// `T x N`, 1 where the token carries class evidence.
    pub saliency: Vec<u8>,
    /// Frames that start a new segment (frame 0 included); empty for drift videos.
    pub boundary_frames: Vec<usize>,
}

impl LabeledVideo {
    pub fn frames(&self) -> usize {
        self.grid.frames()
    }

    pub fn token_count(&self) -> usize {
        self.grid.token_count()
    }

    pub fn is_salient(&self, flat: usize) -> bool {
        self.saliency[flat] == 1
    }

    pub fn salient_indices(&self) -> Vec<usize> {
        (0..self.saliency.len()).filter(|&i| self.saliency[i] == 1).collect()
    }
}

fn check_basis(cfg: &GenConfig, basis: &ClassBasis) -> Result<()> {
    cfg.validate()?;
    if basis.dim() != cfg.dim || basis.classes() != cfg.classes {
        return Err(GenError::InvalidConfig(format!(
            "basis is {}x{}, config wants {} classes in dim {}",
            basis.classes(),
            basis.dim(),
            cfg.classes,
            cfg.dim
        )));
    }
    Ok(())
}

fn background(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn add_evidence(token: &mut [f64], dir: &[f64], magnitude: f64) {
    token.iter_mut().zip(dir).for_each(|(v, u)| *v += magnitude * u);
}

fn to_f32(values: &[f64]) -> Vec<f32> {
    values.iter().map(|&v| v as f32).collect()
}

pub fn gen_pseudo_video(
    cfg: &GenConfig,
    basis: &ClassBasis,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledVideo> {
    check_basis(cfg, basis)?;
    let (n, d) = (cfg.tokens_per_frame, cfg.dim);
    let k = cfg.salient_count();
    let class_label = rng.random_range(0..cfg.classes);
    let dir = basis.direction(class_label);
    let images = rng.random_range(cfg.images_per_video[0]..=cfg.images_per_video[1]);

    let mut values = Vec::new();
    let mut saliency = Vec::new();
    let mut boundary_frames = Vec::new();
    let mut frames = 0;
    for _ in 0..images {
        let mut image = background(rng, n * d, cfg.noise_scale);
        let mut marks = vec![0u8; n];
        for pos in index::sample(rng, n, k) {
            let magnitude = cfg.evidence * rng.random_range(0.75..1.25);
            add_evidence(&mut image[pos * d..(pos + 1) * d], dir, magnitude);
            marks[pos] = 1;
        }
        let image = to_f32(&image);
        let repeats = rng.random_range(cfg.repeats_per_image[0]..=cfg.repeats_per_image[1]);
        boundary_frames.push(frames);
        for _ in 0..repeats {
            values.extend_from_slice(&image);
            saliency.extend_from_slice(&marks);
        }
        frames += repeats;
    }
    Ok(LabeledVideo {
        id: 0,
        grid: TokenGrid::new(frames, n, d, values)?,
        class_label,
        saliency,
        boundary_frames,
    })
}

pub fn gen_drift_video(
    cfg: &GenConfig,
    basis: &ClassBasis,
    rng: &mut ChaCha8Rng,
    frames: usize,
) -> Result<LabeledVideo> {
    check_basis(cfg, basis)?;
    if frames < 2 {
        return Err(GenError::InvalidConfig(format!(
            "drift videos need at least 2 frames, got {frames}"
        )));
    }
    let (n, d) = (cfg.tokens_per_frame, cfg.dim);
    let k = cfg.salient_count();
    let class_label = rng.random_range(0..cfg.classes);
    let dir = basis.direction(class_label);
    let innovation = (1.0 - cfg.gamma * cfg.gamma).sqrt();
    let period = rng.random_range(6.0..16.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);

    let mut state = background(rng, n * d, cfg.noise_scale);
    let mut objects: Vec<usize> = index::sample(rng, n, k).into_vec();
    let mut values = Vec::with_capacity(frames * n * d);
    let mut saliency = Vec::with_capacity(frames * n);
    for t in 0..frames {
        if t > 0 {
            for v in &mut state {
                *v = cfg.gamma * *v
                    + innovation * cfg.noise_scale * rng.sample::<f64, _>(StandardNormal);
            }
            for o in 0..objects.len() {
                let step: i64 = rng.random_range(-1..=1);
                let target = objects[o] as i64 + step;
                if (0..n as i64).contains(&target) && !objects.contains(&(target as usize)) {
                    objects[o] = target as usize;
                }
            }
        }
        let magnitude =
            cfg.evidence * (1.0 + 0.5 * (std::f64::consts::TAU * t as f64 / period + phase).sin());
        let mut frame = state.clone();
        let mut marks = vec![0u8; n];
        for &pos in &objects {
            add_evidence(&mut frame[pos * d..(pos + 1) * d], dir, magnitude);
            marks[pos] = 1;
        }
        values.extend(to_f32(&frame));
        saliency.extend(marks);
    }
    Ok(LabeledVideo {
        id: 0,
        grid: TokenGrid::new(frames, n, d, values)?,
        class_label,
        saliency,
        boundary_frames: Vec::new(),
    })
}

/// Video `index` of a stage's stream; a pure function of `(cfg, basis, stage, index)`.
pub fn gen_video(
    cfg: &GenConfig,
    basis: &ClassBasis,
    stage: Stage,
    index: u64,
) -> Result<LabeledVideo> {
    let mut rng = seeding::substream(seeding::derive_seed(cfg.seed, &[stage.tag()]), index);
    let mut video = match stage {
        Stage::Pseudo => gen_pseudo_video(cfg, basis, &mut rng)?,
        Stage::Drift => {
            let frames = rng.random_range(cfg.drift_frames[0]..=cfg.drift_frames[1]);
            gen_drift_video(cfg, basis, &mut rng, frames)?
        }
    };
    video.id = index;
    Ok(video)
}

pub fn gen_dataset(
    cfg: &GenConfig,
    basis: &ClassBasis,
    count: usize,
    stage: Stage,
) -> Result<Vec<LabeledVideo>> {
    if count == 0 {
        return Err(GenError::InvalidConfig("count must be >= 1".into()));
    }
    (0..count as u64)
        .map(|i| gen_video(cfg, basis, stage, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenstream::compute_residual;

    fn setup() -> (GenConfig, ClassBasis) {
        let cfg = GenConfig::default();
        let basis = ClassBasis::new(cfg.classes, cfg.dim, 11);
        (cfg, basis)
    }

    #[test]
    fn basis_is_orthonormal() {
        let basis = ClassBasis::new(8, 16, 3);
        for a in 0..8 {
            for b in 0..8 {
                let dot: f64 = basis
                    .direction(a)
                    .iter()
                    .zip(basis.direction(b))
                    .map(|(x, y)| x * y)
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
        let wide = ClassBasis::new(5, 2, 3);
        assert_eq!(wide.classes(), 5);
    }

    #[test]
    fn pseudo_frame_counts_and_residual_pattern() {
        let (cfg, basis) = setup();
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..1000 {
            let v = gen_video(&cfg, &basis, Stage::Pseudo, i).unwrap();
            let t = v.frames();
            assert!((6..=24).contains(&t));
            seen.insert(t);
            assert!(v.salient_indices().len() >= cfg.salient_count());
            let r = compute_residual(&v.grid).unwrap();
            for f in 0..t {
                let norm: f64 = r.frame(f).iter().map(|&x| (x as f64).powi(2)).sum();
                if v.boundary_frames.contains(&f) {
                    assert!(norm > 0.0, "video {i} boundary {f}");
                } else {
                    assert_eq!(norm, 0.0, "video {i} frame {f}");
                }
            }
        }
        assert_eq!(seen.first(), Some(&6));
        assert_eq!(seen.last(), Some(&24));
    }

    #[test]
    fn drift_with_zero_gamma_doubles_residual_variance() {
        let cfg = GenConfig {
            gamma: 0.0,
            evidence: 0.0,
            ..GenConfig::default()
        };
        let basis = ClassBasis::new(cfg.classes, cfg.dim, 1);
        let mut rng = seeding::substream(5, 0);
        // 10 frames x 64 tokens x 16 channels; residuals from frames 1.. give 9216 samples.
        let v = gen_drift_video(&cfg, &basis, &mut rng, 10).unwrap();
        let r = compute_residual(&v.grid).unwrap();
        let tail: Vec<f64> = r.values()[64 * 16..].iter().map(|&x| x as f64).collect();
        let var = tail.iter().map(|x| x * x).sum::<f64>() / tail.len() as f64;
        assert!((var - 2.0).abs() < 0.12, "{var}");
    }

    #[test]
    fn high_gamma_makes_motion_subtle() {
        let measure = |gamma: f64| {
            let cfg = GenConfig {
                gamma,
                ..GenConfig::default()
            };
            let basis = ClassBasis::new(cfg.classes, cfg.dim, 1);
            let mut rng = seeding::substream(8, 0);
            let v = gen_drift_video(&cfg, &basis, &mut rng, 20).unwrap();
            let r = compute_residual(&v.grid).unwrap();
            let norm = |g: &[f32]| -> f64 {
                g.chunks(16)
                    .map(|c| c.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt())
                    .sum::<f64>()
                    / (g.len() / 16) as f64
            };
            let stride = 64 * 16;
            (norm(&r.values()[stride..]), norm(&v.grid.values()[stride..]))
        };
        let (res_slow, frame_slow) = measure(0.99);
        let (res_fast, _) = measure(0.0);
        assert!(res_slow < 0.5 * frame_slow, "{res_slow} vs {frame_slow}");
        assert!(res_slow < 0.5 * res_fast);
    }

    #[test]
    fn drift_background_is_stationary() {
        let cfg = GenConfig {
            gamma: 0.8,
            evidence: 0.0,
            ..GenConfig::default()
        };
        let basis = ClassBasis::new(cfg.classes, cfg.dim, 1);
        let mut rng = seeding::substream(21, 0);
        let v = gen_drift_video(&cfg, &basis, &mut rng, 24).unwrap();
        for t in [0, 11, 23] {
            let f = v.grid.frame(t);
            let var = f.iter().map(|&x| (x as f64).powi(2)).sum::<f64>() / f.len() as f64;
            assert!((var - 1.0).abs() < 0.15, "frame {t}: {var}");
        }
        assert!(v.boundary_frames.is_empty());
    }

    #[test]
    fn datasets_are_deterministic() {
        let (cfg, basis) = setup();
        let a = gen_dataset(&cfg, &basis, 5, Stage::Drift).unwrap();
        let b = gen_dataset(&cfg, &basis, 5, Stage::Drift).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[3], gen_video(&cfg, &basis, Stage::Drift, 3).unwrap());
        assert_ne!(a[0].grid, a[1].grid);
        let other = GenConfig {
            seed: 1,
            ..cfg.clone()
        };
        assert_ne!(gen_dataset(&other, &basis, 1, Stage::Drift).unwrap()[0], a[0]);
        assert!(gen_dataset(&cfg, &basis, 0, Stage::Pseudo).is_err());
    }

    #[test]
    fn config_validation() {
        let (cfg, basis) = setup();
        assert_eq!(cfg.salient_count(), 8);
        let bad = GenConfig {
            gamma: 1.0,
            ..cfg.clone()
        };
        assert!(bad.validate().is_err());
        let bad = GenConfig {
            images_per_video: [3, 2],
            ..cfg.clone()
        };
        assert!(bad.validate().is_err());
        let mut rng = seeding::substream(0, 0);
        assert!(gen_drift_video(&cfg, &basis, &mut rng, 1).is_err());
        let wrong = ClassBasis::new(3, 16, 0);
        assert!(gen_pseudo_video(&cfg, &wrong, &mut rng).is_err());
    }
}
