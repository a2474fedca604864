//! Landmark feature head: quadrant aggregation, scalar activation and vector
//! quantization of pole likelihoods into a compact planner state.
//!
//! The image is split into four equal horizontal bands. Each band keeps the
//! strongest pole likelihood projected into it, a logistic calibrated once on
//! the training domain squashes the four values, and a small k-means codebook
//! maps the result to a discrete codeword.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, FormatError, Result};
use crate::rng;
use crate::world::Observation;

pub const DEFAULT_GAIN: f64 = 8.0;
pub const DEFAULT_CODEBOOK_SIZE: usize = 16;
const MAX_LLOYD_ITERATIONS: usize = 100;

pub type Vec4 = [f64; 4];

/// Per-quadrant pole likelihood, each component in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuadrantFeature(pub Vec4);

impl QuadrantFeature {
    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivatedFeature(pub Vec4);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CodewordId(pub usize);

/// Inclusive pixel range `[lo, hi]` of quadrant `i` for an image `width` wide.
pub fn quadrant_range(width: u32, i: usize) -> (u32, u32) {
    let q = width / 4;
    let lo = q * i as u32;
    (lo, lo + q - 1)
}

pub fn quadrant_of(width: u32, x: u32) -> usize {
    ((x / (width / 4)) as usize).min(3)
}

pub fn aggregate(obs: &Observation, width: u32) -> Result<QuadrantFeature, ConfigError> {
    if width == 0 || width % 4 != 0 {
        return Err(ConfigError::new(
            "image_width",
            format!("must be a positive multiple of 4, got {width}"),
        ));
    }
    let mut q = [0.0f64; 4];
    for p in &obs.pole_projections {
        let i = quadrant_of(width, p.pixel_x);
        q[i] = q[i].max(p.likelihood);
    }
    Ok(QuadrantFeature(q))
}

pub fn has_landmark_view(q: &QuadrantFeature, tau: f64) -> bool {
    q.max() >= tau
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub gain: f64,
    pub threshold: f64,
}

impl Activation {
    pub fn apply(&self, q: &QuadrantFeature) -> ActivatedFeature {
        ActivatedFeature(q.0.map(|v| logistic(self.gain * (v - self.threshold))))
    }
}

/// Threshold at the midpoint of the class-conditional means of `max_i q_i`.
pub fn calibrate_activation(features: &[QuadrantFeature], labels: &[bool]) -> Result<Activation> {
    if features.len() != labels.len() {
        return Err(Error::Calibration(format!(
            "{} features but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let (mut pos, mut n_pos, mut neg, mut n_neg) = (0.0, 0usize, 0.0, 0usize);
    for (f, &label) in features.iter().zip(labels) {
        if label {
            pos += f.max();
            n_pos += 1;
        } else {
            neg += f.max();
            n_neg += 1;
        }
    }
    if n_pos == 0 {
        return Err(Error::Calibration("no positive (has-pole) samples".into()));
    }
    if n_neg == 0 {
        return Err(Error::Calibration("no negative (no-pole) samples".into()));
    }
    let threshold = 0.5 * (pos / n_pos as f64 + neg / n_neg as f64);
    Ok(Activation {
        gain: DEFAULT_GAIN,
        threshold,
    })
}

fn dist2(a: &Vec4, b: &Vec4) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: Vec<Vec4>,
}

impl Codebook {
    pub fn new(centroids: Vec<Vec4>) -> Result<Self, FormatError> {
        if centroids.is_empty() {
            return Err(FormatError::invalid("codebook", "no centroids"));
        }
        if centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(FormatError::invalid("codebook", "non-finite centroid"));
        }
        for (i, a) in centroids.iter().enumerate() {
            if centroids[..i].contains(a) {
                return Err(FormatError::invalid("codebook", format!("centroid {i} duplicated")));
            }
        }
        Ok(Self { centroids })
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn centroids(&self) -> &[Vec4] {
        &self.centroids
    }

    pub fn centroid(&self, id: CodewordId) -> &Vec4 {
        &self.centroids[id.0]
    }

    /// Nearest centroid; ties go to the lowest index.
    pub fn quantize(&self, a: &ActivatedFeature) -> CodewordId {
        nearest(&self.centroids, &a.0).0
    }
}

fn nearest(centroids: &[Vec4], x: &Vec4) -> (CodewordId, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    (CodewordId(best.0), best.1)
}

/// Total squared quantization error of `samples` under `centroids`.
pub fn distortion(samples: &[ActivatedFeature], centroids: &[Vec4]) -> f64 {
    samples.iter().map(|s| nearest(centroids, &s.0).1).sum()
}

pub fn train_codebook(samples: &[ActivatedFeature], k: usize, seed: u64) -> Result<Codebook> {
    train_codebook_traced(samples, k, seed).map(|(cb, _)| cb)
}

/// Like [`train_codebook`], also returning the distortion after every Lloyd
/// iteration (entry 0 is the initialization).
pub fn train_codebook_traced(
    samples: &[ActivatedFeature],
    k: usize,
    seed: u64,
) -> Result<(Codebook, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::Codebook("no samples".into()));
    }
    if k == 0 {
        return Err(Error::Codebook("k must be >= 1".into()));
    }
    let mut distinct: Vec<Vec4> = Vec::new();
    for s in samples {
        if !distinct.contains(&s.0) {
            distinct.push(s.0);
        }
    }
    if k > distinct.len() {
        return Err(Error::Codebook(format!(
            "k = {k} exceeds the {} distinct samples",
            distinct.len()
        )));
    }

    // seeded farthest-point initialization
    let mut rng = rng::stream(seed);
    let mut centroids = vec![distinct[rng.random_range(0..distinct.len())]];
    let mut min_d: Vec<f64> = distinct.iter().map(|d| dist2(d, &centroids[0])).collect();
    while centroids.len() < k {
        let mut far = 0;
        for (i, &d) in min_d.iter().enumerate() {
            if d > min_d[far] {
                far = i;
            }
        }
        let c = distinct[far];
        centroids.push(c);
        for (m, d) in min_d.iter_mut().zip(&distinct) {
            *m = m.min(dist2(d, &c));
        }
    }

    let mut history = vec![distortion(samples, &centroids)];
    let mut assignment: Vec<usize> = samples
        .iter()
        .map(|s| nearest(&centroids, &s.0).0 .0)
        .collect();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut sums = vec![[0.0; 4]; k];
        let mut counts = vec![0usize; k];
        for (s, &a) in samples.iter().zip(&assignment) {
            counts[a] += 1;
            for (acc, v) in sums[a].iter_mut().zip(&s.0) {
                *acc += v;
            }
        }
        for ((c, sum), &n) in centroids.iter_mut().zip(&sums).zip(&counts) {
            if n > 0 {
                *c = sum.map(|v| v / n as f64);
            }
        }
        history.push(distortion(samples, &centroids));
        let next: Vec<usize> = samples
            .iter()
            .map(|s| nearest(&centroids, &s.0).0 .0)
            .collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let codebook = Codebook::new(centroids).map_err(|e| Error::Codebook(e.to_string()))?;
    Ok((codebook, history))
}

/// The trained feature head: activation plus codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkDetector {
    pub activation: Activation,
    pub codebook: Codebook,
    pub image_width: u32,
}

/// What the detector reports about one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub feature: QuadrantFeature,
    pub code: CodewordId,
    pub landmark_view: bool,
}

impl LandmarkDetector {
    /// Detection threshold; defaults to the calibrated activation threshold.
    pub fn tau(&self) -> f64 {
        self.activation.threshold
    }

    pub fn detect(&self, obs: &Observation) -> Result<Detection, ConfigError> {
        let feature = aggregate(obs, self.image_width)?;
        let code = self.codebook.quantize(&self.activation.apply(&feature));
        Ok(Detection {
            feature,
            code,
            landmark_view: has_landmark_view(&feature, self.tau()),
        })
    }

    pub fn to_json(&self) -> String {
        let file = CodebookFile {
            k: self.codebook.len(),
            centroids: self.codebook.centroids.clone(),
            gain: self.activation.gain,
            threshold: self.activation.threshold,
        };
        serde_json::to_string_pretty(&file).expect("codebook serializes")
    }

    pub fn from_json(text: &str, image_width: u32) -> Result<Self, FormatError> {
        let file: CodebookFile = serde_json::from_str(text)?;
        if file.k != file.centroids.len() {
            return Err(FormatError::invalid(
                "codebook",
                format!("k = {} but {} centroids", file.k, file.centroids.len()),
            ));
        }
        if !(file.gain.is_finite() && file.gain > 0.0) || !file.threshold.is_finite() {
            return Err(FormatError::invalid("codebook", "gain must be > 0 and threshold finite"));
        }
        Ok(Self {
            activation: Activation {
                gain: file.gain,
                threshold: file.threshold,
            },
            codebook: Codebook::new(file.centroids)?,
            image_width,
        })
    }
}

/// On-disk codebook layout.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodebookFile {
    k: usize,
    centroids: Vec<Vec4>,
    gain: f64,
    threshold: f64,
}
