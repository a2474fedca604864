//! Synthetic 1D route worlds with pole-like landmarks.
//!
//! A world is a route sampled at evenly spaced viewpoints. Each viewpoint
//! carries a list of visual words with horizontal pixel coordinates, and the
//! route is dotted with poles of varying detection strength. A [`DomainView`]
//! is one appearance regime of the same world: words are dropped or remapped,
//! poles occasionally vanish, and pole bearings and likelihoods are jittered.
//!
//! Projection model: a point at signed route offset `d` from the camera lands
//! at pixel `W/2 + slope * d` with `slope = (W/2) / pole_visibility_range`.
//! Words and poles share the same slope, so the pixel offset between a word
//! and a pole depends only on their world positions.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, FormatError, Result};
use crate::rng::{self, Stream};

/// Viewpoints on either side whose place-specific words a view also sees.
pub const WORD_WINDOW_HALF_WIDTH: usize = 2;

/// Pole strengths are drawn uniformly from `[MIN_POLE_STRENGTH, 1]`.
pub const MIN_POLE_STRENGTH: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Positions wrap modulo the route length; the viewpoint at the route
    /// length coincides with the origin and is not duplicated.
    #[default]
    Loop,
    /// Positions are clamped to `[0, route_length]`.
    Linear,
}

fn default_motion_noise() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    /// meters
    pub route_length: f64,
    /// meters
    pub viewpoint_spacing: f64,
    pub n_poles: usize,
    /// meters
    pub pole_visibility_range: f64,
    pub vocab_size: u32,
    pub words_per_image: usize,
    /// pixels; must be divisible by 4
    pub image_width: u32,
    pub seed: u64,
    #[serde(default)]
    pub topology: Topology,
    /// Half-width of the uniform odometry noise, meters.
    #[serde(default = "default_motion_noise")]
    pub motion_noise: f64,
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite_pos = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::new(field, format!("must be > 0, got {v}")))
            }
        };
        finite_pos("route_length", self.route_length)?;
        finite_pos("viewpoint_spacing", self.viewpoint_spacing)?;
        finite_pos("pole_visibility_range", self.pole_visibility_range)?;
        let ratio = self.route_length / self.viewpoint_spacing;
        if ratio < 10.0 {
            return Err(ConfigError::new(
                "route_length",
                format!("route_length / viewpoint_spacing must be >= 10, got {ratio}"),
            ));
        }
        if self.topology == Topology::Loop && (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(ConfigError::new(
                "viewpoint_spacing",
                "loop routes need route_length to be a whole multiple of viewpoint_spacing",
            ));
        }
        if self.image_width == 0 || self.image_width % 4 != 0 {
            return Err(ConfigError::new(
                "image_width",
                format!("must be a positive multiple of 4, got {}", self.image_width),
            ));
        }
        if self.words_per_image < 1 {
            return Err(ConfigError::new("words_per_image", "must be >= 1"));
        }
        if (self.vocab_size as usize) < self.words_per_image {
            return Err(ConfigError::new(
                "vocab_size",
                format!(
                    "must be >= words_per_image ({}), got {}",
                    self.words_per_image, self.vocab_size
                ),
            ));
        }
        if !(self.motion_noise.is_finite() && self.motion_noise >= 0.0) {
            return Err(ConfigError::new("motion_noise", "must be >= 0"));
        }
        Ok(())
    }

    pub fn n_viewpoints(&self) -> usize {
        let cells = (self.route_length / self.viewpoint_spacing + 1e-9).floor() as usize;
        match self.topology {
            Topology::Loop => cells,
            Topology::Linear => cells + 1,
        }
    }

    /// Pixels per meter of route offset.
    pub fn projection_slope(&self) -> f64 {
        f64::from(self.image_width) / 2.0 / self.pole_visibility_range
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub position: f64,
    pub strength: f64,
}

/// A visual word and its horizontal pixel coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlaceWord {
    pub word_id: u32,
    pub x: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoleProjection {
    /// Index into [`World::poles`].
    pub pole: u32,
    pub pixel_x: u32,
    pub likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub viewpoints: Vec<f64>,
    pub poles: Vec<Pole>,
    pub place_words: Vec<Vec<PlaceWord>>,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Pose {
    pub position: f64,
}

impl Pose {
    pub fn new(position: f64) -> Self {
        Self { position }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub words: Vec<PlaceWord>,
    pub pole_projections: Vec<PoleProjection>,
}

impl Observation {
    pub fn has_poles(&self) -> bool {
        !self.pole_projections.is_empty()
    }
}

pub fn generate_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let mut rng = rng::stream(config.seed);
    let n = config.n_viewpoints();
    let spacing = config.viewpoint_spacing;
    let viewpoints: Vec<f64> = (0..n).map(|i| i as f64 * spacing).collect();

    let pole_max = match config.topology {
        Topology::Loop => config.route_length - f64::EPSILON * config.route_length,
        Topology::Linear => config.route_length,
    };
    let mut poles: Vec<Pole> = (0..config.n_poles)
        .map(|_| Pole {
            position: rng.random_range(0.0..=pole_max),
            strength: rng.random_range(MIN_POLE_STRENGTH..=1.0),
        })
        .collect();
    poles.sort_by(|a, b| a.position.total_cmp(&b.position));

    // Place-specific features: each viewpoint cell owns a handful of words
    // anchored at fixed route positions inside the cell.
    let window = 2 * WORD_WINDOW_HALF_WIDTH + 1;
    let per_place = config.words_per_image.div_ceil(window);
    let features: Vec<Vec<(u32, f64)>> = viewpoints
        .iter()
        .map(|&center| {
            (0..per_place)
                .map(|_| {
                    let word = rng.random_range(0..config.vocab_size);
                    let offset = rng.random_range(-0.5..0.5) * spacing;
                    (word, center + offset)
                })
                .collect()
        })
        .collect();

    let world_stub = World {
        config: config.clone(),
        viewpoints,
        poles,
        place_words: Vec::new(),
    };
    let place_words = (0..n)
        .map(|v| world_stub.view_words(v, &features))
        .collect();
    Ok(World {
        place_words,
        ..world_stub
    })
}

impl World {
    pub fn n_viewpoints(&self) -> usize {
        self.viewpoints.len()
    }

    pub fn spacing(&self) -> f64 {
        self.config.viewpoint_spacing
    }

    pub fn route_length(&self) -> f64 {
        self.config.route_length
    }

    pub fn image_width(&self) -> u32 {
        self.config.image_width
    }

    pub fn topology(&self) -> Topology {
        self.config.topology
    }

    /// Map a raw position onto the route according to its topology.
    pub fn normalize(&self, position: f64) -> f64 {
        let length = self.route_length();
        match self.topology() {
            Topology::Loop => {
                let p = position.rem_euclid(length);
                // rem_euclid may round up to exactly `length`
                if p >= length {
                    0.0
                } else {
                    p
                }
            }
            Topology::Linear => position.clamp(0.0, length),
        }
    }

    /// Signed route offset from `from` to `to` (shortest way round on a loop).
    pub fn offset(&self, from: f64, to: f64) -> f64 {
        let d = to - from;
        match self.topology() {
            Topology::Loop => {
                let length = self.route_length();
                let d = d.rem_euclid(length);
                if d > length / 2.0 {
                    d - length
                } else {
                    d
                }
            }
            Topology::Linear => d,
        }
    }

    /// Nearest viewpoint to a position; exact ties go to the lower index.
    pub fn nearest_viewpoint(&self, position: f64) -> usize {
        let n = self.n_viewpoints();
        let p = self.normalize(position);
        let t = p / self.spacing();
        let lower = (t.floor() as usize).min(n - 1);
        let frac = t - lower as f64;
        let upper = match self.topology() {
            Topology::Loop => (lower + 1) % n,
            Topology::Linear => (lower + 1).min(n - 1),
        };
        if frac < 0.5 {
            lower
        } else if frac > 0.5 {
            upper
        } else {
            lower.min(upper)
        }
    }

    fn project(&self, offset: f64) -> u32 {
        let w = f64::from(self.image_width());
        let px = (w / 2.0 + self.config.projection_slope() * offset).round();
        px.clamp(0.0, w - 1.0) as u32
    }

    fn view_words(&self, v: usize, features: &[Vec<(u32, f64)>]) -> Vec<PlaceWord> {
        let n = self.n_viewpoints() as isize;
        let h = WORD_WINDOW_HALF_WIDTH as isize;
        let center = self.viewpoints[v];
        let mut pool: Vec<(f64, usize, usize)> = Vec::new();
        for delta in -h..=h {
            let cell = v as isize + delta;
            let cell = match self.topology() {
                Topology::Loop => cell.rem_euclid(n),
                Topology::Linear if (0..n).contains(&cell) => cell,
                Topology::Linear => continue,
            } as usize;
            if pool.iter().any(|&(_, c, _)| c == cell) {
                continue;
            }
            for (i, &(_, pos)) in features[cell].iter().enumerate() {
                pool.push((self.offset(center, pos).abs(), cell, i));
            }
        }
        pool.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        pool.truncate(self.config.words_per_image);
        pool.sort_by_key(|&(_, cell, i)| (cell, i));
        pool.into_iter()
            .map(|(_, cell, i)| {
                let (word_id, pos) = features[cell][i];
                PlaceWord {
                    word_id,
                    x: self.project(self.offset(center, pos)),
                }
            })
            .collect()
    }

    /// Ground-truth pole projections seen from `position` (no domain effects).
    pub fn true_poles_in_range(&self, position: f64) -> impl Iterator<Item = usize> + '_ {
        let range = self.config.pole_visibility_range;
        self.poles
            .iter()
            .enumerate()
            .filter(move |(_, p)| self.offset(position, p.position).abs() <= range)
            .map(|(i, _)| i)
    }

    pub fn has_true_pole_in_range(&self, position: f64) -> bool {
        self.true_poles_in_range(position).next().is_some()
    }

    /// Apply a commanded forward step plus odometry noise drawn from `rng`.
    pub fn move_pose(&self, pose: Pose, commanded_step: f64, rng: &mut Stream) -> Motion {
        let noise = self.config.motion_noise;
        let dd = if noise > 0.0 {
            rng.random_range(-1.0..=1.0) * noise
        } else {
            0.0
        };
        self.move_with_noise(pose, commanded_step, dd)
    }

    /// Deterministic part of [`World::move_pose`] for a given noise sample.
    pub fn move_with_noise(&self, pose: Pose, commanded_step: f64, dd: f64) -> Motion {
        let raw = pose.position + commanded_step + dd;
        let position = self.normalize(raw);
        let displacement = match self.topology() {
            Topology::Loop => commanded_step + dd,
            Topology::Linear => position - pose.position,
        };
        Motion {
            pose: Pose::new(position),
            displacement,
            noise: dd,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("world serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let world: World = serde_json::from_str(text)?;
        world.check()?;
        Ok(world)
    }

    fn check(&self) -> Result<(), FormatError> {
        self.config
            .validate()
            .map_err(|e| FormatError::invalid("world", e.to_string()))?;
        let n = self.config.n_viewpoints();
        if self.viewpoints.len() != n || self.place_words.len() != n {
            return Err(FormatError::invalid(
                "world",
                format!("expected {n} viewpoints and word lists"),
            ));
        }
        let spacing = self.spacing();
        for (i, &v) in self.viewpoints.iter().enumerate() {
            if (v - i as f64 * spacing).abs() > 1e-9 * (1.0 + v.abs()) {
                return Err(FormatError::invalid("world", format!("viewpoint {i} misplaced")));
            }
        }
        let length = self.route_length();
        for p in &self.poles {
            if !(0.0..=length).contains(&p.position) || !(p.strength > 0.0 && p.strength <= 1.0) {
                return Err(FormatError::invalid("world", "pole out of range"));
            }
        }
        let w = self.image_width();
        let vocab = self.config.vocab_size;
        if self
            .place_words
            .iter()
            .flatten()
            .any(|pw| pw.x >= w || pw.word_id >= vocab)
        {
            return Err(FormatError::invalid("world", "word outside image or vocabulary"));
        }
        Ok(())
    }
}

/// Result of one noisy move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motion {
    pub pose: Pose,
    /// Realized displacement along the route, meters.
    pub displacement: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainShiftParams {
    pub p_word_remap: f64,
    pub p_word_drop: f64,
    pub p_pole_drop: f64,
    /// pixels
    pub bearing_noise_sigma: f64,
    pub likelihood_noise_sigma: f64,
    pub domain_seed: u64,
}

impl DomainShiftParams {
    /// No shift at all: the derived view equals ground truth.
    pub fn identity(domain_seed: u64) -> Self {
        Self {
            p_word_remap: 0.0,
            p_word_drop: 0.0,
            p_pole_drop: 0.0,
            bearing_noise_sigma: 0.0,
            likelihood_noise_sigma: 0.0,
            domain_seed,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, p) in [
            ("p_word_remap", self.p_word_remap),
            ("p_word_drop", self.p_word_drop),
            ("p_pole_drop", self.p_pole_drop),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::new(field, format!("probability must be in [0,1], got {p}")));
            }
        }
        for (field, s) in [
            ("bearing_noise_sigma", self.bearing_noise_sigma),
            ("likelihood_noise_sigma", self.likelihood_noise_sigma),
        ] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(ConfigError::new(field, format!("must be >= 0, got {s}")));
            }
        }
        Ok(())
    }
}

/// One appearance regime of a [`World`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainView {
    pub params: DomainShiftParams,
    pub words: Vec<Vec<PlaceWord>>,
    /// Per viewpoint, every retained pole within visibility range of the
    /// viewpoint (plus half a spacing, so off-viewpoint poses can still see
    /// it); rendering filters by the actual pose.
    pub poles: Vec<Vec<PoleProjection>>,
    /// Number of words whose id was remapped (instrumentation).
    pub remapped_words: u64,
}

pub fn derive_domain(world: &World, params: &DomainShiftParams) -> Result<DomainView> {
    params.validate()?;
    let mut rng = rng::stream(params.domain_seed);
    let vocab = world.config.vocab_size;
    let mut remapped_words = 0u64;

    let words = world
        .place_words
        .iter()
        .map(|list| {
            let mut out = Vec::with_capacity(list.len());
            for pw in list {
                let drop: f64 = rng.random();
                let remap: f64 = rng.random();
                let other = if vocab > 1 {
                    rng.random_range(0..vocab - 1)
                } else {
                    0
                };
                if drop < params.p_word_drop {
                    continue;
                }
                if remap < params.p_word_remap && vocab > 1 {
                    remapped_words += 1;
                    let word_id = if other >= pw.word_id { other + 1 } else { other };
                    out.push(PlaceWord { word_id, ..*pw });
                } else {
                    out.push(*pw);
                }
            }
            out
        })
        .collect();

    let kept: Vec<bool> = world
        .poles
        .iter()
        .map(|_| rng.random::<f64>() >= params.p_pole_drop)
        .collect();
    let bearing = Normal::new(0.0, params.bearing_noise_sigma)
        .map_err(|e| ConfigError::new("bearing_noise_sigma", e.to_string()))?;
    let lik = Normal::new(0.0, params.likelihood_noise_sigma)
        .map_err(|e| ConfigError::new("likelihood_noise_sigma", e.to_string()))?;
    let w = f64::from(world.image_width());
    let slope = world.config.projection_slope();
    let reach = world.config.pole_visibility_range + world.spacing() / 2.0;
    let poles = world
        .viewpoints
        .iter()
        .map(|&v| {
            let mut out = Vec::new();
            for (i, pole) in world.poles.iter().enumerate() {
                let d = world.offset(v, pole.position);
                if d.abs() > reach {
                    continue;
                }
                let db = bearing.sample(&mut rng);
                let dl = lik.sample(&mut rng);
                if !kept[i] {
                    continue;
                }
                let px = (w / 2.0 + slope * d + db).round().clamp(0.0, w - 1.0) as u32;
                out.push(PoleProjection {
                    pole: i as u32,
                    pixel_x: px,
                    likelihood: (pole.strength + dl).clamp(0.0, 1.0),
                });
            }
            out
        })
        .collect();

    Ok(DomainView {
        params: params.clone(),
        words,
        poles,
        remapped_words,
    })
}

impl DomainView {
    /// What the robot sees at `pose`: the nearest viewpoint's content, with
    /// poles restricted to those within visibility range of the pose itself.
    pub fn render(&self, world: &World, pose: Pose) -> Observation {
        let v = world.nearest_viewpoint(pose.position);
        let range = world.config.pole_visibility_range;
        Observation {
            words: self.words[v].clone(),
            pole_projections: self.poles[v]
                .iter()
                .filter(|p| {
                    world
                        .offset(pose.position, world.poles[p.pole as usize].position)
                        .abs()
                        <= range
                })
                .copied()
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("domain serializes")
    }

    pub fn from_json(text: &str, world: &World) -> Result<Self, FormatError> {
        let d: DomainView = serde_json::from_str(text)?;
        d.params
            .validate()
            .map_err(|e| FormatError::invalid("domain", e.to_string()))?;
        let n = world.n_viewpoints();
        if d.words.len() != n || d.poles.len() != n {
            return Err(FormatError::invalid("domain", "viewpoint count does not match world"));
        }
        let w = world.image_width();
        let bad_pole = d.poles.iter().flatten().any(|p| {
            p.pixel_x >= w
                || (p.pole as usize) >= world.poles.len()
                || !(0.0..=1.0).contains(&p.likelihood)
        });
        if bad_pole || d.words.iter().flatten().any(|pw| pw.x >= w) {
            return Err(FormatError::invalid("domain", "projection out of range"));
        }
        Ok(d)
    }
}
