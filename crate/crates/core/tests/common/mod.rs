#![allow(dead_code)]

pub mod criteria;

use std::collections::BTreeMap;
use std::path::Path;

use polenav::harness::ExperimentConfig;
use polenav::planner::mdp::DeterministicMdp;
use polenav::rng::{derive_seed, stream, Stream};
use polenav::sbow::SpatialWord;
use rand::seq::SliceRandom;
use rand::Rng;

pub type Corpus = Vec<(u32, Vec<SpatialWord>)>;

pub fn random_terms(rng: &mut Stream, max_len: usize, vocab: u32, bins: i32) -> Vec<SpatialWord> {
    let n = rng.random_range(0..=max_len);
    (0..n)
        .map(|_| SpatialWord {
            word_id: rng.random_range(0..vocab),
            x_bin: rng.random_range(-bins..=bins),
        })
        .collect()
}

/// Seeded corpus with a small vocabulary; about one document in eight is a
/// shuffled copy of an earlier one so that exact score ties occur.
pub fn random_corpus(seed: u64, max_docs: usize, max_words: usize) -> Corpus {
    let mut rng = stream(seed);
    let n_docs = rng.random_range(1..=max_docs);
    let vocab = rng.random_range(3..40);
    let mut ids: Vec<u32> = (0..(3 * n_docs) as u32).collect();
    ids.shuffle(&mut rng);
    let mut docs: Corpus = Vec::with_capacity(n_docs);
    for &id in ids.iter().take(n_docs) {
        let terms = if !docs.is_empty() && rng.random::<f64>() < 0.125 {
            let mut copy = docs[rng.random_range(0..docs.len())].1.clone();
            copy.shuffle(&mut rng);
            copy
        } else {
            random_terms(&mut rng, max_words, vocab, 2)
        };
        docs.push((id, terms));
    }
    docs
}

fn counts(terms: &[SpatialWord]) -> BTreeMap<SpatialWord, u32> {
    let mut m = BTreeMap::new();
    for &t in terms {
        *m.entry(t).or_insert(0) += 1;
    }
    m
}

/// Exhaustive TF-IDF cosine scoring of every document, ranked by similarity
/// descending then place id. Places with zero similarity are omitted.
pub fn brute_force_rank(docs: &[(u32, Vec<SpatialWord>)], query: &[SpatialWord]) -> Vec<(u32, f64)> {
    let n = docs.len() as f64;
    let doc_counts: Vec<BTreeMap<SpatialWord, u32>> = docs.iter().map(|(_, t)| counts(t)).collect();
    let mut df: BTreeMap<SpatialWord, u32> = BTreeMap::new();
    for c in &doc_counts {
        for &w in c.keys() {
            *df.entry(w).or_insert(0) += 1;
        }
    }
    let idf = |w: &SpatialWord| ((n + 1.0) / (f64::from(df.get(w).copied().unwrap_or(0)) + 1.0)).ln() + 1.0;

    let q = counts(query);
    let mut q_sq = 0.0;
    for (w, &tf) in &q {
        let x = f64::from(tf) * idf(w);
        q_sq += x * x;
    }
    let mut out = Vec::new();
    for ((id, _), c) in docs.iter().zip(&doc_counts) {
        let mut d_sq = 0.0;
        for (w, &tf) in c {
            let x = f64::from(tf) * idf(w);
            d_sq += x * x;
        }
        let mut dot = 0.0;
        for (w, &qtf) in &q {
            if let Some(&tf) = c.get(w) {
                dot += (f64::from(qtf) * idf(w)) * (f64::from(tf) * idf(w));
            }
        }
        if dot > 0.0 && q_sq > 0.0 && d_sq > 0.0 {
            out.push((*id, (dot / (q_sq * d_sq).sqrt()).min(1.0)));
        }
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    out
}

/// Optimal action values by value iteration, `[state][action]`.
pub fn value_iteration(mdp: &DeterministicMdp, gamma: f64) -> Vec<Vec<f64>> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut q = vec![vec![0.0; na]; ns];
    loop {
        let v: Vec<f64> = q.iter().map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        let mut delta: f64 = 0.0;
        for s in 0..ns {
            for a in 0..na {
                let (r, next, terminal) = mdp.outcomes[s][a];
                let target = if terminal { r } else { r + gamma * v[next] };
                delta = delta.max((target - q[s][a]).abs());
                q[s][a] = target;
            }
        }
        if delta < 1e-13 {
            return q;
        }
    }
}

pub fn default_config_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/default.json")
}

pub fn default_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&default_config_path()).expect("default config loads");
    cfg.output_dir = out.to_path_buf();
    cfg
}

pub fn small_config_json(out: &Path) -> serde_json::Value {
    let shift = |seed: u64| {
        serde_json::json!({
            "p_word_remap": 0.2,
            "p_word_drop": 0.1,
            "p_pole_drop": 0.0,
            "bearing_noise_sigma": 2.0,
            "likelihood_noise_sigma": 0.05,
            "domain_seed": seed
        })
    };
    serde_json::json!({
        "world": {
            "route_length": 60.0,
            "viewpoint_spacing": 1.0,
            "n_poles": 6,
            "pole_visibility_range": 4.0,
            "vocab_size": 400,
            "words_per_image": 20,
            "image_width": 64,
            "seed": 11
        },
        "pairings": [
            {"id": "a", "train_shift": shift(1), "test_shift": shift(2)},
            {"id": "b", "train_shift": shift(3), "test_shift": shift(4)}
        ],
        "K": 60,
        "B": 8,
        "episodes_train": 40,
        "episodes_eval": 4,
        "constant_trials": 3,
        "output_dir": out,
        "seed": 5
    })
}

/// A fast two-pairing experiment on a 60 m loop.
pub fn small_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig::from_json(&small_config_json(out).to_string()).expect("small config is valid")
}

pub fn seeds(base: u64, n: u64) -> impl Iterator<Item = u64> {
    (0..n).map(move |i| derive_seed(base, &[i]))
}

/// Everything an episode needs, owned, for one world and one domain.
pub struct Fixture {
    pub world: polenav::world::World,
    pub domain: polenav::world::DomainView,
    pub detector: polenav::detector::LandmarkDetector,
    pub index: polenav::sbow::SBoWIndex,
    pub actions: polenav::planner::ActionSet,
    pub constants: polenav::planner::StepConstants,
    pub config: polenav::episode::LoopConfig,
}

pub fn world_config(route_length: f64, n_poles: usize, seed: u64) -> polenav::world::WorldConfig {
    polenav::world::WorldConfig {
        route_length,
        viewpoint_spacing: 1.0,
        n_poles,
        pole_visibility_range: 4.0,
        vocab_size: 2000,
        words_per_image: 40,
        image_width: 640,
        seed,
        topology: polenav::world::Topology::Loop,
        motion_noise: 1.0,
    }
}

impl Fixture {
    /// Map and observations from the same domain.
    pub fn same_domain(world: polenav::world::World, shift: polenav::world::DomainShiftParams) -> Self {
        use polenav::harness::{build_detector, build_map_index};
        let domain = polenav::world::derive_domain(&world, &shift).unwrap();
        let detector = build_detector(&world, &domain, 16, 1).unwrap();
        let index = build_map_index(&world, &domain, 16).unwrap();
        let actions = polenav::planner::ActionSet::default();
        let constants = polenav::planner::learn_constants(&world, &domain, &detector, actions.steps(), 5, 2).unwrap();
        Self {
            world,
            domain,
            detector,
            index,
            actions,
            constants,
            config: polenav::episode::LoopConfig::default(),
        }
    }

    pub fn env(&self) -> polenav::episode::EpisodeEnv<'_> {
        polenav::episode::EpisodeEnv {
            world: &self.world,
            domain: &self.domain,
            detector: &self.detector,
            matcher: polenav::episode::Matcher::Live {
                index: &self.index,
                k: 1000,
            },
            actions: &self.actions,
            constants: self.constants,
            rewards: polenav::planner::RewardConfig::default(),
            config: self.config,
        }
    }
}

/// Artifacts of one pairing loaded back from an output directory.
pub struct PairArtifacts {
    pub world: polenav::world::World,
    pub domain: polenav::world::DomainView,
    pub detector: polenav::detector::LandmarkDetector,
    pub table: polenav::replay::LookupTable,
    pub constants: polenav::planner::StepConstants,
}

impl PairArtifacts {
    pub fn load(root: &Path, pair: &str, domain_file: &str, table_file: &str) -> Result<Self, String> {
        use polenav::harness::{pair_dir, CODEBOOK_FILE, CONSTANTS_FILE, WORLD_FILE};
        let read = |p: &Path| std::fs::read_to_string(root.join(p)).map_err(|e| format!("{}: {e}", p.display()));
        let dir = pair_dir(pair);
        let world = polenav::world::World::from_json(&read(Path::new(WORLD_FILE))?).map_err(|e| e.to_string())?;
        let domain =
            polenav::world::DomainView::from_json(&read(&dir.join(domain_file))?, &world).map_err(|e| e.to_string())?;
        let detector = polenav::detector::LandmarkDetector::from_json(&read(&dir.join(CODEBOOK_FILE))?, world.image_width())
            .map_err(|e| e.to_string())?;
        let bytes = std::fs::read(root.join(dir.join(table_file))).map_err(|e| e.to_string())?;
        let table = polenav::replay::LookupTable::from_bytes(&bytes).map_err(|e| e.to_string())?;
        let constants =
            polenav::planner::StepConstants::from_json(&read(&dir.join(CONSTANTS_FILE))?).map_err(|e| e.to_string())?;
        Ok(Self {
            world,
            domain,
            detector,
            table,
            constants,
        })
    }

    pub fn env<'a>(&'a self, cfg: &'a ExperimentConfig) -> polenav::episode::EpisodeEnv<'a> {
        polenav::episode::EpisodeEnv {
            world: &self.world,
            domain: &self.domain,
            detector: &self.detector,
            matcher: polenav::episode::Matcher::Table(&self.table),
            actions: &cfg.actions,
            constants: self.constants,
            rewards: cfg.rewards,
            config: cfg.loop_config(),
        }
    }
}
