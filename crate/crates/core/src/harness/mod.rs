//! Experiment pipeline: `gen -> build -> train -> eval -> plot`.
//!
//! Each stage reads its predecessors' artifacts from an [`ArtifactStore`]
//! rooted at the configured output directory and fails with
//! [`Error::MissingArtifact`] when one is absent. Training only ever opens
//! train-domain artifacts; the store's access log makes that checkable.

mod config;
mod report;
mod store;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::detector::{
    aggregate, calibrate_activation, train_codebook, ActivatedFeature, LandmarkDetector,
    QuadrantFeature,
};
use crate::episode::{run_episode, EpisodeEnv, Matcher};
use crate::error::{ConfigError, Error, FormatError, Result};
use crate::planner::{self, learn_constants, PlannerModel, PolicyKind, QHyper, StepConstants};
use crate::replay::LookupTable;
use crate::rng::derive_seed;
use crate::sbow::{self, SBoWIndex, SpatialWord};
use crate::world::{
    derive_domain, generate_world, DomainShiftParams, DomainView, Observation, Pose, World,
};

pub use config::{parse_policies, ExperimentConfig, Pairing};
pub use report::{
    format_summary, parse_report, render_plot, summarize, write_report, PolicySummary, ReportRow,
    REPORT_COLUMNS,
};
pub use store::*;

const TAG_CODEBOOK: u64 = 1;
const TAG_CONSTANTS: u64 = 2;
const TAG_TRAIN: u64 = 3;
const TAG_EVAL: u64 = 4;
const TAG_TRAIN_QUERY: u64 = 5;

pub const THREADS_ENV: &str = "POLENAV_THREADS";

fn view_at(world: &World, domain: &DomainView, viewpoint: usize) -> Observation {
    domain.render(world, Pose::new(world.viewpoints[viewpoint]))
}

fn load_world(store: &ArtifactStore) -> Result<World> {
    let text = store.read_string(Path::new(WORLD_FILE), "gen")?;
    Ok(World::from_json(&text)?)
}

fn load_domain(store: &ArtifactStore, world: &World, pair: &str, file: &str) -> Result<DomainView> {
    let text = store.read_string(&pair_dir(pair).join(file), "gen")?;
    Ok(DomainView::from_json(&text, world)?)
}

fn load_detector(store: &ArtifactStore, world: &World, pair: &str) -> Result<LandmarkDetector> {
    let text = store.read_string(&pair_dir(pair).join(CODEBOOK_FILE), "build")?;
    Ok(LandmarkDetector::from_json(&text, world.image_width())?)
}

fn load_table(store: &ArtifactStore, world: &World, pair: &str, file: &str) -> Result<LookupTable> {
    let bytes = store.read(&pair_dir(pair).join(file), "build")?;
    let table = LookupTable::from_bytes(&bytes)?;
    if table.n_queries() as usize != world.n_viewpoints() || table.n_map() as usize != world.n_viewpoints() {
        return Err(FormatError::invalid(
            "lookup table",
            format!("{file} does not match the world's {} viewpoints", world.n_viewpoints()),
        )
        .into());
    }
    Ok(table)
}

fn load_constants(store: &ArtifactStore, pair: &str) -> Result<StepConstants> {
    let text = store.read_string(&pair_dir(pair).join(CONSTANTS_FILE), "build")?;
    Ok(StepConstants::from_json(&text)?)
}

/// Training conditions with an independent draw of the per-view variation.
pub fn train_query_shift(train: &DomainShiftParams) -> DomainShiftParams {
    DomainShiftParams {
        domain_seed: derive_seed(train.domain_seed, &[TAG_TRAIN_QUERY]),
        ..train.clone()
    }
}

/// Generate the world and every pairing's train/test domain views.
pub fn cmd_gen(cfg: &ExperimentConfig, store: &ArtifactStore) -> Result<()> {
    let world = generate_world(&cfg.world)?;
    store.write(Path::new(WORLD_FILE), world.to_json().as_bytes())?;
    for p in &cfg.pairings {
        let dir = pair_dir(&p.id);
        let train = derive_domain(&world, &p.train_shift)?;
        let train_query = derive_domain(&world, &train_query_shift(&p.train_shift))?;
        let test = derive_domain(&world, &p.test_shift)?;
        store.write(&dir.join(DOMAIN_TRAIN_FILE), train.to_json().as_bytes())?;
        store.write(&dir.join(DOMAIN_TRAIN_QUERY_FILE), train_query.to_json().as_bytes())?;
        store.write(&dir.join(DOMAIN_TEST_FILE), test.to_json().as_bytes())?;
    }
    Ok(())
}

/// Calibrate the activation on viewpoint views labelled by true pole
/// visibility, then train the codebook on the activated features.
pub fn build_detector(
    world: &World,
    domain: &DomainView,
    codebook_size: usize,
    seed: u64,
) -> Result<LandmarkDetector> {
    let width = world.image_width();
    let features: Vec<QuadrantFeature> = (0..world.n_viewpoints())
        .map(|v| aggregate(&view_at(world, domain, v), width))
        .collect::<Result<_, ConfigError>>()?;
    let labels: Vec<bool> = world
        .viewpoints
        .iter()
        .map(|&p| world.has_true_pole_in_range(p))
        .collect();
    let activation = calibrate_activation(&features, &labels)?;
    let samples: Vec<ActivatedFeature> = features.iter().map(|f| activation.apply(f)).collect();
    let distinct = samples
        .iter()
        .map(|s| s.0.map(f64::to_bits))
        .collect::<HashSet<_>>()
        .len();
    let k = codebook_size.min(distinct);
    if k < codebook_size {
        log::warn!("only {distinct} distinct landmark features; codebook reduced to {k} words");
    }
    let codebook = train_codebook(&samples, k, seed)?;
    Ok(LandmarkDetector {
        activation,
        codebook,
        image_width: width,
    })
}

/// Spatial words of every viewpoint's view; empty where no pole is visible.
pub fn viewpoint_queries(world: &World, domain: &DomainView, bin_width: u32) -> Result<Vec<Vec<SpatialWord>>> {
    (0..world.n_viewpoints())
        .map(|v| {
            let obs = view_at(world, domain, v);
            if obs.has_poles() {
                sbow::anchor(&obs, bin_width)
            } else {
                Ok(Vec::new())
            }
        })
        .collect()
}

/// Map index over the anchorable viewpoint views of `domain`.
pub fn build_map_index(world: &World, domain: &DomainView, bin_width: u32) -> Result<SBoWIndex> {
    let docs = viewpoint_queries(world, domain, bin_width)?
        .into_iter()
        .enumerate()
        .filter(|(v, _)| view_at(world, domain, *v).has_poles())
        .map(|(v, terms)| (v as u32, terms))
        .collect();
    SBoWIndex::build(docs, bin_width)
}

/// Detector, map index, both lookup tables and the baseline step constants.
pub fn cmd_build(cfg: &ExperimentConfig, store: &ArtifactStore) -> Result<()> {
    let world = load_world(store)?;
    let n_map = world.n_viewpoints() as u32;
    for (pi, p) in cfg.pairings.iter().enumerate() {
        let dir = pair_dir(&p.id);
        let train = load_domain(store, &world, &p.id, DOMAIN_TRAIN_FILE)?;
        let train_query = load_domain(store, &world, &p.id, DOMAIN_TRAIN_QUERY_FILE)?;
        let test = load_domain(store, &world, &p.id, DOMAIN_TEST_FILE)?;

        let detector = build_detector(
            &world,
            &train,
            cfg.codebook_size,
            derive_seed(cfg.seed, &[TAG_CODEBOOK, pi as u64]),
        )?;
        let index = build_map_index(&world, &train, cfg.bin_width)?;
        let train_queries = viewpoint_queries(&world, &train_query, cfg.bin_width)?;
        let test_queries = viewpoint_queries(&world, &test, cfg.bin_width)?;
        let table_train = LookupTable::build(&index, &train_queries, cfg.k, cfg.bits, n_map)?;
        let table_test = LookupTable::build(&index, &test_queries, cfg.k, cfg.bits, n_map)?;
        let constants = learn_constants(
            &world,
            &train,
            &detector,
            cfg.actions.steps(),
            cfg.constant_trials,
            derive_seed(cfg.seed, &[TAG_CONSTANTS, pi as u64]),
        )?;
        log::info!(
            "pair {}: {} map places, codebook {} words, constants {:?}",
            p.id,
            index.n_images(),
            detector.codebook.len(),
            constants
        );

        store.write(&dir.join(CODEBOOK_FILE), detector.to_json().as_bytes())?;
        store.write(&dir.join(INDEX_FILE), &index.to_bytes())?;
        store.write(&dir.join(TABLE_TRAIN_FILE), &table_train.to_bytes())?;
        store.write(&dir.join(TABLE_TEST_FILE), &table_test.to_bytes())?;
        store.write(&dir.join(CONSTANTS_FILE), constants.to_json().as_bytes())?;
    }
    Ok(())
}

/// Per-pairing training returns.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCurve {
    pub pair_id: String,
    pub returns: Vec<f64>,
}

fn curve_csv(returns: &[f64]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["episode", "return"]).expect("in-memory csv");
    for (e, r) in returns.iter().enumerate() {
        w.write_record([e.to_string(), r.to_string()]).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// Q-learning in the training conditions: episodes observe the training
/// query rendering and replay its lookup table against the map.
pub fn cmd_train(cfg: &ExperimentConfig, store: &ArtifactStore) -> Result<Vec<TrainingCurve>> {
    if cfg.episodes_train == 0 {
        log::warn!("episodes_train = 0: writing an all-zero Q table");
    }
    let world = load_world(store)?;
    let mut curves = Vec::with_capacity(cfg.pairings.len());
    for (pi, p) in cfg.pairings.iter().enumerate() {
        let dir = pair_dir(&p.id);
        let domain = load_domain(store, &world, &p.id, DOMAIN_TRAIN_QUERY_FILE)?;
        let detector = load_detector(store, &world, &p.id)?;
        let table = load_table(store, &world, &p.id, TABLE_TRAIN_FILE)?;
        let constants = load_constants(store, &p.id)?;
        let env = EpisodeEnv {
            world: &world,
            domain: &domain,
            detector: &detector,
            matcher: Matcher::Table(&table),
            actions: &cfg.actions,
            constants,
            rewards: cfg.rewards,
            config: cfg.loop_config(),
        };
        let k_codebook = detector.codebook.len();
        let outcome = planner::train(
            &env,
            k_codebook,
            cfg.episodes_train,
            &cfg.train,
            derive_seed(cfg.seed, &[TAG_TRAIN, pi as u64]),
        )?;
        let model = PlannerModel {
            actions: cfg.actions.clone(),
            k_codebook,
            q: outcome.q,
            constants,
        };
        store.write(&dir.join(PLANNER_FILE), model.to_json().as_bytes())?;
        store.write(&dir.join(CURVE_FILE), &curve_csv(&outcome.returns))?;
        curves.push(TrainingCurve {
            pair_id: p.id.clone(),
            returns: outcome.returns,
        });
    }
    Ok(curves)
}

/// Worker count from `POLENAV_THREADS`; `None` leaves rayon's default.
pub fn eval_threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(ConfigError::new(THREADS_ENV, format!("expected a positive integer, got `{v}`")).into()),
        },
    }
}

fn load_planner(store: &ArtifactStore, cfg: &ExperimentConfig, pair: &str, k_codebook: usize) -> Result<PlannerModel> {
    let text = store.read_string(&pair_dir(pair).join(PLANNER_FILE), "train")?;
    let model = PlannerModel::from_json(&text)?;
    if model.actions != cfg.actions || model.k_codebook != k_codebook {
        return Err(Error::Policy(format!(
            "planner for pair {pair} was trained with a different action set or codebook"
        )));
    }
    Ok(model)
}

/// Run every configured policy on the test domain of every pairing.
///
/// Episode `e` of a pairing starts from the same pose and sees the same motion
/// noise under every policy. Rows are sorted by (method, pairing, episode) and
/// written to the report file.
pub fn cmd_eval(cfg: &ExperimentConfig, store: &ArtifactStore) -> Result<Vec<ReportRow>> {
    let world = load_world(store)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = eval_threads()? {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;

    let mut keyed: Vec<((PolicyKind, usize, usize), ReportRow)> = Vec::new();
    for (pi, p) in cfg.pairings.iter().enumerate() {
        let domain = load_domain(store, &world, &p.id, DOMAIN_TEST_FILE)?;
        let detector = load_detector(store, &world, &p.id)?;
        let table = load_table(store, &world, &p.id, TABLE_TEST_FILE)?;
        let constants = load_constants(store, &p.id)?;
        let model = if cfg.policies.contains(&PolicyKind::Learned) {
            Some(load_planner(store, cfg, &p.id, detector.codebook.len())?)
        } else {
            None
        };
        let env = EpisodeEnv {
            world: &world,
            domain: &domain,
            detector: &detector,
            matcher: Matcher::Table(&table),
            actions: &cfg.actions,
            constants,
            rewards: cfg.rewards,
            config: cfg.loop_config(),
        };
        let q = model.as_ref().map(|m| &m.q);
        let jobs: Vec<(PolicyKind, usize)> = cfg
            .policies
            .iter()
            .flat_map(|&kind| (0..cfg.episodes_eval).map(move |e| (kind, e)))
            .collect();
        let rows = pool.install(|| {
            jobs.par_iter()
                .map(|&(kind, e)| {
                    let seed = derive_seed(cfg.seed, &[TAG_EVAL, pi as u64, e as u64]);
                    let r = run_episode(&env, kind, q, seed)?;
                    Ok((
                        (kind, pi, e),
                        ReportRow {
                            method: kind,
                            pair_id: p.id.clone(),
                            episode: e,
                            iterations: r.iterations,
                            travel_m: r.travel_distance,
                            final_rank: r.final_rank,
                            terminated: r.terminated,
                        },
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        keyed.extend(rows);
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    let rows: Vec<ReportRow> = keyed.into_iter().map(|(_, r)| r).collect();
    store.write(Path::new(REPORT_FILE), &write_report(&rows))?;
    Ok(rows)
}

/// Render the cost-versus-rank figure for a report file. Nothing is written
/// unless the report parses and has rows.
pub fn cmd_plot(report_path: &Path, out_path: &Path) -> Result<Vec<PolicySummary>> {
    let bytes = std::fs::read(report_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact {
                path: report_path.to_path_buf(),
                stage: "eval",
            }
        } else {
            Error::io(report_path, e)
        }
    })?;
    let rows = parse_report(&bytes)?;
    let summary = summarize(&rows);
    std::fs::write(out_path, render_plot(&summary)).map_err(|e| Error::io(out_path, e))?;
    Ok(summary)
}

/// Default report figure location next to a report file.
pub fn plot_path_for(report_path: &Path) -> PathBuf {
    report_path.with_extension("svg")
}

/// `gen`, `build`, `train` (when the learned policy is evaluated) and `eval`.
pub fn run_pipeline(cfg: &ExperimentConfig, store: &ArtifactStore) -> Result<Vec<ReportRow>> {
    cmd_gen(cfg, store)?;
    cmd_build(cfg, store)?;
    if cfg.policies.contains(&PolicyKind::Learned) {
        cmd_train(cfg, store)?;
    }
    cmd_eval(cfg, store)
}

/// Untrained model with the config's hyperparameters, for tooling and tests.
pub fn zero_model(cfg: &ExperimentConfig, k_codebook: usize, constants: StepConstants) -> PlannerModel {
    PlannerModel::zeros(
        cfg.actions.clone(),
        k_codebook,
        QHyper {
            alpha: cfg.train.alpha,
            gamma: cfg.train.gamma,
            temperature: cfg.train.temperature_end,
        },
        constants,
    )
}
