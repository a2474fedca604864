//! Acceptance checks shared by the integration tests and the `acceptance`
//! runner. Each returns a one-line detail on success and the first
//! violation on failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use polenav::detector::{
    aggregate, quadrant_of, quadrant_range, train_codebook, ActivatedFeature, Activation,
    LandmarkDetector,
};
use polenav::episode::{random_start, run_episode_from, should_terminate, BeliefState};
use polenav::harness::{self, pair_dir, ArtifactStore, ExperimentConfig, PolicySummary, ReportRow};
use polenav::planner::mdp::{q_learning_with_replay, DeterministicMdp};
use polenav::planner::{select_action, softmax_probabilities, PlannerModel, PolicyKind, QHyper, StepConstants};
use polenav::replay::{quantization_bound, LookupTable};
use polenav::rng::{derive_seed, stream};
use polenav::sbow::{anchor, SBoWIndex};
use polenav::world::{Observation, PlaceWord, PoleProjection};
use polenav::FormatError;
use rand::Rng;

use super::{PairArtifacts, brute_force_rank, random_corpus, random_terms, value_iteration};

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn retrieval_oracle() -> Check {
    let (mut queries, mut ties) = (0usize, 0usize);
    for c in 0..24u64 {
        let seed = derive_seed(0x5EED_0001, &[c]);
        let docs = random_corpus(seed, 200, 50);
        let index = SBoWIndex::build(docs.clone(), 16).map_err(|e| e.to_string())?;
        let mut rng = stream(derive_seed(seed, &[1]));
        let mut qs: Vec<Vec<_>> = docs.iter().take(20).map(|(_, t)| t.clone()).collect();
        qs.extend((0..20).map(|_| random_terms(&mut rng, 50, 45, 2)));
        for q in &qs {
            let expected = brute_force_rank(&docs, q);
            ties += expected.windows(2).filter(|w| w[0].1 == w[1].1).count();
            for k in [docs.len(), 5, 1] {
                let got = index.query(q, k).ranked;
                let want = &expected[..expected.len().min(k)];
                ensure!(
                    got.len() == want.len()
                        && got.iter().zip(want).all(|(a, b)| a.0 == b.0 && a.1.to_bits() == b.1.to_bits()),
                    "corpus {c}, k={k}: index {got:?} != exhaustive {want:?}"
                );
            }
            queries += 1;
        }
    }
    ensure!(ties > 0, "no tied scores exercised");
    Ok(format!("24 corpora, {queries} queries, {ties} tied pairs, bitwise equal"))
}

pub fn table_fidelity() -> Check {
    let mut compared = 0usize;
    for c in 0..8u64 {
        let seed = derive_seed(0x5EED_0002, &[c]);
        let mut docs = random_corpus(seed, 200, 50);
        for (i, d) in docs.iter_mut().enumerate() {
            d.0 = i as u32;
        }
        let n = docs.len();
        let index = SBoWIndex::build(docs.clone(), 16).map_err(|e| e.to_string())?;
        let mut rng = stream(derive_seed(seed, &[1]));
        let queries: Vec<Vec<_>> = (0..40).map(|_| random_terms(&mut rng, 50, 45, 2)).collect();
        for bits in [4u8, 8, 16] {
            let table = LookupTable::build(&index, &queries, n, bits, n as u32).map_err(|e| e.to_string())?;
            let bound = quantization_bound(bits);
            for (qi, q) in queries.iter().enumerate() {
                let live = index.query(q, n).ranked;
                let replay = table.lookup(qi as u32).map_err(|e| e.to_string())?;
                ensure!(replay.len() == live.len(), "B={bits}: row length {} != {}", replay.len(), live.len());
                for (r, l) in replay.iter().zip(&live) {
                    ensure!(r.0 == l.0, "B={bits}, corpus {c}: rank order differs at place {}", l.0);
                    ensure!(
                        (r.1 - l.1).abs() <= bound,
                        "B={bits}: |{} - {}| exceeds {bound}",
                        r.1,
                        l.1
                    );
                    compared += 1;
                }
            }
        }
    }
    Ok(format!("{compared} similarities within 1/(2(2^B-1)) for B=4,8,16; rank order identical"))
}

pub fn q_learning_oracle() -> Check {
    let mut worst: f64 = 0.0;
    for m in 0..5u64 {
        let seed = derive_seed(0x5EED_0003, &[m]);
        let mut rng = stream(seed);
        let ns = rng.random_range(2..=10);
        let na = rng.random_range(2..=4);
        let mdp = DeterministicMdp::random(ns, na, seed);
        let exact = value_iteration(&mdp, 0.9);
        let hyper = QHyper {
            alpha: 0.5,
            gamma: 0.9,
            // values reach ~1/(1-gamma); a warm behaviour policy keeps every action sampled
            temperature: 10.0,
        };
        let q = q_learning_with_replay(&mdp, hyper, 100_000, derive_seed(seed, &[1]));
        let err = (0..ns)
            .flat_map(|s| (0..na).map(move |a| (s, a)))
            .map(|(s, a)| (q.get(s, a) - exact[s][a]).abs())
            .fold(0.0, f64::max);
        ensure!(err <= 1e-3, "MDP {m} ({ns}x{na}): max-norm error {err:e}");
        worst = worst.max(err);
    }
    Ok(format!("5 MDPs, 1e5 updates, worst max-norm error {worst:.1e}"))
}

pub fn softmax_rule() -> Check {
    const DRAWS: usize = 100_000;
    let rows: [&[f64]; 3] = [&[0.0, 0.5, 1.0, -1.0, 2.0], &[0.3, 0.3, 0.3], &[-2.0, 1.5, 0.0, 0.7]];
    let mut worst: f64 = 0.0;
    for (ri, row) in rows.iter().enumerate() {
        let z: f64 = row.iter().map(|q| q.exp()).sum();
        let expected: Vec<f64> = row.iter().map(|q| q.exp() / z).collect();
        for shift in [0.0, 37.5, -1000.0] {
            let shifted: Vec<f64> = row.iter().map(|q| q + shift).collect();
            let probs = softmax_probabilities(&shifted, 1.0);
            for (p, e) in probs.iter().zip(&expected) {
                ensure!((p - e).abs() < 1e-12, "row {ri} shift {shift}: p={p} vs {e}");
            }
            let mut rng = stream(derive_seed(0x5EED_0004, &[ri as u64]));
            let mut hist = vec![0usize; row.len()];
            for _ in 0..DRAWS {
                hist[select_action(&shifted, 1.0, &mut rng)] += 1;
            }
            for (a, (&h, e)) in hist.iter().zip(&expected).enumerate() {
                let f = h as f64 / DRAWS as f64;
                ensure!((f - e).abs() <= 0.01, "row {ri} shift {shift} action {a}: {f} vs {e}");
                worst = worst.max((f - e).abs());
            }
        }
    }
    Ok(format!("3 rows x 3 shifts x 1e5 draws, worst deviation {worst:.4}"))
}

pub fn quadrant_and_anchoring() -> Check {
    let mut rng = stream(0x5EED_0005);
    for w in (4..=1024u32).step_by(4) {
        let ranges: Vec<(u32, u32)> = (0..4).map(|i| quadrant_range(w, i)).collect();
        ensure!(ranges[0].0 == 0 && ranges[3].1 == w - 1, "W={w}: ranges do not cover [0, W-1]");
        for i in 0..4 {
            ensure!(ranges[i].0 <= ranges[i].1, "W={w}: quadrant {i} empty");
            if i > 0 {
                ensure!(ranges[i].0 == ranges[i - 1].1 + 1, "W={w}: gap or overlap at quadrant {i}");
            }
        }
        for x in 0..w {
            let owners: Vec<usize> = (0..4).filter(|&i| ranges[i].0 <= x && x <= ranges[i].1).collect();
            ensure!(owners == [quadrant_of(w, x)], "W={w}, x={x}: owners {owners:?}");
        }
        let obs = Observation {
            words: Vec::new(),
            pole_projections: (0..rng.random_range(0..6u32))
                .map(|pole| PoleProjection {
                    pole,
                    pixel_x: rng.random_range(0..w),
                    likelihood: rng.random(),
                })
                .collect(),
        };
        let q = aggregate(&obs, w).map_err(|e| e.to_string())?;
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            let want = obs
                .pole_projections
                .iter()
                .filter(|p| lo <= p.pixel_x && p.pixel_x <= hi)
                .map(|p| p.likelihood)
                .fold(0.0, f64::max);
            ensure!(q.0[i] == want, "W={w}: quadrant {i} aggregated {} != {want}", q.0[i]);
        }
    }
    for case in 0..10_000 {
        let width = 4096u32;
        let bin = rng.random_range(1..=32u32);
        let words: Vec<PlaceWord> = (0..rng.random_range(0..30))
            .map(|_| PlaceWord {
                word_id: rng.random_range(0..500),
                x: rng.random_range(0..width / 2),
            })
            .collect();
        let poles: Vec<PoleProjection> = (0..rng.random_range(1..4u32))
            .map(|pole| PoleProjection {
                pole,
                pixel_x: rng.random_range(0..width / 2),
                likelihood: f64::from(rng.random_range(1..5u32)) / 4.0,
            })
            .collect();
        let t = rng.random_range(0..width / 2);
        let moved = Observation {
            words: words.iter().map(|w| PlaceWord { x: w.x + t, ..*w }).collect(),
            pole_projections: poles.iter().map(|p| PoleProjection { pixel_x: p.pixel_x + t, ..*p }).collect(),
        };
        let base = Observation {
            words,
            pole_projections: poles,
        };
        let a = anchor(&base, bin).map_err(|e| e.to_string())?;
        let b = anchor(&moved, bin).map_err(|e| e.to_string())?;
        ensure!(a == b, "case {case}: translation by {t} px changed the spatial words");
    }
    Ok("W=4..1024 partition exact; 10^4 anchoring translations identical".into())
}

/// Run the shipped default experiment into `out`.
pub fn default_pipeline(out: &Path) -> Result<(ExperimentConfig, Vec<ReportRow>), String> {
    let cfg = super::default_config(out);
    let store = ArtifactStore::new(out);
    let rows = harness::run_pipeline(&cfg, &store).map_err(|e| e.to_string())?;
    Ok((cfg, rows))
}

fn summary_of(summary: &[PolicySummary], kind: PolicyKind) -> Result<&PolicySummary, String> {
    summary
        .iter()
        .find(|s| s.method == kind)
        .ok_or_else(|| format!("no rows for {kind}"))
}

/// Learned beats each baseline on one of (iterations, rank) without losing
/// more than 10% on the other, and Oracle is at least as good on both.
pub fn learned_dominance(rows: &[ReportRow]) -> Check {
    let summary = harness::summarize(rows);
    let learned = summary_of(&summary, PolicyKind::Learned)?;
    let (li, lr) = (learned.mean_iterations, learned.mean_rank);
    for kind in [
        PolicyKind::Heuristics,
        PolicyKind::ConstantWithView,
        PolicyKind::ConstantWithoutView,
        PolicyKind::ConstantAll,
    ] {
        let b = summary_of(&summary, kind)?;
        let (bi, br) = (b.mean_iterations, b.mean_rank);
        let wins = (li < bi && lr <= 1.1 * br) || (lr < br && li <= 1.1 * bi);
        ensure!(
            wins,
            "learned ({li:.3} it, rank {lr:.3}) does not dominate {kind} ({bi:.3} it, rank {br:.3})"
        );
    }
    let o = summary_of(&summary, PolicyKind::Oracle)?;
    ensure!(
        o.mean_iterations <= li && o.mean_rank <= lr && (o.mean_iterations < li || o.mean_rank < lr),
        "oracle ({:.3} it, rank {:.3}) does not dominate learned ({li:.3} it, rank {lr:.3})",
        o.mean_iterations,
        o.mean_rank
    );
    let h = summary_of(&summary, PolicyKind::Heuristics)?;
    Ok(format!(
        "learned {li:.2} it / rank {lr:.3}; heuristics {:.2} / {:.3}; oracle {:.2} / {:.3}",
        h.mean_iterations, h.mean_rank, o.mean_iterations, o.mean_rank
    ))
}

/// Replay every Heuristics evaluation episode of a finished run with a trace
/// and check each commanded step against the detector state it was planned on.
pub fn heuristics_trace(cfg: &ExperimentConfig, rows: &[ReportRow]) -> Check {
    let mut steps = 0usize;
    for (pi, p) in cfg.pairings.iter().enumerate() {
        let parts = PairArtifacts::load(&cfg.output_dir, &p.id, harness::DOMAIN_TEST_FILE, harness::TABLE_TEST_FILE)?;
        let (world, constants) = (&parts.world, parts.constants);
        let env = parts.env(cfg);
        for row in rows.iter().filter(|r| r.method == PolicyKind::Heuristics && r.pair_id == p.id) {
            let mut rng = stream(derive_seed(cfg.seed, &[4, pi as u64, row.episode as u64]));
            let start = random_start(world, &mut rng);
            let mut trace = Vec::new();
            let result = run_episode_from(&env, PolicyKind::Heuristics, None, start, rng, Some(&mut trace))
                .map_err(|e| e.to_string())?;
            ensure!(
                result.iterations == row.iterations && result.final_rank == row.final_rank,
                "pair {} episode {}: replay diverged from the report",
                p.id,
                row.episode
            );
            for t in &trace {
                let want = if t.view_at_plan { constants.c_short } else { constants.c_long };
                ensure!(
                    t.action == want,
                    "pair {} episode {} iteration {}: view={} but step {} (C_short={}, C_long={})",
                    p.id,
                    row.episode,
                    t.iteration,
                    t.view_at_plan,
                    t.action,
                    constants.c_short,
                    constants.c_long
                );
                steps += 1;
            }
        }
    }
    ensure!(steps > 0, "no heuristics steps evaluated");
    Ok(format!("{steps} traced steps, every one C_long iff no landmark view"))
}

pub fn termination_rule() -> Check {
    let mut cases = 0usize;
    let mut fired = 0usize;
    // scores in hundredths; top1 - top2 spans the 0.10 boundary from both sides
    for n in [2u32, 3, 5, 10] {
        for a in 0..=100u32 {
            for b in 0..=a.min(100 - a) {
                let rest = 100 - a - b;
                if (n == 2 && rest != 0) || (n > 2 && rest > b * (n - 2)) {
                    continue;
                }
                let mut scores = vec![f64::from(rest) / 100.0 / f64::from(n.max(3) - 2); n as usize];
                scores[0] = f64::from(a) / 100.0;
                scores[1] = f64::from(b) / 100.0;
                let belief = BeliefState::from_scores(scores).map_err(|e| e.to_string())?;
                let got = should_terminate(&belief, 0.1).map_err(|e| e.to_string())?;
                let want = a - b > 10;
                ensure!(got == want, "n={n}, top1={a}/100, top2={b}/100: fired={got}, expected {want}");
                cases += 1;
                fired += usize::from(got);
            }
        }
    }
    let boundary = BeliefState::from_scores(vec![0.55, 0.45]).map_err(|e| e.to_string())?;
    ensure!(!should_terminate(&boundary, 0.1).map_err(|e| e.to_string())?, "0.55/0.45 fired at margin 0.1");
    Ok(format!("{cases} grid beliefs ({fired} firing), boundary 0.10 does not fire"))
}

fn named<T>(r: Result<T, FormatError>, ok: impl Fn(&FormatError) -> bool, what: &str) -> Result<(), String> {
    match r {
        Err(e) if ok(&e) => Ok(()),
        Err(e) => Err(format!("{what}: wrong error `{e}`")),
        Ok(_) => Err(format!("{what}: corrupted input accepted")),
    }
}

fn never_panics(what: &str, bytes: &[u8], decode: &dyn Fn(&[u8])) -> Result<usize, String> {
    let mut rng = stream(derive_seed(0x5EED_0009, &[bytes.len() as u64]));
    let mut n = 0;
    let mut variants: Vec<Vec<u8>> = (0..bytes.len().min(64)).map(|i| bytes[..i].to_vec()).collect();
    for _ in 0..300 {
        let mut v = bytes.to_vec();
        for _ in 0..rng.random_range(1..4) {
            let i = rng.random_range(0..v.len());
            v[i] = rng.random();
        }
        variants.push(v);
    }
    for v in &variants {
        catch_unwind(AssertUnwindSafe(|| decode(v))).map_err(|_| format!("{what}: decoder panicked"))?;
        n += 1;
    }
    Ok(n)
}

pub fn persistence() -> Check {
    let mut docs = random_corpus(0x5EED_0010, 120, 40);
    for (i, d) in docs.iter_mut().enumerate() {
        d.0 = i as u32;
    }
    let index = SBoWIndex::build(docs.clone(), 16).map_err(|e| e.to_string())?;
    let queries: Vec<Vec<_>> = docs.iter().map(|d| d.1.clone()).collect();
    let mut fuzzed = 0;

    let idx_bytes = index.to_bytes();
    let back = SBoWIndex::from_bytes(&idx_bytes).map_err(|e| e.to_string())?;
    ensure!(back.to_bytes() == idx_bytes && back == index, "index round trip not byte-identical");

    for bits in [4u8, 8, 12, 16] {
        let table = LookupTable::build(&index, &queries, 25, bits, docs.len() as u32).map_err(|e| e.to_string())?;
        let bytes = table.to_bytes();
        let back = LookupTable::from_bytes(&bytes).map_err(|e| e.to_string())?;
        ensure!(back.to_bytes() == bytes && back == table, "table B={bits} round trip not byte-identical");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        named(LookupTable::from_bytes(&bad), |e| matches!(e, FormatError::BadMagic { .. }), "table magic")?;
        let mut bad = bytes.clone();
        bad[4] = 9;
        named(
            LookupTable::from_bytes(&bad),
            |e| matches!(e, FormatError::UnsupportedVersion { found: 9, .. }),
            "table version",
        )?;
        for cut in 0..19 {
            named(LookupTable::from_bytes(&bytes[..cut]), |e| matches!(e, FormatError::Truncated { .. }), "table header cut")?;
        }
        let mut bad = bytes.clone();
        bad[10] = 0;
        named(LookupTable::from_bytes(&bad), |e| matches!(e, FormatError::Invalid { .. }), "table zero bits")?;
        fuzzed += never_panics("table", &bytes[..bytes.len().min(4096)], &|b| {
            let _ = LookupTable::from_bytes(b);
        })?;
    }

    let mut bad = idx_bytes.clone();
    bad[3] = b'J';
    named(SBoWIndex::from_bytes(&bad), |e| matches!(e, FormatError::BadMagic { .. }), "index magic")?;
    let mut bad = idx_bytes.clone();
    bad[5] = 1;
    named(SBoWIndex::from_bytes(&bad), |e| matches!(e, FormatError::UnsupportedVersion { .. }), "index version")?;
    for cut in 0..26 {
        named(SBoWIndex::from_bytes(&idx_bytes[..cut]), |e| matches!(e, FormatError::Truncated { .. }), "index header cut")?;
    }
    fuzzed += never_panics("index", &idx_bytes, &|b| {
        let _ = SBoWIndex::from_bytes(b);
    })?;

    let mut rng = stream(0x5EED_0011);
    let samples: Vec<ActivatedFeature> = (0..200)
        .map(|_| ActivatedFeature([rng.random(), rng.random(), rng.random(), rng.random()]))
        .collect();
    let detector = LandmarkDetector {
        activation: Activation {
            gain: 8.0,
            threshold: 0.1 + 0.2,
        },
        codebook: train_codebook(&samples, 16, 3).map_err(|e| e.to_string())?,
        image_width: 640,
    };
    let json = detector.to_json();
    let back = LandmarkDetector::from_json(&json, 640).map_err(|e| e.to_string())?;
    ensure!(back.to_json() == json, "codebook round trip not byte-identical:\n{json}\n{}", back.to_json());
    ensure!(back == detector, "codebook decoded to a different detector");
    named(
        LandmarkDetector::from_json(&json.replacen("\"k\": 16", "\"k\": 15", 1), 640),
        |e| matches!(e, FormatError::Invalid { .. }),
        "codebook k",
    )?;
    named(LandmarkDetector::from_json(&json[..json.len() / 2], 640), |e| matches!(e, FormatError::Json(_)), "codebook cut")?;
    fuzzed += never_panics("codebook", json.as_bytes(), &|b| {
        let _ = LandmarkDetector::from_json(&String::from_utf8_lossy(b), 640);
    })?;

    let constants = StepConstants {
        c_short: 1.0,
        c_long: 8.0,
        c_all: 2.0,
    };
    let mut model = PlannerModel::zeros(
        polenav::planner::ActionSet::default(),
        16,
        QHyper::default(),
        constants,
    );
    for s in 0..model.q.n_states() {
        for a in 0..model.q.n_actions() {
            let v = match (s + a) % 4 {
                0 => -0.0,
                1 => rng.random_range(-6.0..6.0),
                2 => 1e-300 * rng.random::<f64>(),
                _ => 0.1 + 0.2,
            };
            model.q.set(s, a, v);
        }
    }
    let json = model.to_json();
    let back = PlannerModel::from_json(&json).map_err(|e| e.to_string())?;
    ensure!(back.to_json() == json, "Q file round trip not byte-identical");
    ensure!(
        back.q.table().iter().zip(model.q.table()).all(|(a, b)| a.to_bits() == b.to_bits()),
        "Q values changed bits"
    );
    named(
        PlannerModel::from_json(&json.replacen("\"history_bins\": 8", "\"history_bins\": 7", 1)),
        |e| matches!(e, FormatError::Invalid { .. }),
        "Q history_bins",
    )?;
    named(PlannerModel::from_json(&json[..json.len() / 3]), |e| matches!(e, FormatError::Json(_)), "Q cut")?;
    fuzzed += never_panics("planner", &json.as_bytes()[..json.len().min(2048)], &|b| {
        let _ = PlannerModel::from_json(&String::from_utf8_lossy(b));
    })?;
    Ok(format!("index, tables (B=4,8,12,16), codebook, Q byte-identical; {fuzzed} corrupted inputs rejected without panic"))
}

/// Train on a small experiment whose test-domain artifacts have been deleted
/// and check the access log.
pub fn cross_domain_discipline(out: &Path) -> Check {
    let cfg = super::small_config(out);
    let setup = ArtifactStore::new(out);
    harness::cmd_gen(&cfg, &setup).map_err(|e| e.to_string())?;
    harness::cmd_build(&cfg, &setup).map_err(|e| e.to_string())?;
    for p in &cfg.pairings {
        for f in harness::TEST_DOMAIN_FILES {
            std::fs::remove_file(out.join(pair_dir(&p.id)).join(f)).map_err(|e| e.to_string())?;
        }
    }
    let store = ArtifactStore::new(out);
    harness::cmd_train(&cfg, &store).map_err(|e| e.to_string())?;
    let log = store.accesses();
    ensure!(!log.is_empty(), "access log is empty");
    if let Some(a) = log.iter().find(|a| harness::is_test_domain_artifact(&a.path)) {
        return Err(format!("train touched test-domain artifact {}", a.path.display()));
    }
    Ok(format!("{} accesses, none to test-domain artifacts", log.len()))
}
