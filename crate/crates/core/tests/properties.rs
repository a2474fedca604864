mod common;

use polenav::detector::{ActivatedFeature, Codebook};
use polenav::episode::BeliefState;
use polenav::harness::{parse_report, write_report, ReportRow};
use polenav::planner::{
    softmax_probabilities, ActionSet, PlannerModel, PolicyKind, QFunction, QHyper, StepConstants, Transition,
};
use polenav::replay::{dequantize_sim, quantization_bound, quantize_sim, LookupTable};
use polenav::rng::stream;
use polenav::sbow::{anchor_at, SBoWIndex};
use polenav::world::{derive_domain, generate_world, DomainShiftParams, DomainView, Pose, Topology, World};
use proptest::prelude::*;

fn small_world(seed: u64, topology: Topology, route: u32) -> World {
    let mut cfg = common::world_config(f64::from(route), 4, seed);
    cfg.topology = topology;
    cfg.vocab_size = 200;
    cfg.words_per_image = 10;
    cfg.image_width = 64;
    generate_world(&cfg).unwrap()
}

fn topology() -> impl Strategy<Value = Topology> {
    prop_oneof![Just(Topology::Loop), Just(Topology::Linear)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moves_stay_on_the_route(seed in 0u64..1000, topo in topology(), route in 10u32..80,
                               start in 0.0f64..1.0, step in 0.0f64..40.0, noise in -1.0f64..=1.0) {
        let world = small_world(seed, topo, route);
        let length = world.route_length();
        let m = world.move_with_noise(Pose::new(start * length), step, noise);
        match topo {
            Topology::Loop => prop_assert!((0.0..length).contains(&m.pose.position)),
            Topology::Linear => prop_assert!((0.0..=length).contains(&m.pose.position)),
        }
        prop_assert!(world.nearest_viewpoint(m.pose.position) < world.n_viewpoints());
        if topo == Topology::Loop {
            prop_assert_eq!(m.displacement, step + noise);
        }
    }

    #[test]
    fn belief_mass_is_conserved(scores in prop::collection::vec(0.0f64..1.0, 2..60), step in 0.0f64..20.0,
                                topo in topology(), d in 0.0f64..=1.0,
                                hits in prop::collection::vec((0u32..60, 0.0f64..=1.0), 0..8)) {
        prop_assume!(scores.iter().sum::<f64>() > 1e-6);
        let n = scores.len();
        let mut b = BeliefState::from_scores(scores).unwrap();
        b.shift(step, 1.0, topo, d);
        prop_assert!((b.scores().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let hits: Vec<(u32, f64)> = hits.into_iter().filter(|h| (h.0 as usize) < n).collect();
        b.measure(&hits, 0.01).unwrap();
        prop_assert!((b.scores().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(b.scores().iter().all(|&s| s >= 0.0));
        for v in 0..n {
            prop_assert!((1..=n).contains(&b.rank_of(v)));
        }
        prop_assert_eq!(b.rank_of(b.argmax()), 1);
    }

    #[test]
    fn quantization_error_is_bounded(s in 0.0f64..=1.0, bits in 1u8..=16) {
        let level = quantize_sim(s, bits).unwrap();
        prop_assert!(u32::from(level) < (1u32 << bits));
        prop_assert!((dequantize_sim(level, bits) - s).abs() <= quantization_bound(bits));
        prop_assert!(quantize_sim((s + 0.01).min(1.0), bits).unwrap() >= level);
    }

    #[test]
    fn anchoring_follows_the_floor_rule(words in prop::collection::vec((0u32..100, 0u32..2000), 0..40),
                                        x_o in 0u32..2000, bw in 1u32..64) {
        let got = anchor_at(words.iter().copied(), x_o, bw);
        for (w, sw) in words.iter().zip(&got) {
            let expected = ((f64::from(w.1) - f64::from(x_o)) / f64::from(bw)).floor() as i32;
            prop_assert_eq!(sw.x_bin, expected);
            prop_assert_eq!(sw.word_id, w.0);
        }
    }

    #[test]
    fn quantize_picks_a_nearest_centroid(cents in prop::collection::vec(prop::array::uniform4(0.0f64..1.0), 1..12),
                                         a in prop::array::uniform4(0.0f64..1.0)) {
        let cb = Codebook::new(cents.clone()).unwrap();
        let id = cb.quantize(&ActivatedFeature(a)).0;
        let d = |c: &[f64; 4]| c.iter().zip(&a).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let best = d(&cents[id]);
        for (i, c) in cents.iter().enumerate() {
            prop_assert!(best < d(c) || (best == d(c) && id <= i));
        }
    }

    #[test]
    fn softmax_is_a_distribution(row in prop::collection::vec(-50.0f64..50.0, 1..6), t in 0.05f64..5.0) {
        let p = softmax_probabilities(&row, t);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let argmax = (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b });
        prop_assert!(p.iter().all(|&x| x <= p[argmax]));
    }

    #[test]
    fn zero_learning_rate_leaves_q_unchanged(vals in prop::collection::vec(-5.0f64..5.0, 6), r in -5.0f64..5.0,
                                             s in 0usize..3, a in 0usize..2, next in 0usize..3, term: bool) {
        let mut q = QFunction::zeros(3, 2, QHyper { alpha: 0.0, gamma: 0.9, temperature: 1.0 });
        for (i, v) in vals.iter().enumerate() {
            q.set(i / 2, i % 2, *v);
        }
        let before = q.clone();
        q.td_update(&Transition { state: s, action: a, reward: r, next_state: next, terminal: term });
        prop_assert_eq!(q, before);
    }

    #[test]
    fn planner_json_round_trips(vals in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 80),
                                short in 0.5f64..16.0, long in 0.5f64..16.0) {
        let mut m = PlannerModel::zeros(ActionSet::default(), 2, QHyper::default(),
                                        StepConstants { c_short: short, c_long: long, c_all: 1.0 });
        for (i, v) in vals.iter().enumerate() {
            m.q.set(i / 5, i % 5, *v);
        }
        let json = m.to_json();
        let back = PlannerModel::from_json(&json).unwrap();
        prop_assert_eq!(back.to_json(), json);
        prop_assert!(back.q.table().iter().zip(m.q.table()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn tables_and_indexes_round_trip(seed in any::<u64>(), k in 1usize..40, bits in 1u8..=16) {
        let mut docs = common::random_corpus(seed, 60, 30);
        for (i, d) in docs.iter_mut().enumerate() {
            d.0 = i as u32;
        }
        let index = SBoWIndex::build(docs.clone(), 8).unwrap();
        let bytes = index.to_bytes();
        prop_assert_eq!(SBoWIndex::from_bytes(&bytes).unwrap().to_bytes(), bytes);
        let mut rng = stream(seed);
        let queries: Vec<_> = (0..10).map(|_| common::random_terms(&mut rng, 30, 40, 2)).collect();
        let table = LookupTable::build(&index, &queries, k, bits, docs.len() as u32).unwrap();
        let bytes = table.to_bytes();
        let back = LookupTable::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(&back, &table);
        for q in 0..10u32 {
            let row = back.row(q).unwrap();
            let live = index.query(&queries[q as usize], k).ranked;
            prop_assert_eq!(row.iter().filter(|r| r.is_sentinel()).count(), k - live.len());
        }
    }

    #[test]
    fn world_and_domain_json_round_trip(seed in 0u64..500, topo in topology(), p in 0.0f64..1.0, sigma in 0.0f64..5.0) {
        let world = small_world(seed, topo, 30);
        let json = world.to_json();
        let back = World::from_json(&json).unwrap();
        prop_assert_eq!(&back, &world);
        prop_assert_eq!(back.to_json(), json);
        let shift = DomainShiftParams {
            p_word_remap: p,
            p_word_drop: p / 2.0,
            p_pole_drop: p / 4.0,
            bearing_noise_sigma: sigma,
            likelihood_noise_sigma: sigma / 10.0,
            domain_seed: seed,
        };
        let domain = derive_domain(&world, &shift).unwrap();
        let json = domain.to_json();
        prop_assert_eq!(DomainView::from_json(&json, &world).unwrap().to_json(), json);
    }

    #[test]
    fn report_round_trips(rows in prop::collection::vec(
        (0usize..6, "[a-z0-9_-]{1,6}", 0usize..500, 0usize..101, 0.0f64..1e4, 1usize..300, any::<bool>()), 1..20)) {
        let rows: Vec<ReportRow> = rows
            .into_iter()
            .map(|(m, pair_id, episode, iterations, travel_m, final_rank, terminated)| ReportRow {
                method: PolicyKind::ALL[m],
                pair_id,
                episode,
                iterations,
                travel_m,
                final_rank,
                terminated,
            })
            .collect();
        let bytes = write_report(&rows);
        prop_assert_eq!(parse_report(&bytes).unwrap(), rows);
    }
}
