use std::path::Path;

use proptest::prelude::*;

use splitplace::decider::{
    aggregate_reward, reward_of, BanditState, Context, Decider, EmaEstimator, WorkloadOutcome,
};
use splitplace::engine::{instantiate, Engine, Variant};
use splitplace::model::{
    validate_profile, ApplicationProfile, ClusterConfig, Fragment, Host, ProfileSet, SplitDecision,
    Workload,
};
use splitplace::schedulers::{
    place_first_fit, place_least_loaded, place_random, ClusterView, Placement,
};
use splitplace::trace::{read_trace, write_trace};

fn decision() -> impl Strategy<Value = SplitDecision> {
    prop_oneof![Just(SplitDecision::Layer), Just(SplitDecision::Semantic)]
}

fn context() -> impl Strategy<Value = Context> {
    prop_oneof![Just(Context::Tight), Just(Context::Loose)]
}

fn outcome() -> impl Strategy<Value = WorkloadOutcome> {
    (0.0..50.0f64, 0.01..50.0f64, 0.0..=1.0f64, decision()).prop_map(|(rt, sla, acc, d)| {
        WorkloadOutcome {
            response_time_s: rt,
            sla_s: sla,
            accuracy: acc,
            decision: d,
            app: "a".into(),
        }
    })
}

fn host() -> impl Strategy<Value = Host> {
    (
        1.0..1e5f64,
        1.0..1e5f64,
        0.0..10.0f64,
        0.0..10.0f64,
        0.01..1e3f64,
        0.0..1.0f64,
        0.0..1.0f64,
    )
        .prop_map(|(mips, ram, idle, extra, bw, base, std)| Host {
            id: 0,
            capacity_mips: mips,
            ram_mb: ram,
            power_idle_w: idle,
            power_max_w: idle + extra,
            bandwidth_mbps: bw,
            latency_base_s: base,
            latency_jitter_std_s: std,
        })
}

fn fragment(out: bool) -> impl Strategy<Value = Fragment> {
    (1.0..1e4f64, 1.0..4096.0f64, 0.0..100.0f64)
        .prop_map(move |(mi, ram, o)| Fragment::new(mi, ram, if out { o.max(0.01) } else { 0.0 }))
}

fn profile() -> impl Strategy<Value = ApplicationProfile> {
    (
        "[a-z][a-z0-9]{0,11}",
        prop::collection::vec(fragment(true), 1..6),
        prop::collection::vec(prop::collection::vec(fragment(true), 1..3), 2..5),
        fragment(false),
        0.5..1.0f64,
        0.0..0.5f64,
        1.0..1e4f64,
    )
        .prop_map(
            |(name, chain, branches, agg, acc_l, gap, mips)| ApplicationProfile {
                name,
                layer_chain: chain,
                semantic_branches: branches,
                aggregation: agg,
                accuracy_layer: acc_l,
                accuracy_semantic: acc_l * (1.0 - gap),
                reference_mips: mips,
            },
        )
}

proptest! {
    #[test]
    fn reward_is_bounded(o in outcome()) {
        let r = reward_of(&o);
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn aggregate_is_the_mean(os in prop::collection::vec(outcome(), 1..100)) {
        let total: f64 = os.iter().map(reward_of).sum();
        prop_assert_eq!(aggregate_reward(&os).unwrap(), total / os.len() as f64);
    }

    #[test]
    fn ema_stays_within_observed_range(
        prior in 0.01..100.0f64,
        alpha in 0.01..=1.0f64,
        obs in prop::collection::vec(0.01..100.0f64, 0..50),
    ) {
        let mut ema = EmaEstimator::new(alpha).unwrap();
        ema.set_prior("a", prior);
        let (mut lo, mut hi) = (prior, prior);
        for x in obs {
            let e = ema.update("a", x).unwrap();
            lo = lo.min(x);
            hi = hi.max(x);
            prop_assert!(e > 0.0);
            prop_assert!(lo - 1e-12 <= e && e <= hi + 1e-12, "{} not in [{}, {}]", e, lo, hi);
        }
    }

    #[test]
    fn contexts_are_isolated(
        c in 0.0..3.0f64,
        updates in prop::collection::vec((context(), decision(), 0.0..=1.0f64), 1..60),
    ) {
        let mut b = BanditState::new(c).unwrap();
        for (ctx, arm, r) in updates {
            let other = if ctx == Context::Tight { Context::Loose } else { Context::Tight };
            let before = (
                b.total_pulls(other),
                b.arm(other, SplitDecision::Layer),
                b.arm(other, SplitDecision::Semantic),
            );
            b.update_arm(ctx, arm, r).unwrap();
            let after = (
                b.total_pulls(other),
                b.arm(other, SplitDecision::Layer),
                b.arm(other, SplitDecision::Semantic),
            );
            prop_assert_eq!(before, after);
            let s = b.arm(ctx, arm);
            prop_assert!((0.0..=1.0).contains(&s.mean));
            prop_assert_eq!(
                b.total_pulls(ctx),
                b.arm(ctx, SplitDecision::Layer).pulls + b.arm(ctx, SplitDecision::Semantic).pulls
            );
        }
    }

    #[test]
    fn decisions_are_deterministic(
        history in prop::collection::vec((0.0..5.0f64, 0.1..5.0f64, 0.0..=1.0f64), 0..40),
        sla in 0.1..10.0f64,
    ) {
        let profiles = ProfileSet::defaults();
        let mut d = Decider::new(Default::default(), &profiles).unwrap();
        for (i, (rt, s, acc)) in history.into_iter().enumerate() {
            let w = Workload { id: i as u64, arrival_s: 0.0, app: "resnet50v2".into(), sla_s: s };
            let dec = d.decide(&w).unwrap();
            let o = WorkloadOutcome {
                response_time_s: rt.max(1e-3),
                sla_s: s,
                accuracy: acc,
                decision: dec,
                app: w.app.clone(),
            };
            d.feedback(w.id, &o).unwrap();
        }
        let w = Workload { id: 10_000, arrival_s: 0.0, app: "resnet50v2".into(), sla_s: sla };
        let mut twin = d.clone();
        prop_assert_eq!(d.decide(&w).unwrap(), twin.decide(&w).unwrap());
    }

    #[test]
    fn cluster_round_trips(
        hosts in prop::collection::vec(host(), 1..12),
        interval in 0.01..10.0f64,
        seed in any::<u64>(),
    ) {
        let mut cfg = ClusterConfig { hosts, interval_s: interval, seed };
        for (i, h) in cfg.hosts.iter_mut().enumerate() {
            h.id = i;
        }
        let back = ClusterConfig::from_json(&cfg.to_json(), Path::new("c.json")).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn profiles_round_trip(p in profile()) {
        prop_assert!(validate_profile(&p).is_ok());
        let set = ProfileSet::new(vec![p]).unwrap();
        let back = ProfileSet::from_json(&set.to_json(), Path::new("p.json")).unwrap();
        prop_assert_eq!(back, set);
    }

    #[test]
    fn traces_round_trip(
        ws in prop::collection::vec(
            (0.0..1e6f64, "[a-z]{1,8}", 1e-6..1e3f64),
            0..50,
        ),
    ) {
        let trace: Vec<Workload> = ws
            .into_iter()
            .enumerate()
            .map(|(i, (t, app, sla))| Workload { id: i as u64, arrival_s: t, app, sla_s: sla })
            .collect();
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let back = read_trace(&buf[..], Path::new("t.jsonl")).unwrap();
        prop_assert_eq!(back, trace);
    }

    #[test]
    fn placements_are_feasible_or_queued(
        p in profile(),
        d in decision(),
        free in prop::collection::vec(0.0..6000.0f64, 1..8),
        seed in any::<u64>(),
    ) {
        use rand::SeedableRng;
        let g = instantiate(d, &p);
        let load = vec![0; free.len()];
        let view = ClusterView::from_free_ram(&free, &load);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for placement in [
            place_first_fit(&g, &view),
            place_least_loaded(&g, &view),
            place_random(&g, &view, &mut rng),
        ] {
            match placement {
                Placement::Queued => {}
                Placement::Assigned(hs) => {
                    prop_assert_eq!(hs.len(), g.len());
                    let mut used = vec![0.0; free.len()];
                    for (n, &h) in g.nodes.iter().zip(&hs) {
                        used[h] += n.fragment.ram_mb;
                    }
                    for (u, f) in used.iter().zip(&free) {
                        prop_assert!(*u <= f + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn energy_never_decreases(
        hosts in prop::collection::vec(host(), 1..4),
        work in prop::collection::vec((1.0..5e4f64, any::<prop::sample::Index>()), 0..10),
        steps in prop::collection::vec(0.05..2.0f64, 1..30),
    ) {
        let hosts: Vec<Host> = hosts
            .into_iter()
            .enumerate()
            .map(|(i, h)| Host { id: i, ram_mb: 1e9, ..h })
            .collect();
        let mut e = Engine::new(hosts.clone(), 0);
        for (i, (mi, at)) in work.into_iter().enumerate() {
            let g = splitplace::engine::FragmentGraph {
                nodes: vec![splitplace::engine::GraphNode {
                    fragment: Fragment::new(mi, 1.0, 0.0),
                    preds: vec![],
                    branch: None,
                }],
            };
            let w = Workload { id: i as u64, arrival_s: 0.0, app: "a".into(), sla_s: 1.0 };
            e.dispatch(w, Variant::Layer, 1.0, &g, &[at.index(hosts.len())]).unwrap();
        }
        let mut last = e.energy().joules.clone();
        for dt in steps {
            e.step(dt);
            let now = e.energy().joules.clone();
            for ((a, b), h) in last.iter().zip(&now).zip(&hosts) {
                prop_assert!(b >= a);
                // Bounded by idle and peak draw over the step.
                prop_assert!(b - a >= h.power_idle_w * dt - 1e-9);
                prop_assert!(b - a <= h.power_max_w * dt + 1e-9);
            }
            last = now;
        }
    }
}
