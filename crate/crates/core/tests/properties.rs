mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use dupcode::blockstore::{BlockStore, StoreError};
use dupcode::codes::{
    decode_stripe, encode_stripe, execute_plan, is_recoverable, plan_repair, CodeError, CodeScheme,
    ErasurePattern, MemorySource, Site, StripeLayout,
};
use dupcode::mapsched::{
    build_cluster, generate_workload, run_scheduler, schedule_maxmatch, SchedulerKind,
};

fn any_scheme() -> impl Strategy<Value = CodeScheme> {
    prop::sample::select(common::ALL_SCHEMES.to_vec()).prop_map(common::scheme)
}

/// A scheme with a random subset of its nodes failed.
fn scheme_and_pattern() -> impl Strategy<Value = (CodeScheme, Vec<usize>)> {
    any_scheme().prop_flat_map(|s| {
        let n = s.code_length();
        (
            Just(s),
            prop::collection::btree_set(0..n, 0..=n.min(5))
                .prop_map(|set| set.into_iter().collect()),
        )
    })
}

#[test]
fn layouts_match_reference_structure() {
    for name in common::ALL_SCHEMES {
        let s = common::scheme(name);
        let layout = StripeLayout::canonical(s);
        let reference = common::reference_blocks(s);
        assert_eq!(layout.hosts.len(), reference.len(), "{name}");
        for (b, r) in reference.iter().enumerate() {
            assert_eq!(layout.hosts[b], r.hosts, "{name} block {b}");
            assert_eq!(s.generator_row(b), r.row, "{name} block {b}");
        }
        assert_eq!(common::node_count(s), s.code_length());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encode_matches_reference(s in any_scheme(), len in 1usize..64, seed in any::<u64>()) {
        let data = common::payload(s.data_blocks(), len, seed);
        prop_assert_eq!(encode_stripe(s, &data).unwrap(), common::encode(s, &data));
    }

    #[test]
    fn decode_agrees_with_reference((s, failed) in scheme_and_pattern(), seed in any::<u64>()) {
        let data = common::payload(s.data_blocks(), 24, seed);
        let coded = encode_stripe(s, &data).unwrap();
        let layout = StripeLayout::canonical(s);
        let pattern = ErasurePattern::new(failed.iter().copied());
        let surviving = layout.distribute(&coded, &pattern);
        let ours = decode_stripe(&layout, &surviving, &pattern);
        match common::decode(s, &coded, &failed) {
            Some(reference) => {
                prop_assert!(is_recoverable(s, &pattern));
                prop_assert_eq!(&ours.unwrap(), &reference);
                prop_assert_eq!(reference, data);
            }
            None => {
                prop_assert!(!is_recoverable(s, &pattern));
                prop_assert_eq!(ours.unwrap_err(), CodeError::Unrecoverable);
            }
        }
    }

    #[test]
    fn repair_plans_rebuild_lost_blocks((s, failed) in scheme_and_pattern(), seed in any::<u64>()) {
        let layout = StripeLayout::canonical(s);
        let pattern = ErasurePattern::new(failed.iter().copied());
        let plan = match plan_repair(&layout, &pattern) {
            Ok(p) => p,
            Err(CodeError::Unrecoverable) => {
                prop_assert!(!is_recoverable(s, &pattern));
                return Ok(());
            }
            Err(CodeError::UnsupportedPattern { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert_eq!(plan.bandwidth_blocks, plan.transfers.len());
        let data = common::payload(s.data_blocks(), 16, seed);
        let coded = encode_stripe(s, &data).unwrap();
        let source = MemorySource::new(&layout, &coded, &pattern);
        let built = execute_plan(&plan, &source).unwrap();
        let mut expected = BTreeMap::new();
        for &n in &failed {
            for (b, _) in layout.blocks_on(n) {
                expected.insert((Site::Node(n), b), coded[b].clone());
            }
        }
        let got: BTreeMap<_, _> = plan
            .outputs
            .iter()
            .map(|k| (*k, built[k].clone()))
            .collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn schedulers_bounded_by_matching(
        scheme in prop::sample::select(vec!["2-rep", "pentagon", "heptagon", "heptagon-local"]),
        slots in 1usize..5,
        load in 5.0f64..200.0,
        seed in any::<u64>(),
    ) {
        let s = common::scheme(scheme);
        let cluster = build_cluster(s, 20, slots, 6, seed).unwrap();
        let w = generate_workload(&cluster, load, seed).unwrap();
        let best = run_scheduler(SchedulerKind::Matching, &cluster, &w, 1, seed);
        for kind in [SchedulerKind::Delay, SchedulerKind::Peeling] {
            let a = run_scheduler(kind, &cluster, &w, 1, seed);
            prop_assert!(a.local_tasks() <= best.local_tasks());
            prop_assert_eq!(a.node.len(), w.tasks.len());
            for wave in a.node.chunks(cluster.total_slots()) {
                let mut used = vec![0; cluster.nodes];
                for &n in wave {
                    used[n] += 1;
                }
                prop_assert!(used.iter().all(|&u| u <= slots));
            }
        }
        if w.tasks.len() <= cluster.total_slots() {
            prop_assert_eq!(schedule_maxmatch(&cluster, &w).unwrap(), best);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn store_roundtrip_under_failures(
        scheme in prop::sample::select(vec!["2-rep", "3-rep", "pentagon", "heptagon", "raid+m-4"]),
        len in 0usize..5000,
        block in 1usize..300,
        kills in prop::collection::btree_set(0usize..8, 0..4),
        seed in any::<u64>(),
    ) {
        let s = common::scheme(scheme);
        let dir = tempfile::tempdir().unwrap();
        let mut store = BlockStore::init(dir.path(), 10).unwrap();
        let data = common::payload(1, len, seed).remove(0);
        let m = store.put_bytes("f", &data, s, block).unwrap();
        for &k in &kills {
            store.kill_node(k).unwrap();
        }
        let recoverable = m.stripes.iter().all(|st| {
            let layout = StripeLayout::with_nodes(s, st.layout_nodes.clone());
            let pattern = ErasurePattern::new(kills.iter().copied().filter(|k| st.layout_nodes.contains(k)));
            dupcode::codes::layout_recoverable(&layout, &pattern)
        });
        match store.get("f") {
            Ok(got) => {
                prop_assert!(recoverable);
                prop_assert_eq!(&got.bytes, &data);
                let r = store.repair().unwrap();
                prop_assert_eq!(r.measured_bandwidth_blocks, r.planned_bandwidth_blocks);
                prop_assert!(store.fsck().unwrap().is_clean());
                prop_assert_eq!(store.get("f").unwrap().bytes, data);
            }
            Err(StoreError::Unrecoverable { .. }) => prop_assert!(!recoverable),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}
