macro_rules! example {
    ($module:ident, $file:literal, $test:ident) => {
        #[allow(dead_code)]
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }

        #[test]
        fn $test() {
            $module::run_example().expect(concat!($file, " should run"));
        }
    };
}

example!(codec_roundtrip, "codec_roundtrip.rs", codec_roundtrip_runs);
example!(clean_delivery, "clean_delivery.rs", clean_delivery_runs);
example!(
    stabilize_from_garbage,
    "stabilize_from_garbage.rs",
    stabilize_from_garbage_runs
);
example!(closure_walk, "closure_walk.rs", closure_walk_runs);
example!(first_attempt, "first_attempt.rs", first_attempt_runs);
example!(overhead, "overhead.rs", overhead_runs);
example!(
    exhaustive_explore,
    "exhaustive_explore.rs",
    exhaustive_explore_runs
);
example!(udp_live, "udp_live.rs", udp_live_runs);
example!(
    scenario_campaign,
    "scenario_campaign.rs",
    scenario_campaign_runs
);
