//! End-to-end benchmark runs: route set through policies into reports.

use expertdrive_bench::{
    benchmark_routes, route_scenario, run_benchmark, BenchmarkReport, ComfortLimits,
    NeuralPolicy, RouteFollowPolicy, TrajectoryPolicy,
};
use expertdrive_numerics::{DetRng, ParamStore};
use expertdrive_policy::{DriveModel, ModelConfig, TrajectoryNormalizer};
use expertdrive_sim::ScenarioSpec;

fn oracle_factory(spec: &ScenarioSpec) -> Box<dyn TrajectoryPolicy> {
    Box::new(RouteFollowPolicy::new(spec.route(), 6.0))
}

#[test]
fn oracle_benchmark_is_identical_serial_and_parallel() {
    let routes = benchmark_routes(&[3]);
    assert_eq!(routes.len(), 20);
    let serial = run_benchmark(&oracle_factory, &routes, 1).expect("serial run");
    let parallel = run_benchmark(&oracle_factory, &routes, 4).expect("parallel run");

    let report_a =
        BenchmarkReport::from_episodes("oracle", serial, 0.1, ComfortLimits::default()).unwrap();
    let report_b =
        BenchmarkReport::from_episodes("oracle", parallel, 0.1, ComfortLimits::default()).unwrap();
    let json_a = serde_json::to_string_pretty(&report_a).unwrap();
    let json_b = serde_json::to_string_pretty(&report_b).unwrap();
    assert_eq!(
        json_a, json_b,
        "FAIL: benchmark reports must not depend on the number of worker threads"
    );
    assert_eq!(report_a.episodes.len(), 20);
    assert_eq!(report_a.per_skill.len(), 5, "one bucket per core skill");
}

#[test]
fn report_files_round_trip_bit_identically() {
    let routes = &benchmark_routes(&[5])[..6];
    let episodes = run_benchmark(&oracle_factory, routes, 2).expect("run");
    let report =
        BenchmarkReport::from_episodes("oracle", episodes, 0.1, ComfortLimits::default()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let json_path = dir.path().join("report.json");
    let csv_path = dir.path().join("report.csv");
    report.write_json(&json_path).unwrap();
    report.write_csv(&csv_path).unwrap();

    let reread: BenchmarkReport =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    let rewritten = dir.path().join("report2.json");
    reread.write_json(&rewritten).unwrap();
    assert_eq!(
        std::fs::read(&json_path).unwrap(),
        std::fs::read(&rewritten).unwrap(),
        "FAIL: JSON report must survive a load/save cycle byte-for-byte"
    );
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 1 + report.episodes.len());
}

#[test]
fn untrained_neural_policy_completes_an_episode_loop() {
    let config = ModelConfig {
        d_model: 12,
        d_ff: 16,
        encoder_blocks: 1,
        decoder_blocks: 2,
        router_hidden: 8,
        num_action_experts: 4,
        action_top_k: 2,
        ..ModelConfig::standard()
    };
    let mut store = ParamStore::new();
    let mut rng = DetRng::derive(42, &[0]);
    let model = DriveModel::new(config, &mut store, &mut rng);
    let policy = NeuralPolicy::new(model, store, TrajectoryNormalizer::identity(), "untrained");

    let routes = benchmark_routes(&[11]);
    let spec = route_scenario(&routes[0]).unwrap();
    let episodes = run_benchmark(&|_spec| Box::new(policy.clone()), &routes[..1], 1).unwrap();
    assert_eq!(episodes.len(), 1);
    let ep = &episodes[0];
    assert!(!ep.policy_failure, "untrained weights still produce finite plans");
    assert!(!ep.success, "an untrained policy should not complete {}", spec.scenario_id);
    assert!(ep.duration_s > 0.0);
    assert!(!ep.ego_speed_trace.is_empty());
}
