//! Benchmark route sets and the multi-episode runner.

use expertdrive_sim::{
    annotate_skill, build_scenario, ScenarioSpec, SkillLabel, GENERATED_SCENARIOS,
    VARIANTS_PER_SCENARIO,
};
use serde::{Deserialize, Serialize};

use crate::closed_loop::run_episode;
use crate::error::Result;
use crate::policy::TrajectoryPolicy;
use crate::report::EpisodeReport;

/// One route of the benchmark: a scenario instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteSpec {
    pub scenario_id: String,
    pub variant: u32,
    pub seed: u64,
}

/// Scenarios per skill family included in the standard route set.
pub const SCENARIOS_PER_SKILL: usize = 2;

/// The standard benchmark route set: for each of the five core skill
/// families, the first `SCENARIOS_PER_SKILL` catalogued scenarios crossed
/// with every variant and every seed. Five seeds yield exactly 100 routes.
pub fn benchmark_routes(seeds: &[u64]) -> Vec<RouteSpec> {
    let core_skills = [
        SkillLabel::Merging,
        SkillLabel::Overtaking,
        SkillLabel::EmergencyBrake,
        SkillLabel::GiveWay,
        SkillLabel::TrafficSign,
    ];
    let mut routes = Vec::new();
    for skill in core_skills {
        let scenarios: Vec<&str> = GENERATED_SCENARIOS
            .iter()
            .copied()
            .filter(|id| annotate_skill(id, false).map(|s| s == skill).unwrap_or(false))
            .take(SCENARIOS_PER_SKILL)
            .collect();
        for id in scenarios {
            for variant in 0..VARIANTS_PER_SCENARIO {
                for &seed in seeds {
                    routes.push(RouteSpec { scenario_id: id.to_string(), variant, seed });
                }
            }
        }
    }
    routes
}

/// Materialize a route's scenario spec.
pub fn route_scenario(route: &RouteSpec) -> Result<ScenarioSpec> {
    Ok(build_scenario(&route.scenario_id, route.variant, route.seed)?)
}

/// Run every route through a policy. `make_policy` is called once per
/// episode with the scenario (policies like the privileged route-follower
/// need the route); episodes are independent, so with `jobs > 1` they run
/// on that many threads. Reports come back in route order regardless of
/// scheduling.
pub fn run_benchmark(
    make_policy: &(dyn Fn(&ScenarioSpec) -> Box<dyn TrajectoryPolicy> + Sync),
    routes: &[RouteSpec],
    jobs: usize,
) -> Result<Vec<EpisodeReport>> {
    let jobs = jobs.max(1).min(routes.len().max(1));
    if jobs <= 1 {
        return routes
            .iter()
            .map(|route| {
                let spec = route_scenario(route)?;
                let mut policy = make_policy(&spec);
                run_episode(policy.as_mut(), &spec)
            })
            .collect();
    }

    let mut slots: Vec<Option<Result<EpisodeReport>>> = Vec::new();
    slots.resize_with(routes.len(), || None);
    let chunk = routes.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        for (routes_chunk, slots_chunk) in
            routes.chunks(chunk).zip(slots.chunks_mut(chunk))
        {
            scope.spawn(move || {
                for (route, slot) in routes_chunk.iter().zip(slots_chunk.iter_mut()) {
                    let result = route_scenario(route).and_then(|spec| {
                        let mut policy = make_policy(&spec);
                        run_episode(policy.as_mut(), &spec)
                    });
                    *slot = Some(result);
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every slot filled by its worker"))
        .collect()
}
