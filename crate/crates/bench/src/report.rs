//! Episode and benchmark reports: aggregation into overall and per-skill
//! means, JSON and CSV serialization, and router accuracy over labeled
//! samples.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use expertdrive_numerics::{DetRng, Graph, ParamStore, Precision};
use expertdrive_policy::action_moe::top_k_lower_tie;
use expertdrive_policy::data::TrainSample;
use expertdrive_policy::model::{DriveModel, GateMode, PrefixSource, ViewPlan};
use expertdrive_policy::planner::{make_flow_sample, TrajectoryNormalizer};
use expertdrive_policy::vision_moe::argmax_lower_tie;
use expertdrive_sim::{Infraction, SkillLabel};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::metrics::{comfort, driving_score, efficiency, ComfortLimits};

/// Report schema version, bumped on any layout change.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Everything recorded about one closed-loop episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub scenario_id: String,
    pub variant: u32,
    pub seed: u64,
    pub skill: SkillLabel,
    pub route_completion: f64,
    pub infractions: Vec<Infraction>,
    pub success: bool,
    pub policy_failure: bool,
    pub duration_s: f64,
    pub ego_speed_trace: Vec<f64>,
    pub traffic_speed_trace: Vec<Option<f64>>,
    pub jerk_trace: Vec<f64>,
    pub lat_acc_trace: Vec<f64>,
}

impl EpisodeReport {
    pub fn driving_score(&self) -> f64 {
        driving_score(self.route_completion, &self.infractions)
    }

    /// Episode efficiency; a rollout that never ticked scores zero.
    pub fn efficiency(&self, floor: f64) -> f64 {
        if self.ego_speed_trace.is_empty() {
            return 0.0;
        }
        efficiency(&self.ego_speed_trace, &self.traffic_speed_trace, floor)
    }

    /// Episode comfort; a rollout that never ticked scores zero.
    pub fn comfort(&self, limits: ComfortLimits) -> f64 {
        if self.jerk_trace.is_empty() {
            return 0.0;
        }
        comfort(&self.jerk_trace, &self.lat_acc_trace, limits)
    }
}

/// Mean metrics over the episodes of one skill.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkillBucket {
    pub count: usize,
    pub driving_score: f64,
    pub success_rate: f64,
    pub efficiency: f64,
    pub comfort: f64,
}

/// Aggregated benchmark results for one policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub policy: String,
    /// Traffic-speed floor the efficiency metric was computed with.
    pub efficiency_floor: f64,
    /// Thresholds the comfort metric was computed with.
    pub comfort_limits: ComfortLimits,
    pub driving_score: f64,
    /// Percent of episodes that succeeded.
    pub success_rate: f64,
    pub efficiency: f64,
    pub comfort: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub open_loop_l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vision_router_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action_router_accuracy: Option<f64>,
    pub per_skill: BTreeMap<String, SkillBucket>,
    pub episodes: Vec<EpisodeReport>,
}

/// Stable lowercase name for a skill, used as the bucket key.
pub fn skill_name(skill: SkillLabel) -> &'static str {
    match skill {
        SkillLabel::Merging => "merging",
        SkillLabel::Overtaking => "overtaking",
        SkillLabel::EmergencyBrake => "emergency_brake",
        SkillLabel::GiveWay => "give_way",
        SkillLabel::TrafficSign => "traffic_sign",
        SkillLabel::ParkingExit => "parking_exit",
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for v in values {
        total += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

impl BenchmarkReport {
    /// Aggregate episodes into overall and per-skill means. Episodes are
    /// re-sorted by (scenario_id, variant, seed) so the report is
    /// independent of rollout order.
    pub fn from_episodes(
        policy: impl Into<String>,
        mut episodes: Vec<EpisodeReport>,
        efficiency_floor: f64,
        comfort_limits: ComfortLimits,
    ) -> Result<Self> {
        if episodes.is_empty() {
            return Err(BenchError::Empty { what: "episode list".into() });
        }
        episodes.sort_by(|a, b| {
            (&a.scenario_id, a.variant, a.seed).cmp(&(&b.scenario_id, b.variant, b.seed))
        });

        let mut per_skill: BTreeMap<String, Vec<&EpisodeReport>> = BTreeMap::new();
        for ep in &episodes {
            per_skill.entry(skill_name(ep.skill).to_string()).or_default().push(ep);
        }
        let bucket = |eps: &[&EpisodeReport]| SkillBucket {
            count: eps.len(),
            driving_score: mean(eps.iter().map(|e| e.driving_score())),
            success_rate: 100.0 * eps.iter().filter(|e| e.success).count() as f64
                / eps.len() as f64,
            efficiency: mean(eps.iter().map(|e| e.efficiency(efficiency_floor))),
            comfort: mean(eps.iter().map(|e| e.comfort(comfort_limits))),
        };
        let per_skill: BTreeMap<String, SkillBucket> =
            per_skill.into_iter().map(|(k, v)| (k, bucket(&v))).collect();

        let all: Vec<&EpisodeReport> = episodes.iter().collect();
        let overall = bucket(&all);
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            policy: policy.into(),
            efficiency_floor,
            comfort_limits,
            driving_score: overall.driving_score,
            success_rate: overall.success_rate,
            efficiency: overall.efficiency,
            comfort: overall.comfort,
            open_loop_l2: None,
            vision_router_accuracy: None,
            action_router_accuracy: None,
            per_skill,
            episodes,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Flat per-episode table for plotting.
    pub fn csv_string(&self) -> String {
        let mut out = String::from(
            "schema_version,policy,scenario_id,variant,seed,skill,success,policy_failure,\
             route_completion,driving_score,efficiency,comfort,duration_s,infraction_count\n",
        );
        for ep in &self.episodes {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.3},{}\n",
                self.schema_version,
                self.policy,
                ep.scenario_id,
                ep.variant,
                ep.seed,
                skill_name(ep.skill),
                ep.success,
                ep.policy_failure,
                ep.route_completion,
                ep.driving_score(),
                ep.efficiency(self.efficiency_floor),
                ep.comfort(self.comfort_limits),
                ep.duration_s,
                ep.infractions.len(),
            ));
        }
        out
    }

    pub fn write_csv(
        &self,
        path: &Path,
        efficiency_floor: f64,
        comfort_limits: ComfortLimits,
    ) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.csv_string(efficiency_floor, comfort_limits))?;
        Ok(())
    }
}

/// Top-1 match rates of the clean routers against frame labels:
/// `(vision, action)`, each absent when the model lacks that router.
pub fn router_accuracy(
    model: &DriveModel,
    store: &ParamStore,
    normalizer: &TrajectoryNormalizer,
    samples: &[TrainSample],
    seed: u64,
) -> Result<(Option<f64>, Option<f64>)> {
    if samples.is_empty() {
        return Err(BenchError::Empty { what: "labeled sample set".into() });
    }
    let mut vision_hits = 0usize;
    let mut action_hits = 0usize;
    for (idx, sample) in samples.iter().enumerate() {
        let target = normalizer.normalize(&sample.future);
        let mut rng = DetRng::derive(seed, &[idx as u64]);
        let flow = make_flow_sample(&mut rng, &target);
        let inputs = expertdrive_policy::trainer::sample_inputs(sample);
        let mut g = Graph::inference(Precision::Double);
        let view = if model.config.use_vision_moe {
            ViewPlan::Routed { noise: None }
        } else {
            ViewPlan::None
        };
        let gate = if model.config.use_action_moe {
            GateMode::Routed { noise: None }
        } else {
            GateMode::Dense
        };
        let prefix = model.prefix_pass(&mut g, store, &inputs, view)?;
        let pass = model.decode_pass(
            &mut g,
            store,
            PrefixSource::Node(prefix.prefix),
            &flow.x_tau,
            flow.tau,
            gate,
        )?;
        if let Some(logits) = prefix.vision_logits {
            if argmax_lower_tie(g.value(logits).data()) == sample.view_label {
                vision_hits += 1;
            }
        }
        if !pass.layer_evals.is_empty() {
            let mut mean_probs = vec![0.0; model.config.num_action_experts];
            for eval in &pass.layer_evals {
                let p = g.value(eval.clean_probs);
                for (k, acc) in mean_probs.iter_mut().enumerate() {
                    *acc += p.at(0, k);
                }
            }
            if top_k_lower_tie(&mean_probs, 1)[0] == sample.skill_label {
                action_hits += 1;
            }
        }
    }
    let n = samples.len() as f64;
    Ok((
        model.config.use_vision_moe.then_some(vision_hits as f64 / n),
        model.config.use_action_moe.then_some(action_hits as f64 / n),
    ))
}
