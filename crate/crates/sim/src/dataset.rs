//! Demonstration dataset container: fixed-layout binary frame records plus
//! a JSON manifest carrying per-episode metadata (scenario spec, labels,
//! outcome). Camera rasters are not stored; they are re-rendered from the
//! agent snapshots and the manifest's map when a consumer needs them.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::annotate::{annotate_camera, FrameContext, LaneSide};
use crate::error::{Result, SimError};
use crate::expert::EpisodeRollout;
use crate::infraction::Infraction;
use crate::scenario::ScenarioSpec;
use crate::types::{
    CameraViewId, EgoRecord, GoalWaypoint, ManeuverCommand, Trajectory, VehicleControls,
    EGO_HISTORY_LEN, TRAJECTORY_LEN,
};
use crate::world::{AgentKind, AgentSnapshot};

/// Format version stamped into both the manifest and the binary header.
pub const DATASET_VERSION: u32 = 1;

/// Simulation ticks between consecutive trajectory label points.
pub const LABEL_STRIDE_TICKS: usize = 2;

const MAGIC: &[u8; 4] = b"XDRV";

/// Basename of the manifest file inside a dataset directory.
pub const MANIFEST_FILE: &str = "manifest.json";

/// Basename of the frame container inside a dataset directory.
pub const FRAMES_FILE: &str = "frames.bin";

/// One training sample: the world as the driver saw it plus the trajectory
/// it actually drove over the next two seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub time: f64,
    pub ego: EgoRecord,
    pub history: [EgoRecord; EGO_HISTORY_LEN],
    /// Controls applied at this tick.
    pub controls: VehicleControls,
    pub goal: GoalWaypoint,
    pub context: FrameContext,
    pub agents: Vec<AgentSnapshot>,
    /// The realized future: ego positions over the next 2 s in this frame's
    /// ego frame.
    pub future: Trajectory,
    /// Camera-view annotation index, -1 when unannotated.
    pub view_label: i8,
    /// Skill annotation index, -1 when unannotated.
    pub skill_label: i8,
}

/// Everything known about one recorded episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub scenario_id: String,
    pub variant: u32,
    pub seed: u64,
    pub skill_label: i8,
    pub n_frames: u32,
    pub completion: f64,
    pub success: bool,
    pub duration_s: f64,
    pub infractions: Vec<Infraction>,
    /// Full blueprint: map geometry and route for re-rendering.
    pub spec: ScenarioSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    /// Master seed the generation run was keyed on.
    pub seed: u64,
    pub episodes: Vec<EpisodeMeta>,
}

/// An in-memory dataset: manifest plus per-episode frame vectors, aligned
/// by index.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub episodes: Vec<Vec<Frame>>,
}

/// World point into the frame of a single ego record (+x forward, +y left).
fn into_record_frame(rec: &EgoRecord, x: f64, y: f64) -> (f64, f64) {
    let dx = x - rec.x;
    let dy = y - rec.y;
    let (c, s) = (rec.heading.cos(), rec.heading.sin());
    (dx * c + dy * s, -dx * s + dy * c)
}

/// Turn a rollout into labeled frames. Ticks too close to the episode end
/// to have a full 2-second future are dropped. `skill_label` applies to
/// every frame; the view label comes from the per-frame context.
pub fn frames_from_rollout(rollout: &EpisodeRollout, skill_label: i8) -> Vec<Frame> {
    let horizon = LABEL_STRIDE_TICKS * TRAJECTORY_LEN;
    let ticks = &rollout.ticks;
    let mut frames = Vec::new();
    for (i, tick) in ticks.iter().enumerate() {
        if i + horizon >= ticks.len() {
            break;
        }
        let mut future = Trajectory::zeros();
        for k in 0..TRAJECTORY_LEN {
            let ahead = &ticks[i + LABEL_STRIDE_TICKS * (k + 1)].ego;
            let (x, y) = into_record_frame(&tick.ego, ahead.x, ahead.y);
            future.waypoints[k] = [x, y];
        }
        frames.push(Frame {
            time: tick.time,
            ego: tick.ego,
            history: tick.history,
            controls: tick.controls,
            goal: tick.goal,
            context: tick.context,
            agents: tick.agents.clone(),
            future,
            view_label: annotate_camera(&tick.context).index() as i8,
            skill_label,
        });
    }
    frames
}

fn side_code(side: Option<LaneSide>) -> u8 {
    match side {
        None => 0,
        Some(LaneSide::Left) => 1,
        Some(LaneSide::Right) => 2,
    }
}

fn side_from_code(code: u8) -> Result<Option<LaneSide>> {
    match code {
        0 => Ok(None),
        1 => Ok(Some(LaneSide::Left)),
        2 => Ok(Some(LaneSide::Right)),
        other => Err(SimError::MalformedDataset { detail: format!("lane side code {other}") }),
    }
}

fn kind_code(kind: AgentKind) -> u8 {
    match kind {
        AgentKind::Vehicle => 0,
        AgentKind::Pedestrian => 1,
        AgentKind::Obstacle => 2,
    }
}

fn kind_from_code(code: u8) -> Result<AgentKind> {
    match code {
        0 => Ok(AgentKind::Vehicle),
        1 => Ok(AgentKind::Pedestrian),
        2 => Ok(AgentKind::Obstacle),
        other => Err(SimError::MalformedDataset { detail: format!("agent kind code {other}") }),
    }
}

fn write_record<W: Write>(w: &mut W, rec: &EgoRecord) -> io::Result<()> {
    for v in [rec.x, rec.y, rec.heading, rec.speed, rec.accel] {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_record<R: Read>(r: &mut R) -> io::Result<EgoRecord> {
    let mut vals = [0.0; 5];
    for v in &mut vals {
        *v = r.read_f64::<LittleEndian>()?;
    }
    Ok(EgoRecord { x: vals[0], y: vals[1], heading: vals[2], speed: vals[3], accel: vals[4] })
}

fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> io::Result<()> {
    w.write_f64::<LittleEndian>(frame.time)?;
    write_record(w, &frame.ego)?;
    for rec in &frame.history {
        write_record(w, rec)?;
    }
    for v in [frame.controls.steer, frame.controls.throttle, frame.controls.brake] {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.write_f64::<LittleEndian>(frame.goal.x)?;
    w.write_f64::<LittleEndian>(frame.goal.y)?;
    w.write_u8(frame.goal.command.index() as u8)?;

    let ctx = &frame.context;
    let flags = (ctx.is_in_junction as u8) | ((ctx.target_lane_opposing as u8) << 1);
    w.write_u8(flags)?;
    w.write_u8(ctx.command.index() as u8)?;
    w.write_u8(ctx.obstacle_ahead_m.is_some() as u8)?;
    w.write_f64::<LittleEndian>(ctx.obstacle_ahead_m.unwrap_or(0.0))?;
    w.write_u8(side_code(ctx.target_lane_side))?;
    w.write_u8(side_code(ctx.merging_side))?;
    w.write_u8(match ctx.emergency_vehicle_bearing {
        None => 0,
        Some(view) => 1 + view.index() as u8,
    })?;

    w.write_u16::<LittleEndian>(frame.agents.len() as u16)?;
    for a in &frame.agents {
        w.write_u8(kind_code(a.kind))?;
        for v in [a.x, a.y, a.heading, a.speed, a.length, a.width] {
            w.write_f64::<LittleEndian>(v)?;
        }
        w.write_u8(a.is_emergency as u8)?;
    }
    for wp in &frame.future.waypoints {
        w.write_f64::<LittleEndian>(wp[0])?;
        w.write_f64::<LittleEndian>(wp[1])?;
    }
    w.write_i8(frame.view_label)?;
    w.write_i8(frame.skill_label)?;
    Ok(())
}

fn read_frame<R: Read>(r: &mut R) -> Result<Frame> {
    let time = r.read_f64::<LittleEndian>()?;
    let ego = read_record(r)?;
    let mut history = [ego; EGO_HISTORY_LEN];
    for rec in &mut history {
        *rec = read_record(r)?;
    }
    let controls = VehicleControls {
        steer: r.read_f64::<LittleEndian>()?,
        throttle: r.read_f64::<LittleEndian>()?,
        brake: r.read_f64::<LittleEndian>()?,
    };
    let gx = r.read_f64::<LittleEndian>()?;
    let gy = r.read_f64::<LittleEndian>()?;
    let gcmd = r.read_u8()? as usize;
    if gcmd >= crate::types::NUM_COMMANDS {
        return Err(SimError::MalformedDataset { detail: format!("command code {gcmd}") });
    }
    let goal = GoalWaypoint { x: gx, y: gy, command: ManeuverCommand::from_index(gcmd) };

    let flags = r.read_u8()?;
    let ccmd = r.read_u8()? as usize;
    if ccmd >= crate::types::NUM_COMMANDS {
        return Err(SimError::MalformedDataset { detail: format!("command code {ccmd}") });
    }
    let has_obstacle = r.read_u8()? != 0;
    let obstacle = r.read_f64::<LittleEndian>()?;
    let target_lane_side = side_from_code(r.read_u8()?)?;
    let merging_side = side_from_code(r.read_u8()?)?;
    let emergency = match r.read_u8()? {
        0 => None,
        code if (code as usize) <= crate::types::NUM_VIEWS => {
            Some(CameraViewId::from_index(code as usize - 1))
        }
        other => {
            return Err(SimError::MalformedDataset { detail: format!("view code {other}") })
        }
    };
    let context = FrameContext {
        is_in_junction: flags & 1 != 0,
        command: ManeuverCommand::from_index(ccmd),
        obstacle_ahead_m: has_obstacle.then_some(obstacle),
        target_lane_side,
        target_lane_opposing: flags & 2 != 0,
        merging_side,
        emergency_vehicle_bearing: emergency,
    };

    let n_agents = r.read_u16::<LittleEndian>()? as usize;
    let mut agents = Vec::with_capacity(n_agents);
    for _ in 0..n_agents {
        let kind = kind_from_code(r.read_u8()?)?;
        let mut vals = [0.0; 6];
        for v in &mut vals {
            *v = r.read_f64::<LittleEndian>()?;
        }
        let is_emergency = r.read_u8()? != 0;
        agents.push(AgentSnapshot {
            kind,
            x: vals[0],
            y: vals[1],
            heading: vals[2],
            speed: vals[3],
            length: vals[4],
            width: vals[5],
            is_emergency,
        });
    }
    let mut future = Trajectory::zeros();
    for wp in &mut future.waypoints {
        wp[0] = r.read_f64::<LittleEndian>()?;
        wp[1] = r.read_f64::<LittleEndian>()?;
    }
    let view_label = r.read_i8()?;
    let skill_label = r.read_i8()?;
    Ok(Frame {
        time,
        ego,
        history,
        controls,
        goal,
        context,
        agents,
        future,
        view_label,
        skill_label,
    })
}

impl Dataset {
    /// Total frames across all episodes.
    pub fn total_frames(&self) -> usize {
        self.episodes.iter().map(Vec::len).sum()
    }

    /// Write `manifest.json` and `frames.bin` into a directory, creating it
    /// if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(dir.join(MANIFEST_FILE), manifest)?;

        let mut buf = Vec::new();
        buf.write_all(MAGIC)?;
        buf.write_u32::<LittleEndian>(DATASET_VERSION)?;
        buf.write_u64::<LittleEndian>(self.total_frames() as u64)?;
        for frames in &self.episodes {
            for frame in frames {
                write_frame(&mut buf, frame)?;
            }
        }
        fs::write(dir.join(FRAMES_FILE), buf)?;
        Ok(())
    }

    /// Load a dataset directory written by [`Dataset::save`].
    pub fn load(dir: &Path) -> Result<Dataset> {
        let manifest: DatasetManifest =
            serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.version != DATASET_VERSION {
            return Err(SimError::DatasetVersion {
                found: manifest.version,
                expected: DATASET_VERSION,
            });
        }
        let bytes = fs::read(dir.join(FRAMES_FILE))?;
        let mut r = io::Cursor::new(bytes);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SimError::MalformedDataset { detail: "bad magic".to_string() });
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != DATASET_VERSION {
            return Err(SimError::DatasetVersion { found: version, expected: DATASET_VERSION });
        }
        let total = r.read_u64::<LittleEndian>()? as usize;
        let expected: usize = manifest.episodes.iter().map(|e| e.n_frames as usize).sum();
        if total != expected {
            return Err(SimError::MalformedDataset {
                detail: format!("frame count {total} != manifest total {expected}"),
            });
        }
        let mut episodes = Vec::with_capacity(manifest.episodes.len());
        for meta in &manifest.episodes {
            let mut frames = Vec::with_capacity(meta.n_frames as usize);
            for _ in 0..meta.n_frames {
                frames.push(read_frame(&mut r)?);
            }
            episodes.push(frames);
        }
        Ok(Dataset { manifest, episodes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::run_expert_episode;
    use crate::scenario::build_scenario;

    fn small_dataset() -> Dataset {
        let mut episodes = Vec::new();
        let mut metas = Vec::new();
        for (id, variant) in [("LaneChange", 0u32), ("YieldToEmergencyVehicle", 1u32)] {
            let spec = build_scenario(id, variant, 7).unwrap();
            let rollout = run_expert_episode(&spec).unwrap();
            let frames = frames_from_rollout(&rollout, 1);
            metas.push(EpisodeMeta {
                scenario_id: id.to_string(),
                variant,
                seed: 7,
                skill_label: 1,
                n_frames: frames.len() as u32,
                completion: rollout.completion,
                success: rollout.success,
                duration_s: rollout.duration_s,
                infractions: rollout.infractions.clone(),
                spec,
            });
            episodes.push(frames);
        }
        Dataset {
            manifest: DatasetManifest { version: DATASET_VERSION, seed: 7, episodes: metas },
            episodes,
        }
    }

    #[test]
    fn round_trips_bit_exactly_through_disk() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let loaded = Dataset::load(dir.path()).unwrap();
        assert_eq!(ds.episodes.len(), loaded.episodes.len());
        for (a, b) in ds.episodes.iter().zip(&loaded.episodes) {
            assert_eq!(a.len(), b.len());
            for (fa, fb) in a.iter().zip(b) {
                assert_eq!(fa, fb, "frames must survive the container bit-exactly");
            }
        }
        assert_eq!(loaded.manifest.episodes[0].scenario_id, "LaneChange");
    }

    #[test]
    fn future_labels_are_the_realized_path_in_the_frame_ego_frame() {
        let spec = build_scenario("LaneChange", 0, 3).unwrap();
        let rollout = run_expert_episode(&spec).unwrap();
        let frames = frames_from_rollout(&rollout, 0);
        // Pick a mid-episode frame and check the first label point against
        // the raw tick data.
        let i = frames.len() / 2;
        let frame = &frames[i];
        let ahead = &rollout.ticks[i + LABEL_STRIDE_TICKS].ego;
        let (x, y) = super::into_record_frame(&frame.ego, ahead.x, ahead.y);
        assert_eq!(frame.future.waypoints[0], [x, y]);
        // Moving forward: the first label point must be ahead of the ego.
        assert!(x > 0.0, "driving forward means positive ego-frame x, got {x}");
    }

    #[test]
    fn frames_without_a_full_future_are_dropped() {
        let spec = build_scenario("LaneChange", 0, 3).unwrap();
        let rollout = run_expert_episode(&spec).unwrap();
        let frames = frames_from_rollout(&rollout, 0);
        assert_eq!(frames.len(), rollout.ticks.len() - LABEL_STRIDE_TICKS * TRAJECTORY_LEN,
            "exactly the trailing horizon's worth of ticks lack labels");
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        // Corrupt the manifest version.
        let manifest_path = dir.path().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&manifest_path).unwrap();
        std::fs::write(&manifest_path, text.replace("\"version\": 1", "\"version\": 99")).unwrap();
        match Dataset::load(dir.path()) {
            Err(SimError::DatasetVersion { found: 99, expected: 1 }) => {}
            other => panic!("FAIL: expected a version error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_container_is_rejected() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let frames_path = dir.path().join(FRAMES_FILE);
        let bytes = std::fs::read(&frames_path).unwrap();
        std::fs::write(&frames_path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(Dataset::load(dir.path()).is_err(), "half a container must not parse");
    }
}
