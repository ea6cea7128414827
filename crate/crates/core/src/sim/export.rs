//! Line-oriented trace export.
//!
//! ```text
//! time,actor_id,x,y,heading,speed,lane
//! <one row per step and actor, steps in time order, actors ego first>
//! # collisions
//! time,npc_id,impact_x,impact_y,ego_speed,npc_speed,relative_heading,npc_lateral_speed
//! <one row per collision event>
//! ```

use std::fmt::Write as _;

use super::SimulationTrace;

pub const TRACE_HEADER: &str = "time,actor_id,x,y,heading,speed,lane";
pub const COLLISION_MARKER: &str = "# collisions";
pub const COLLISION_HEADER: &str =
    "time,npc_id,impact_x,impact_y,ego_speed,npc_speed,relative_heading,npc_lateral_speed";

pub fn trace_to_csv(trace: &SimulationTrace) -> String {
    let rows = trace.steps.len() * trace.actor_ids.len();
    let mut out = String::with_capacity(64 * (rows + 4));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for step in &trace.steps {
        for v in &step.vehicles {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                step.time, trace.actor_ids[v.actor], v.x, v.y, v.heading, v.speed, v.lane
            );
        }
    }
    out.push_str(COLLISION_MARKER);
    out.push('\n');
    out.push_str(COLLISION_HEADER);
    out.push('\n');
    for ev in &trace.collisions {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            ev.time_s,
            ev.npc_id,
            ev.impact_point_ego_frame[0],
            ev.impact_point_ego_frame[1],
            ev.ego_speed,
            ev.npc_speed,
            ev.relative_heading,
            ev.npc_lateral_speed
        );
    }
    out
}
