use super::{ActorTemplate, LogicalScenario, MapTemplate, ParameterSpec};

const HORIZON_S: f64 = 20.0;
const DT_S: f64 = 0.1;

fn cut_in_parameters() -> Vec<ParameterSpec> {
    vec![
        ParameterSpec::new("ego_init_speed", 10.0, 30.0, "m/s", "initial ego speed"),
        ParameterSpec::new(
            "npc_init_long_offset",
            -20.0,
            40.0,
            "m",
            "NPC center offset ahead of the ego, adjacent left lane",
        ),
        ParameterSpec::new("npc_init_speed", 5.0, 30.0, "m/s", "initial NPC speed"),
        ParameterSpec::new(
            "cutin_trigger_gap",
            5.0,
            40.0,
            "m",
            "bumper gap ahead of the ego at which the NPC starts merging",
        ),
        ParameterSpec::new("cutin_duration", 1.0, 5.0, "s", "lateral maneuver duration"),
        ParameterSpec::new(
            "npc_target_speed",
            5.0,
            30.0,
            "m/s",
            "NPC speed reached at the end of the merge",
        ),
    ]
}

fn junction_parameters() -> Vec<ParameterSpec> {
    vec![
        ParameterSpec::new("ego_init_speed", 5.0, 15.0, "m/s", "initial ego speed"),
        ParameterSpec::new(
            "ego_init_dist_to_conflict",
            20.0,
            60.0,
            "m",
            "ego path distance to the conflict point",
        ),
        ParameterSpec::new(
            "npc_init_dist_to_conflict",
            20.0,
            60.0,
            "m",
            "NPC path distance to the conflict point",
        ),
        ParameterSpec::new("npc_speed", 5.0, 20.0, "m/s", "constant NPC speed"),
    ]
}

fn scenario(
    id: &str,
    description: &str,
    map_template: MapTemplate,
    parameters: Vec<ParameterSpec>,
    actors: Vec<ActorTemplate>,
) -> LogicalScenario {
    LogicalScenario {
        id: id.to_string(),
        description: description.to_string(),
        map_template,
        horizon_s: HORIZON_S,
        dt_s: DT_S,
        parameters,
        actors,
    }
}

/// The six built-in two-or-more-vehicle pre-crash situations.
pub fn builtin_catalog() -> Vec<LogicalScenario> {
    let mut cut_in2 = cut_in_parameters();
    cut_in2.push(ParameterSpec::new(
        "npc2_init_long_offset",
        -40.0,
        0.0,
        "m",
        "second NPC center offset relative to the ego, left lane behind",
    ));
    cut_in2.push(ParameterSpec::new("npc2_speed", 10.0, 30.0, "m/s", "constant second NPC speed"));

    vec![
        scenario(
            "FB",
            "Lead vehicle in the ego lane brakes hard while both are cruising.",
            MapTemplate::Highway2,
            vec![
                ParameterSpec::new("ego_init_speed", 10.0, 30.0, "m/s", "initial ego speed"),
                ParameterSpec::new("npc_init_gap", 10.0, 60.0, "m", "initial bumper gap to the lead"),
                ParameterSpec::new("npc_init_speed", 10.0, 30.0, "m/s", "initial lead speed"),
                ParameterSpec::new("brake_trigger_time", 1.0, 8.0, "s", "time at which the lead brakes"),
                ParameterSpec::new("brake_decel", 2.0, 9.0, "m/s^2", "lead braking deceleration"),
            ],
            vec![ActorTemplate::ego("lane0"), ActorTemplate::npc("lane0")],
        ),
        scenario(
            "CutIn1",
            "Highway cruise; an NPC in the left lane merges into the ego lane.",
            MapTemplate::Highway2,
            cut_in_parameters(),
            vec![ActorTemplate::ego("lane0"), ActorTemplate::npc("lane1>lane0")],
        ),
        scenario(
            "CutIn2",
            "As CutIn1, with a second NPC travelling behind the ego in the left lane.",
            MapTemplate::Highway3,
            cut_in2,
            vec![
                ActorTemplate::ego("lane1"),
                ActorTemplate::npc("lane2>lane1"),
                ActorTemplate::npc("lane2"),
            ],
        ),
        scenario(
            "OVTP",
            "Unsignalized junction; the ego drives south to north while an NPC crosses west to east.",
            MapTemplate::Junction4way,
            junction_parameters(),
            vec![ActorTemplate::ego("S>N"), ActorTemplate::npc("W>E")],
        ),
        scenario(
            "NJLT",
            "Unsignalized junction; the ego turns left while an NPC drives straight north to south.",
            MapTemplate::Junction4way,
            junction_parameters(),
            vec![ActorTemplate::ego("S>W"), ActorTemplate::npc("N>S")],
        ),
        scenario(
            "NJRT",
            "Unsignalized junction; the ego turns right while an NPC drives straight west to east.",
            MapTemplate::Junction4way,
            junction_parameters(),
            vec![ActorTemplate::ego("S>E"), ActorTemplate::npc("W>E")],
        ),
    ]
}

/// Looks up a catalog entry by id.
pub fn catalog_entry(id: &str) -> Option<LogicalScenario> {
    builtin_catalog().into_iter().find(|ls| ls.id == id)
}
