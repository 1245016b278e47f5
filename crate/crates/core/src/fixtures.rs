//! Fixture data compiled into the crate so the CLI and tests run anywhere.

/// Detector documents for the five stages of the projectile-motion lab.
pub const SCENES: &[(&str, &str)] = &[
    ("projectile_q1", include_str!("../fixtures/scenes/projectile_q1.json")),
    ("projectile_q2", include_str!("../fixtures/scenes/projectile_q2.json")),
    ("projectile_q3", include_str!("../fixtures/scenes/projectile_q3.json")),
    ("projectile_q4", include_str!("../fixtures/scenes/projectile_q4.json")),
    ("projectile_q5", include_str!("../fixtures/scenes/projectile_q5.json")),
];

/// Mock LLM scenario answering the five lab questions.
pub const PROJECTILE_SCENARIO: &str = include_str!("../fixtures/scenario_projectile.json");

/// The five-question student script, one entry per turn.
pub const PROJECTILE_SCRIPT: &str = include_str!("../fixtures/script_projectile.json");

pub const DEFAULT_EXPERIMENT_BRIEF: &str = "Projectile motion lab. Two balls leave the edge of a table at the same moment: the left ball is dropped straight down and the right ball is launched horizontally. Object positions come from a calibrated camera looking at the side of the table, with the origin on the floor below the launch point.";

pub const DEFAULT_SYSTEM_PREAMBLE: &str = "You are PhysicsAssistant, a lab assistant for 8th-grade physics students. Answer in one to three short sentences that can be spoken aloud. Take every measurement from the SCENE section, always state units, and never invent measurements that are not in the scene.";
