mod common;

use std::sync::Arc;

use handcue_core::gateway::{Gateway, ScriptedBackend};
use handcue_core::router::{
    classify, decide, normalize_text, Color, Command, CommandDecision, DispatchError, MockRobot,
    RobotAdapter, Shape, TaskRegistry,
};
use common::{command, disguise, explainer_reply, task_phrase};
use proptest::prelude::*;

fn registry() -> TaskRegistry {
    TaskRegistry::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn classify_ignores_case_spacing_and_punctuation(
        text in task_phrase(),
        seed in prop::collection::vec(any::<u8>(), 1..16),
    ) {
        let reg = registry();
        let disguised = disguise(&text, &seed);
        prop_assert_eq!(classify(&text, &reg), classify(&disguised, &reg));
        prop_assert_eq!(classify(&disguised, &reg), classify(&normalize_text(&disguised), &reg));
        prop_assert_eq!(normalize_text(&normalize_text(&disguised)), normalize_text(&disguised));
    }

    #[test]
    fn every_task_gets_exactly_one_valid_decision(task in ".{0,40}|push the [a-z]+ cube|move to .{0,20}", reply in explainer_reply()) {
        let reg = registry();
        let backend = ScriptedBackend::new([reply]);
        let gw = Gateway::new(Arc::new(backend));
        let decision = decide(&task, &reg, &gw);
        match &decision {
            CommandDecision::Classified { command, matched_task } => {
                prop_assert!(reg.check(command).is_ok());
                prop_assert!(reg.tasks.iter().any(|t| &t.task_name == matched_task));
                prop_assert_eq!(gw.backend_calls(), 0);
            }
            CommandDecision::Explained { commands } => {
                prop_assert!(!commands.is_empty());
                for c in commands {
                    prop_assert!(reg.check(c).is_ok());
                }
            }
            CommandDecision::Rejected { reason, .. } => prop_assert!(!reason.is_empty()),
        }
        let json = serde_json::to_string(&decision).unwrap();
        prop_assert_eq!(serde_json::from_str::<CommandDecision>(&json).unwrap(), decision);
    }
}

/// 10,000 random commands: the arm never leaves the box, never exceeds the
/// speed cap, and refuses exactly the out-of-box targets.
#[test]
fn mock_robot_stays_inside_the_workspace() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::{Config, TestRunner};

    let reg = registry();
    let mut robot = MockRobot::new(&reg);
    let ws = reg.workspace;
    let inside = |p: [f64; 3]| (0..3).all(|i| ws.min[i] <= p[i] && p[i] <= ws.max[i]);
    let mut runner = TestRunner::new_with_rng(Config::default(), proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha));
    let strategy = command();
    let (mut refused, mut done) = (0, 0);
    for _ in 0..10_000 {
        let cmd = strategy.new_tree(&mut runner).unwrap().current();
        let before = robot.state();
        match robot.dispatch(&cmd) {
            Ok(ack) => {
                done += 1;
                assert!(inside(ack.state.pose), "{cmd:?} left the box: {:?}", ack.state.pose);
                assert!(ack.peak_speed <= reg.max_speed + 1e-12);
                let v = ack.state.velocity;
                assert!((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() <= reg.max_speed + 1e-12);
                assert_eq!(ack.state, robot.state());
                if let Command::MoveTo { x, y, z } = cmd {
                    assert_eq!(ack.state.pose, [x, y, z]);
                }
                if cmd == Command::Stop {
                    assert_eq!(ack.state.velocity, [0.0; 3]);
                    assert_eq!(ack.state.active_program, None);
                }
            }
            Err(e) => {
                refused += 1;
                let Command::MoveTo { x, y, z } = cmd else {
                    panic!("{cmd:?} refused: {e}");
                };
                assert!(!inside([x, y, z]));
                assert_eq!(e, DispatchError::WorkspaceViolation { target: [x, y, z] });
                assert_eq!(robot.state(), before);
            }
        }
        assert!(inside(robot.state().pose));
    }
    assert!(refused > 0 && done > 0);
}

#[test]
fn unavailable_adapter_refuses_everything() {
    let reg = registry();
    let mut robot = MockRobot::new(&reg);
    robot.set_available(false);
    let before = robot.state();
    assert_eq!(robot.dispatch(&Command::Stop), Err(DispatchError::AdapterUnavailable));
    assert_eq!(robot.state(), before);
}

#[test]
fn registry_examples() {
    let reg = registry();
    let cases = [
        ("Push the RED cube.", Some(Command::PushObject { color: Color::Red })),
        ("please go home", Some(Command::MoveTo { x: 0.0, y: 0.0, z: 0.2 })),
        ("move to 0.1, -0.2, 0.3", Some(Command::MoveTo { x: 0.1, y: -0.2, z: 0.3 })),
        ("activate program greeting", Some(Command::ActivateProgram { id: "greeting".into() })),
        ("circle", Some(Command::DrawFigure { shape: Shape::Circle })),
        ("pushover", None),
        ("dance wildly", None),
    ];
    for (text, want) in cases {
        assert_eq!(classify(text, &reg).map(|(c, _)| c), want, "{text}");
    }
}

#[test]
fn out_of_box_target_is_rejected_before_dispatch() {
    let reg = registry();
    let gw = Gateway::new(Arc::new(ScriptedBackend::new([])));
    let decision = decide("move to 2 0 0", &reg, &gw);
    assert!(matches!(decision, CommandDecision::Rejected { .. }));
    assert!(decision.commands().is_empty());
}
