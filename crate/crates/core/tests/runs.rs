use std::sync::Arc;

use fatesim_core::agents::{AgentConfig, Algorithm};
use fatesim_core::runner::{run_experiment, RunSettings};
use fatesim_core::suite;

fn config(name: &str) -> AgentConfig {
    AgentConfig::default_for(name.parse::<Algorithm>().unwrap())
}

#[test]
fn every_preset_runs_cleanly_with_cheap_agents() {
    let settings = RunSettings::default();
    for (name, cfg) in suite::list_presets() {
        let model = Arc::new(suite::generate(&cfg).unwrap());
        for algo in ["random", "qlearn"] {
            let r = run_experiment(Arc::clone(&model), &name, &config(algo), algo, 3, &settings)
                .unwrap();
            r.verify(&settings)
                .unwrap_or_else(|e| panic!("{name} {algo}: {e}"));
            assert!(r.final_coverage() > 0.0);
        }
    }
}

#[test]
fn deep_agents_respect_episode_accounting() {
    let settings = RunSettings::default();
    for preset in [
        "player/20_str",
        "social/20_str",
        "bank/aug_5",
        "market/40_str",
    ] {
        let model = Arc::new(suite::generate(&suite::preset(preset).unwrap()).unwrap());
        for algo in ["ddpg", "td3", "sac"] {
            let r = run_experiment(
                Arc::clone(&model),
                preset,
                &config(algo),
                algo,
                11,
                &settings,
            )
            .unwrap();
            r.verify(&settings)
                .unwrap_or_else(|e| panic!("{preset} {algo}: {e}"));
            assert_eq!(r.steps.len(), 4000);
            if r.crashes.is_empty() {
                assert_eq!(r.episode_lengths, vec![250; 16], "{preset} {algo}");
            }
        }
    }
}

#[test]
fn runs_repeat_exactly() {
    let settings = RunSettings {
        steps: 600,
        ..RunSettings::default()
    };
    let model = Arc::new(suite::generate(&suite::preset("bank/20_str").unwrap()).unwrap());
    let run = |algo: &str, seed| {
        run_experiment(
            Arc::clone(&model),
            "bank/20_str",
            &config(algo),
            algo,
            seed,
            &settings,
        )
        .unwrap()
    };
    for algo in ["random", "qlearn", "ddpg", "td3", "sac"] {
        let a = run(algo, 5);
        assert_eq!(a.steps, run(algo, 5).steps, "{algo}");
        assert_ne!(a.steps, run(algo, 6).steps, "{algo}: seed ignored");
    }
}

#[test]
fn coverage_rises_above_login_for_random() {
    // random search gets past a 1-in-20 password well within 4000 steps
    let settings = RunSettings::default();
    let model = Arc::new(suite::generate(&suite::preset("social/20_str").unwrap()).unwrap());
    let login_only = 100.0 / model.nodes.len() as f64;
    for seed in 0..5 {
        let r = run_experiment(
            Arc::clone(&model),
            "social/20_str",
            &config("random"),
            "random",
            seed,
            &settings,
        )
        .unwrap();
        assert!(r.final_coverage() > 2.0 * login_only);
    }
}
