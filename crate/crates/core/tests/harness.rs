use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde_json::Value;
use tihdp::harness::{
    cli_eval, cor_tocr, describe_layout, evaluate, parse_config, read_trajectory, render_svg, EpisodePolicy,
    EpisodeRow, EvalOutcome, TRAJECTORY_SCHEMA,
};
use tihdp::obs::ObsConfig;
use tihdp::trainer::{train, Agent, NetsConfig, TrainConfig, Variant};
use tihdp::world::ScenarioConfig;

fn row(delivered: usize, transportable: usize) -> EpisodeRow {
    EpisodeRow { seed: 0, delivered, transportable, team_return: 0.0 }
}

#[test]
fn cor_tocr_examples() {
    let (cor, tocr) = cor_tocr(&[row(2, 3), row(3, 3)]);
    assert!((cor.unwrap() - 5.0 / 6.0).abs() < 1e-12);
    assert_eq!(tocr, Some(0.5));
    assert_eq!(cor_tocr(&[row(0, 0)]), (None, None));
}

/// Delivered / transportable counts read straight from a log file as
/// untyped JSON: the header's class list and the last record's flags.
fn counts_from_log(path: &Path) -> (usize, usize) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(header["schema"], TRAJECTORY_SCHEMA);
    let movable: Vec<bool> =
        header["classes"].as_array().unwrap().iter().map(|c| c.as_str().unwrap() != "heavy").collect();
    let last: Value = serde_json::from_str(lines.last().unwrap()).unwrap();
    let done: Vec<bool> =
        last["objects"].as_array().unwrap().iter().map(|o| o["completed"].as_bool().unwrap()).collect();
    let transportable = movable.iter().filter(|&&m| m).count();
    let delivered = movable.iter().zip(&done).filter(|(&m, &d)| m && d).count();
    (delivered, transportable)
}

#[test]
fn metrics_match_independent_log_reading() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = ScenarioConfig::with_counts(3, 2, 1, 1);
    let EvalOutcome::Report(report) = evaluate(EpisodePolicy::Scripted, &scenario, 6, 40, Some(dir.path())).unwrap() else {
        panic!("scripted evaluation is always applicable");
    };
    let mut fractions = Vec::new();
    for (k, r) in report.rows.iter().enumerate() {
        assert_eq!(r.seed, 40 + k as u64);
        let (delivered, transportable) = counts_from_log(&dir.path().join(format!("episode-{}.jsonl", r.seed)));
        assert_eq!((delivered, transportable), (r.delivered, r.transportable));
        assert_eq!(transportable, 3, "heavy objects never count");
        fractions.push(delivered as f64 / transportable as f64);
    }
    let cor = fractions.iter().sum::<f64>() / fractions.len() as f64;
    let tocr = fractions.iter().filter(|&&f| f == 1.0).count() as f64 / fractions.len() as f64;
    assert!((report.cor.unwrap() - cor).abs() < 1e-12);
    assert!((report.tocr.unwrap() - tocr).abs() < 1e-12);
    assert!(report.tocr <= report.cor);
}

#[test]
fn evaluation_is_reproducible() {
    let scenario = ScenarioConfig::with_counts(2, 1, 1, 0);
    let a = evaluate(EpisodePolicy::Scripted, &scenario, 5, 7, None).unwrap();
    let b = evaluate(EpisodePolicy::Scripted, &scenario, 5, 7, None).unwrap();
    assert_eq!(a, b);
}

fn tiny_config(variant: Variant) -> TrainConfig {
    let mut c = TrainConfig { variant, ..TrainConfig::default() };
    c.scenario.episode_length = 30;
    c.nets = NetsConfig { hidden: vec![16], lstm_width: 8 };
    c.ppo.num_envs = 1;
    c.ppo.chunk_length = 10;
    c.ppo.minibatches = 1;
    c.ppo.epochs = 1;
    c.ppo.total_steps = 30;
    c.output.checkpoint_every = 1;
    c
}

#[test]
fn local_checkpoints_adapt_and_global_ones_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for variant in Variant::ALL {
        let out = dir.path().join(variant.name());
        let summary = train(&tiny_config(variant), 1, &out, None).unwrap();
        let ckpt = summary.checkpoints.last().unwrap();
        for (n, l, m, h) in [(4, 3, 2, 1), (2, 1, 1, 1)] {
            let mut scenario = ScenarioConfig::with_counts(n, l, m, h);
            scenario.episode_length = 25;
            let logs = out.join(format!("eval-{n}"));
            let outcome = cli_eval(ckpt, &scenario, 2, 0, Some(&logs)).unwrap();
            if variant.is_scale_bound() {
                assert!(!outcome.is_applicable(), "{variant} ran at N={n}");
                assert!(outcome.to_string().contains('-'));
            } else {
                assert!(outcome.is_applicable(), "{variant} rejected at N={n}");
                let log = read_trajectory(BufReader::new(File::open(logs.join("episode-0.jsonl")).unwrap())).unwrap();
                assert!(log.warnings.is_empty(), "{:?}", log.warnings);
                assert_eq!(log.steps.len(), 25);
                assert_eq!(log.steps[0].robots.len(), n);
            }
        }
        // The training scale itself is always accepted.
        let mut own = ScenarioConfig::with_counts(3, 2, 1, 1);
        own.episode_length = 10;
        assert!(cli_eval(ckpt, &own, 1, 0, None).unwrap().is_applicable());
    }
}

#[test]
fn replay_of_real_log_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let agent = Agent::initial(&TrainConfig::default(), 3);
    let mut scenario = ScenarioConfig::with_counts(3, 2, 1, 1);
    scenario.episode_length = 60;
    evaluate(EpisodePolicy::Agent { agent: &agent, greedy: true }, &scenario, 1, 0, Some(dir.path())).unwrap();
    let read = || read_trajectory(BufReader::new(File::open(dir.path().join("episode-0.jsonl")).unwrap())).unwrap();
    let (a, b) = (read(), read());
    let svg = render_svg(&a);
    assert_eq!(svg, render_svg(&b));
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    // One priority share per robot and step, each summing to one.
    for step in &a.steps {
        for r in &step.robots {
            assert_eq!(r.priority.len(), 4);
            let s: f64 = r.priority.iter().sum();
            assert!(s == 0.0 || (s - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn config_errors_name_the_key() {
    let text = tihdp::harness::default_config_toml();
    let missing = text.replace("k_phi = 0.1\n", "");
    assert!(parse_config(&missing).unwrap_err().to_string().contains("k_phi"));
    let bad = text.replace("num_envs = 64", "num_envs = 0");
    assert!(parse_config(&bad).unwrap_err().to_string().contains("num_envs"));
}

#[test]
fn layout_description_covers_every_vector() {
    let d = describe_layout(&ObsConfig::default(), 3, 4);
    assert_eq!((d.high.dim, d.low.dim, d.global.dim, d.baseline_global.dim), (35, 24, 61, 49));
    for layout in [&d.high, &d.low, &d.global, &d.baseline_global] {
        let mut offset = 0;
        for f in &layout.fields {
            assert_eq!(f.offset, offset, "{}", f.name);
            offset += f.len;
        }
        assert_eq!(offset, layout.dim);
    }
}
