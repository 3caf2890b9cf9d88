use pulltrack::experiment::{run_point, ExperimentSpec};
use pulltrack::*;

fn fig3_config(gamma: f64) -> SimConfig {
    SimConfig::new(SourceParams::new(2, 0.8, 0.5, 0.4), 0.8, gamma)
}

fn point(policy: PolicyKind, base: SimConfig) -> ExperimentSpec {
    ExperimentSpec {
        base,
        depth: 6,
        policy,
        sweep: None,
        seeds: (1..=10).collect(),
        solver: SolverConfig::default(),
        out: None,
        cache_dir: None,
    }
}

#[test]
fn maf_long_run_reference() {
    let cfg = SimConfig {
        horizon: 1_000_000,
        ..fig3_config(0.0)
    };
    let r = run_episode(&cfg, &Policy::Maf).unwrap();
    assert!((r.avg_cost - 0.3805).abs() < 0.01, "{}", r.avg_cost);
}

#[test]
fn ten_seeds_give_small_standard_error() {
    let seeds: Vec<u64> = (1..=10).collect();
    let maf = run_replications(&fig3_config(0.15), &Policy::Maf, &seeds).unwrap();
    assert!(maf.stderr_cost < 0.005, "{}", maf.stderr_cost);
    let row = run_point(&point(PolicyKind::Pomdp, fig3_config(0.15)), None).unwrap();
    assert!(row.stderr_cost < 0.005, "{}", row.stderr_cost);
}

#[test]
fn single_seed_aggregate_is_the_episode() {
    let cfg = SimConfig {
        horizon: 10_000,
        seed: 42,
        ..fig3_config(0.1)
    };
    let episode = run_episode(&cfg, &Policy::Maf).unwrap();
    let agg = run_replications(&cfg, &Policy::Maf, &[42]).unwrap();
    assert_eq!(agg.mean_cost, episode.avg_cost);
    assert_eq!(agg.stderr_cost, 0.0);
    assert_eq!(agg.runs.len(), 1);
}

#[test]
fn reference_points() {
    let maf = SimConfig::new(SourceParams::new(2, 0.8, 0.5, 0.9), 0.8, 0.15);
    let row = run_point(&point(PolicyKind::Maf, maf), None).unwrap();
    assert!((row.mean_cost - 0.4928).abs() < 0.01, "{}", row.mean_cost);

    let pomdp = SimConfig::new(SourceParams::new(2, 0.8, 0.5, 0.6), 1.0, 0.05);
    let row = run_point(&point(PolicyKind::Pomdp, pomdp), None).unwrap();
    assert!((row.mean_cost - 0.3997).abs() < 0.01, "{}", row.mean_cost);
    assert_eq!(row.converged, Some(true));
}

#[test]
fn pomdp_beats_always_transmitting_when_updates_are_expensive() {
    let cfg = fig3_config(0.2);
    let seeds = [1, 2, 3];
    let maf = run_replications(&cfg, &Policy::Maf, &seeds).unwrap();
    let row = run_point(
        &ExperimentSpec {
            seeds: seeds.to_vec(),
            ..point(PolicyKind::Pomdp, cfg)
        },
        None,
    )
    .unwrap();
    assert!(row.mean_cost < maf.mean_cost);
    assert!(row.mean_transmissions < 1.0);
}
