//! Scratch empirical probe (will be replaced by the acceptance suite).
use dsie_core::experiment::{compare_estimators, run_experiment, EstimatorKind, ExperimentConfig};
use dsie_core::simulation::potsdam::{attack_scenario, attack_spec, potsdam_preset};

#[test]
#[ignore]
fn probe_default_run() {
    let preset = potsdam_preset::<f64>();
    let config = ExperimentConfig {
        topology: preset.topology.clone(),
        layout: preset.full_layout(),
        bases: preset.bases,
        noise: preset.noise,
        scenario: preset.scenario.clone(),
        estimators: vec![EstimatorKind::Sie, EstimatorKind::Wls, EstimatorKind::Tse],
        assignment: None,
        attack: None,
        alpha: 0.01,
        q_tse_pu: 1e-4,
    };
    let out = run_experiment(&config).unwrap();
    for s in &out.summary.per_estimator {
        println!(
            "est={} mean={:.3e} max={:.3e} false_alarms={}",
            s.kind, s.mean_mse_pu2, s.max_mse_pu2, s.false_alarms
        );
    }
    let table = compare_estimators(&out, 5, 5).unwrap();
    println!("{table}");
    for (w, _) in table.window_peaks.iter().enumerate() {
        let r = table.peak_ratio(w, EstimatorKind::Tse, EstimatorKind::Sie);
        println!("window {w}: tse/sie peak ratio = {:?}", r);
    }
}

#[test]
#[ignore]
fn probe_attack_run() {
    let preset = potsdam_preset::<f64>();
    for seed in 1..6u64 {
        let mut noise = preset.noise;
        noise.seed = seed;
        let config = ExperimentConfig {
            topology: preset.topology.clone(),
            layout: preset.full_layout(),
            bases: preset.bases,
            noise,
            scenario: attack_scenario(1.5),
            estimators: vec![EstimatorKind::Sie, EstimatorKind::Wls, EstimatorKind::Tse],
            assignment: None,
            attack: Some(attack_spec()),
            alpha: 0.01,
            q_tse_pu: 1e-4,
        };
        let out = run_experiment(&config).unwrap();
        // pre-attack median SIE d_m and in-window max
        let sie = 0;
        let mut pre: Vec<f64> = out
            .metrics
            .iter()
            .filter(|r| r.step < 125 && r.per_estimator[sie].d_m.is_some())
            .map(|r| r.per_estimator[sie].d_m.unwrap())
            .collect();
        pre.sort_by(f64::total_cmp);
        let median = pre[pre.len() / 2];
        let inwin = out
            .metrics
            .iter()
            .filter(|r| r.attack_active)
            .filter_map(|r| r.per_estimator[sie].d_m)
            .fold(0.0f64, f64::max);
        println!("seed {seed}: sie median={median:.3e} in-window max={inwin:.3e} ratio={:.1}", inwin / median);
        for (e, s) in out.summary.per_estimator.iter().enumerate() {
            let wls_flags_total: usize = out
                .metrics
                .iter()
                .filter(|r| r.per_estimator[e].bad_data == Some(true))
                .count();
            println!(
                "  est={} latency={:?} false_alarms={} total_flags={wls_flags_total}",
                s.kind, s.detection_latency, s.false_alarms
            );
        }
    }
}
