use proptest::prelude::*;

use echovar::analysis::robust::plain_moments;
use echovar::bloch::{Phase, SequenceSpec};
use echovar::cli::io::{
    read_curve_csv, read_decay_csv, read_shots_csv, write_curve_csv, write_decay_csv, write_shots_csv,
};
use echovar::cli::io::{Curve, DecayRow, ShotTable};
use echovar::cli::presets::fig3b_config;
use echovar::cli::{dump_config, parse_config};
use echovar::echo_model::variance_estimator_sigma;
use echovar::montecarlo::{run_decay_experiment, PhaseMode, PhysicsPath, RunConfig};

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shot_tables_round_trip(shots in prop::collection::vec(prop::collection::vec(finite(), 1..20), 1..5)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("shots.csv");
        let table = ShotTable {
            delay_us: (0..shots.len()).map(|i| 0.1 * i as f64).collect(),
            shots,
        };
        write_shots_csv(&p, &table).unwrap();
        prop_assert_eq!(read_shots_csv(&p).unwrap(), table);
    }

    #[test]
    fn curves_round_trip(points in prop::collection::vec((finite(), finite(), finite()), 1..30), with_sigma: bool) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("curve.csv");
        let c = Curve {
            x: points.iter().map(|p| p.0).collect(),
            y: points.iter().map(|p| p.1).collect(),
            sigma: with_sigma.then(|| points.iter().map(|p| p.2).collect()),
        };
        write_curve_csv(&p, &c).unwrap();
        prop_assert_eq!(read_curve_csv(&p).unwrap(), c);
    }

    #[test]
    fn decay_rows_round_trip(rows in prop::collection::vec((finite(), finite(), finite(), 0usize..5000, 0usize..5000), 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("decay.csv");
        let rows: Vec<DecayRow> = rows
            .into_iter()
            .map(|(delay_us, mean, variance, n_kept, n_discarded)| DecayRow { delay_us, mean, variance, n_kept, n_discarded })
            .collect();
        write_decay_csv(&p, &rows).unwrap();
        prop_assert_eq!(read_decay_csv(&p).unwrap(), rows);
    }

    #[test]
    fn configs_round_trip(
        n in 2u64..1_000_000,
        t2 in 1e-7..1e-2f64,
        beta in 1.0..3.0f64,
        k in 0.001..1.0f64,
        t2_laser in 1e-7..1e-3f64,
        gauss in 0.0..100.0f64,
        outlier_prob in 0.0..0.5f64,
        fixed in any::<bool>(),
        psi in 0.0..6.0f64,
        ensemble in any::<bool>(),
        shots in 2usize..5000,
        seed: u64,
        delays in prop::collection::vec(0.0..1e-3f64, 1..10),
    ) {
        let mut cfg: RunConfig = fig3b_config(seed);
        cfg.ensemble.n_emitters = n;
        cfg.ensemble.t2 = t2;
        cfg.ensemble.beta = beta;
        cfg.ensemble.k = k;
        cfg.laser.t2_laser = t2_laser;
        cfg.detector.gauss_sigma = gauss;
        cfg.detector.outlier_prob = outlier_prob;
        if fixed {
            cfg.phase_mode = PhaseMode::Fixed { psi, phi: 0.0 };
            cfg.sequence = SequenceSpec::canonical_echo(0.0, Phase::fixed(psi), Phase::fixed(0.0));
            cfg.sequence.tau = None;
        }
        if ensemble {
            cfg.physics_path = PhysicsPath::Ensemble { n_detunings: 500, detuning_sigma: 1e6, rabi_spread: 0.2 };
        }
        cfg.n_shots = shots;
        cfg.delays = delays;
        let parsed = parse_config(&dump_config(&cfg)).unwrap();
        prop_assert_eq!(parsed, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn runs_are_deterministic(seed: u64) {
        let cfg = RunConfig { n_shots: 200, ..fig3b_config(seed) };
        let a = run_decay_experiment(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_decay_experiment(&cfg).unwrap());
        prop_assert_eq!(a, b);
    }
}

#[test]
fn batch_variances_scatter_as_predicted() {
    let mut cfg = fig3b_config(9);
    cfg.ensemble.k = 1.0;
    cfg.laser.t2_laser = f64::INFINITY;
    cfg.detector.outlier_prob = 0.0;
    cfg.delays = vec![50.0 * cfg.ensemble.t2];
    let (batches, n) = (200, 1800);
    cfg.n_shots = batches * n;
    let shots = &run_decay_experiment(&cfg).unwrap().shots[0];
    let vars: Vec<f64> = shots.chunks(n).map(|b| plain_moments(b).unwrap().1).collect();
    let (mean_var, var_of_vars) = plain_moments(&vars).unwrap();
    assert!((mean_var / 1250.0 - 1.0).abs() < 0.01, "{mean_var}");
    let predicted = variance_estimator_sigma(2500.0, n as u64).unwrap();
    // the std of 200 batch variances scatters by about 5% itself
    assert!(
        (var_of_vars.sqrt() / predicted - 1.0).abs() < 0.15,
        "{} vs {predicted}",
        var_of_vars.sqrt()
    );
}
