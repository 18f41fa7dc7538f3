//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance`. The process exits nonzero if any
//! criterion fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use echovar::analysis::fit::{CosineFringe, ExponentialDecay, StretchedMeanDecay, StretchedVarianceDecay};
use echovar::analysis::lm::{Model, Problem};
use echovar::analysis::robust::plain_moments;
use echovar::analysis::{fit_stretched_variance_decay, robust_filter, BetaMode, FloorMode};
use echovar::bloch::{parse_sequence, rotate, run_sequence, BlochState, Phase, SequenceSpec};
use echovar::cli::commands::cmd_simulate;
use echovar::cli::pipeline::{laser_contrast_scan, lifetime_fit, reference_fringe, reference_variance_decay};
use echovar::cli::presets::{fig3b_config, REFERENCE};
use echovar::echo_model::{
    direct_echo_intensity, min_detectable_emitters, EnsembleParams, LaserParams, SensitivityParams,
};
use echovar::montecarlo::{
    excited_population_analytic, excited_population_ensemble, run_decay_experiment, DetectorParams, PhaseMode,
    PhysicsPath, RunConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn moments(x: &[f64]) -> (f64, f64) {
    plain_moments(x).expect("at least two samples")
}

fn base_config(mode: PhaseMode) -> RunConfig {
    let (second, third) = match mode {
        PhaseMode::Random => (Phase::Random, Phase::Random),
        PhaseMode::Fixed { psi, phi } => (Phase::fixed(psi), Phase::fixed(phi)),
    };
    let mut sequence = SequenceSpec::canonical_echo(0.0, second, third);
    sequence.tau = None;
    RunConfig {
        ensemble: EnsembleParams {
            n_emitters: 2500,
            t2: REFERENCE.t2,
            beta: 1.0,
            t1: REFERENCE.t1,
            a_sp: REFERENCE.a_sp,
            k: 1.0,
        },
        laser: LaserParams {
            t2_laser: f64::INFINITY,
        },
        detector: DetectorParams::ideal(),
        sequence,
        phase_mode: mode,
        physics_path: PhysicsPath::Analytic,
        n_shots: 1000,
        seed: 0,
        delays: vec![0.0],
        repetition_rate: REFERENCE.repetition_rate,
    }
}

fn random_phase_oracle() -> Outcome {
    let mut cfg = base_config(PhaseMode::Random);
    let t2 = cfg.ensemble.t2;
    cfg.delays = vec![0.0, t2 / 2.0, t2, 2.0 * t2];
    cfg.n_shots = 100_000;
    let n = cfg.ensemble.n_emitters as f64;
    let data = run_decay_experiment(&cfg).unwrap();
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for (two_tau, shots) in data.delays.iter().zip(&data.shots) {
        let (m, v) = moments(shots);
        let expected_var = n * n * (-2.0 * two_tau / t2).exp() / 8.0;
        worst_mean = worst_mean.max((m / (n / 2.0) - 1.0).abs());
        worst_var = worst_var.max((v / expected_var - 1.0).abs());
    }
    outcome(
        worst_mean < 0.005 && worst_var < 0.02,
        format!(
            "max |mean/(N/2)-1| = {:.4}%, max |var/oracle-1| = {:.3}%",
            100.0 * worst_mean,
            100.0 * worst_var
        ),
    )
}

/// Runs the replica pipeline once per seed and checks recovery and bookkeeping.
fn replica_runs() -> (Outcome, Outcome) {
    let mut hits = 0;
    let mut lines = Vec::new();
    let mut discards = Vec::new();
    for seed in 1..=10u64 {
        let r = reference_variance_decay(seed).unwrap();
        let t2_us = r.fit.value("t2") * 1e6;
        let gamma_khz = r.fit.value("gamma_h") / 1e3;
        let ok = (35.0..=39.0).contains(&t2_us) && (8.2..=9.0).contains(&gamma_khz);
        hits += ok as usize;
        lines.push(format!("{t2_us:.1}/{gamma_khz:.2}{}", if ok { "" } else { "*" }));
        discards.extend(r.analysis.rows.iter().map(|row| row.n_discarded));
    }
    let in_band = discards.iter().filter(|d| (160..=240).contains(*d)).count();
    let frac = in_band as f64 / discards.len() as f64;
    let (lo, hi) = (discards.iter().min().unwrap(), discards.iter().max().unwrap());
    (
        outcome(
            hits >= 8,
            format!(
                "{hits}/10 seeds in band; T2 us / Gamma_h kHz per seed: {}",
                lines.join(" ")
            ),
        ),
        outcome(
            frac >= 0.95,
            format!(
                "{in_band}/{} delays with n_discarded in [160, 240] (range {lo}..{hi})",
                discards.len()
            ),
        ),
    )
}

fn sensitivity_numbers() -> Outcome {
    let s = SensitivityParams {
        k: REFERENCE.k,
        n_shots: REFERENCE.kept_shots,
        tau_echo: REFERENCE.tau_echo,
        a_sp: REFERENCE.a_sp,
    };
    let n_min = min_detectable_emitters(&s, 1.0).unwrap();
    let n = REFERENCE.n_emitters as f64;
    let ratio = (n / 2.0) / direct_echo_intensity(n, REFERENCE.a_sp, REFERENCE.tau_echo).unwrap();
    outcome(
        n_min == 84 && (ratio - 37.0).abs() <= 0.1,
        format!("N_min = {n_min}, I_fluo/I_echo at N=2500 = {ratio:.3}"),
    )
}

fn laser_coherence() -> Outcome {
    let two_tau: Vec<f64> = (0..16).map(|i| 2e-6 * i as f64).collect();
    let r = laser_contrast_scan(0, REFERENCE.t2_laser, 10_000, &two_tau).unwrap();
    let t = r.fit.value("lifetime");
    outcome(
        (t / REFERENCE.t2_laser - 1.0).abs() <= 0.1,
        format!(
            "T2_laser = {:.2} +- {:.2} us (truth 15 us)",
            t * 1e6,
            r.fit.sigma("lifetime") * 1e6
        ),
    )
}

fn fringe_contrast() -> Outcome {
    let f = reference_fringe(0).unwrap();
    let c = f.fit.value("contrast");
    outcome(
        (0.07..=0.09).contains(&c),
        format!("2A/C = {c:.4} +- {:.4}", f.fit.sigma("contrast")),
    )
}

fn lifetime() -> Outcome {
    let r = lifetime_fit(0).unwrap();
    let t1 = r.fit.value("lifetime") * 1e3;
    outcome(
        (10.8..=11.2).contains(&t1),
        format!("T1 = {t1:.3} +- {:.3} ms", r.fit.sigma("lifetime") * 1e3),
    )
}

fn ensemble_vs_analytic() -> Outcome {
    let mut worst: f64 = 0.0;
    for beta in [1.0, 2.0] {
        let mut cfg = base_config(PhaseMode::Fixed {
            psi: FRAC_PI_2,
            phi: 0.0,
        });
        cfg.ensemble.beta = beta;
        cfg.physics_path = PhysicsPath::Ensemble {
            n_detunings: 10_000,
            detuning_sigma: 2.0 * PI * 1e6,
            rabi_spread: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for i in 0..10 {
            let two_tau = 0.3 * REFERENCE.t2 * i as f64;
            for (psi, phi) in [(FRAC_PI_2, 0.0), (FRAC_PI_2, 2.0)] {
                let ens = excited_population_ensemble(&cfg, two_tau, psi, phi, &mut rng).unwrap();
                let ana = excited_population_analytic(&cfg, two_tau, psi, phi).unwrap();
                worst = worst.max((ens / ana - 1.0).abs());
            }
        }
    }
    outcome(
        worst < 0.01,
        format!(
            "max relative deviation {:.3}% over 10 delays, beta 1 and 2",
            100.0 * worst
        ),
    )
}

fn shot_noise_statistics() -> Outcome {
    let mut cfg = base_config(PhaseMode::Random);
    cfg.detector.shot_noise = true;
    cfg.delays = vec![20.0 * cfg.ensemble.t2];
    let (batches, n) = (200usize, 1800usize);
    cfg.n_shots = batches * n;
    let shots = &run_decay_experiment(&cfg).unwrap().shots[0];
    let n_emitters = cfg.ensemble.n_emitters as f64;
    let (_, floor) = moments(shots);
    let batch_vars: Vec<f64> = shots.chunks(n).map(|b| moments(b).1).collect();
    let (_, var_of_vars) = moments(&batch_vars);
    let predicted = n_emitters / (2.0 * n as f64).sqrt();
    let floor_err = floor / (n_emitters / 2.0) - 1.0;
    let std_err = var_of_vars.sqrt() / predicted - 1.0;
    outcome(
        floor_err.abs() <= 0.02 && std_err.abs() <= 0.05,
        format!(
            "floor {floor:.1} vs N/2 ({:+.2}%), batch std {:.2} vs N/sqrt(2n) = {predicted:.2} ({:+.2}%)",
            100.0 * floor_err,
            var_of_vars.sqrt(),
            100.0 * std_err
        ),
    )
}

fn gradient_check<M: Model>(m: &M, x: &[f64], truth: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    let y: Vec<f64> = x
        .iter()
        .map(|x| m.eval(*x, truth) * (1.0 + 0.05 * rng.random_range(-1.0..1.0)))
        .collect();
    let free = vec![true; truth.len()];
    let problem = Problem {
        model: m,
        x,
        y: &y,
        weights: None,
        free: &free,
    };
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p: Vec<f64> = truth.iter().map(|v| v * rng.random_range(0.7..1.3)).collect();
        let g = problem.gradient(&p);
        let fd: Vec<f64> = (0..p.len())
            .map(|j| {
                let h = 1e-6 * p[j].abs();
                let (mut a, mut b) = (p.clone(), p.clone());
                a[j] += h;
                b[j] -= h;
                (problem.objective(&a) - problem.objective(&b)) / (2.0 * h)
            })
            .collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
    }
    worst
}

fn property_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut failures = Vec::new();

    let mut norm_err: f64 = 0.0;
    for _ in 0..1000 {
        let v: [f64; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-3);
        let s = BlochState::new(v[0] / len, v[1] / len, v[2] / len).unwrap();
        let r = rotate(s, rng.random_range(0.0..4.0 * PI), rng.random_range(0.0..2.0 * PI)).unwrap();
        norm_err = norm_err.max((r.norm() - s.norm()).abs());
    }
    if norm_err > 1e-12 {
        failures.push(format!("norm drift {norm_err:e}"));
    }

    let echo = SequenceSpec::canonical_echo(5e-6, Phase::fixed(FRAC_PI_2), Phase::fixed(0.0));
    let mut rephase_err: f64 = 0.0;
    for _ in 0..200 {
        let det = rng.random_range(-1e8..1e8);
        let s = run_sequence(BlochState::GROUND, &echo, det, f64::INFINITY, f64::INFINITY).unwrap();
        rephase_err = rephase_err.max((s.excited_population() - 1.0).abs());
    }
    if rephase_err > 1e-9 {
        failures.push(format!("rephasing error {rephase_err:e}"));
    }

    for text in [
        "P(0.5pi,X); D(tau); P(1pi,rand); D(tau); P(0.5pi,rand)",
        "P(0.5pi,X); D(1.5us); P(1pi,Y); D(tau); P(0.5pi,0.3rad)",
        "P(0.25pi,Y); D(2ms)",
    ] {
        let s = parse_sequence(text, Some(1e-6)).unwrap();
        if parse_sequence(&s.to_string(), Some(1e-6)).unwrap() != s {
            failures.push(format!("round trip of `{text}`"));
        }
    }

    let noise = Normal::new(1250.0, 35.0).unwrap();
    for _ in 0..20 {
        let mut x: Vec<f64> = (0..2000).map(|_| noise.sample(&mut rng)).collect();
        for v in x.iter_mut().take(200) {
            *v *= 20.0;
        }
        let (first, kept) = robust_filter(&x, 5.0).unwrap();
        let (second, _) = robust_filter(&kept, 5.0).unwrap();
        if second.n_discarded != 0 || second.mean != first.mean {
            failures.push("robust rejection is not idempotent".into());
            break;
        }
    }

    let lin = |a: f64, b: f64, n: usize| {
        (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect::<Vec<f64>>()
    };
    let t = lin(0.0, 40e-3, 25);
    let x = lin(0.0, 100e-6, 25);
    let phi = lin(0.0, 2.0 * PI, 25);
    let grad = [
        gradient_check(&ExponentialDecay, &t, &[500.0, 11e-3, 20.0], &mut rng),
        gradient_check(&StretchedVarianceDecay, &x, &[7800.0, 37e-6, 2.0, 1250.0], &mut rng),
        gradient_check(&StretchedMeanDecay, &x, &[1250.0, 50.0, 37e-6, 1.5], &mut rng),
        gradient_check(&CosineFringe, &phi, &[1250.0, 50.0, 0.4], &mut rng),
    ];
    let worst_grad = grad.iter().cloned().fold(0.0, f64::max);
    if worst_grad > 1e-5 {
        failures.push(format!("gradient mismatch {worst_grad:e}"));
    }

    let axis = lin(0.0, 80e-6, 21);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let pulls: Vec<f64> = (0..200)
        .map(|_| {
            let clean: Vec<f64> = axis
                .iter()
                .map(|x| 1250.0 * (-2.0 * (x / 37e-6).powi(2)).exp() + 1250.0)
                .collect();
            let sig: Vec<f64> = clean.iter().map(|v| v * (2.0 / 1799.0f64).sqrt()).collect();
            let y: Vec<f64> = clean
                .iter()
                .zip(&sig)
                .map(|(c, s)| c + s * std_normal.sample(&mut rng))
                .collect();
            let r = fit_stretched_variance_decay(&axis, &y, BetaMode::Fixed(2.0), FloorMode::Fixed(1250.0), Some(&sig))
                .unwrap();
            (r.value("t2") - 37e-6) / r.sigma("t2")
        })
        .collect();
    let pull_sd = moments(&pulls).1.sqrt();
    if !(0.7..=1.3).contains(&pull_sd) {
        failures.push(format!("pull std {pull_sd:.3}"));
    }

    let cfg = RunConfig {
        n_shots: 500,
        ..fig3b_config(4)
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    cmd_simulate(&cfg, dirs[0].path(), None).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| cmd_simulate(&cfg, dirs[1].path(), None)).unwrap();
    for name in ["shots.csv", "manifest.json"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        if a != b {
            failures.push(format!("{name} differs between runs"));
        }
    }

    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "norm {norm_err:.1e}, rephasing {rephase_err:.1e}, gradients {worst_grad:.1e}, pull std {pull_sd:.3}, determinism ok"
            )
        } else {
            failures.join("; ")
        },
    )
}

fn report(id: usize, name: &str, elapsed: Duration, limit: Option<Duration>, o: &Outcome) -> bool {
    let within = limit.is_none_or(|l| elapsed <= l);
    let pass = o.pass && within;
    let timing = match limit {
        Some(l) => format!("{:.1}s, limit {}s", elapsed.as_secs_f64(), l.as_secs()),
        None => format!("{:.1}s", elapsed.as_secs_f64()),
    };
    println!(
        "{} [{id:>2}] {name}: {} ({timing})",
        if pass { "PASS" } else { "FAIL" },
        o.detail
    );
    pass
}

fn run(id: usize, name: &str, limit: Option<u64>, f: fn() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    report(id, name, start.elapsed(), limit.map(Duration::from_secs), &o)
}

fn main() {
    let mut results = vec![run(
        1,
        "random-phase moments vs closed form",
        Some(30),
        random_phase_oracle,
    )];

    let start = Instant::now();
    let (recovery, bookkeeping) = replica_runs();
    let elapsed = start.elapsed();
    results.push(report(
        2,
        "T2 recovery through the replica pipeline",
        elapsed,
        Some(Duration::from_secs(120)),
        &recovery,
    ));
    results.push(report(3, "outlier bookkeeping", elapsed, None, &bookkeeping));

    results.push(run(4, "sensitivity numbers", None, sensitivity_numbers));
    results.push(run(5, "laser coherence recovery", Some(60), laser_coherence));
    results.push(run(6, "fringe contrast", None, fringe_contrast));
    results.push(run(7, "T1 fit", None, lifetime));
    results.push(run(8, "ensemble path vs analytic", Some(120), ensemble_vs_analytic));
    results.push(run(9, "shot-noise statistics", None, shot_noise_statistics));
    results.push(run(10, "property suite", None, property_suite));

    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
