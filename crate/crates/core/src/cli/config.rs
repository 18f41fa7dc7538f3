//! Run configuration files.
//!
//! A flat `key = value` format split into sections:
//!
//! ```text
//! [ensemble]
//! N = 2500
//! T2 = 37us
//! beta = 2
//!
//! [sequence]
//! pulses = P(0.5pi,X); D(tau); P(1pi,rand); D(tau); P(0.5pi,rand)
//!
//! [run]
//! delays = linspace(0us, 80us, 21)
//! ```
//!
//! Times take a unit among `s`, `ms`, `us`, `µs`, `ns`; rates among `Hz`,
//! `kHz`, `MHz`. `#` starts a comment. Unknown sections or keys are errors.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use crate::bloch::{parse_sequence, SequenceSpec};
use crate::echo_model::{EnsembleParams, LaserParams};
use crate::error::{Error, Result};
use crate::montecarlo::{DetectorParams, PhaseMode, PhysicsPath, RunConfig};

const DEFAULT_SEQUENCE: &str = "P(0.5pi,X); D(tau); P(1pi,rand); D(tau); P(0.5pi,rand)";

#[derive(Clone, Copy)]
enum Kind {
    Time,
    TimeOrInf,
    Rate,
    /// Angular frequency given as `rad/s` or as a frequency in Hz.
    Angular,
    Count,
    Float,
    Bool,
    Text,
    Delays,
}

struct Key {
    section: &'static str,
    name: &'static str,
    kind: Kind,
    default: Option<&'static str>,
}

const fn key(section: &'static str, name: &'static str, kind: Kind, default: Option<&'static str>) -> Key {
    Key {
        section,
        name,
        kind,
        default,
    }
}

const KEYS: &[Key] = &[
    key("ensemble", "N", Kind::Count, None),
    key("ensemble", "T2", Kind::Time, None),
    key("ensemble", "beta", Kind::Float, Some("1")),
    key("ensemble", "T1", Kind::Time, Some("11ms")),
    key("ensemble", "A_sp", Kind::Rate, Some("27Hz")),
    key("ensemble", "k", Kind::Float, Some("1")),
    key("laser", "T2_laser", Kind::TimeOrInf, Some("inf")),
    key("detector", "efficiency", Kind::Float, Some("1")),
    key("detector", "gauss_sigma", Kind::Float, Some("0")),
    key("detector", "dark_mean", Kind::Float, Some("0")),
    key("detector", "gate_delay", Kind::Time, Some("0s")),
    key("detector", "gate_width", Kind::TimeOrInf, Some("inf")),
    key("detector", "outlier_prob", Kind::Float, Some("0")),
    key("detector", "outlier_scale", Kind::Float, Some("20")),
    key("detector", "shot_noise", Kind::Bool, Some("true")),
    key("sequence", "pulses", Kind::Text, Some(DEFAULT_SEQUENCE)),
    key("sequence", "physics", Kind::Text, Some("analytic")),
    key("sequence", "n_detunings", Kind::Count, Some("1000")),
    key("sequence", "detuning_sigma", Kind::Angular, Some("1MHz")),
    key("sequence", "rabi_spread", Kind::Float, Some("0")),
    key("run", "shots", Kind::Count, Some("2000")),
    key("run", "seed", Kind::Count, Some("0")),
    key("run", "delays", Kind::Delays, None),
    key("run", "repetition_rate", Kind::Rate, Some("10Hz")),
];

const TIME_UNITS: &[(&str, f64)] = &[("ms", 1e-3), ("us", 1e-6), ("µs", 1e-6), ("ns", 1e-9), ("s", 1.0)];
const RATE_UNITS: &[(&str, f64)] = &[("kHz", 1e3), ("MHz", 1e6), ("Hz", 1.0)];

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Number(f64),
    Count(u64),
    Bool(bool),
    Text(String),
    List(Vec<f64>),
}

struct Entry {
    line: usize,
    value: Value,
}

fn cfg_err(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

fn with_unit(text: &str, units: &[(&str, f64)]) -> Option<f64> {
    units.iter().find_map(|(u, factor)| {
        let number = text.strip_suffix(u)?.trim();
        number.parse::<f64>().ok().map(|v| v * factor)
    })
}

fn parse_time(text: &str) -> std::result::Result<f64, String> {
    with_unit(text, TIME_UNITS).ok_or_else(|| format!("expected a time with unit s, ms, us or ns, got `{text}`"))
}

fn parse_value(kind: Kind, text: &str) -> std::result::Result<Value, String> {
    match kind {
        Kind::Time => parse_time(text).map(Value::Number),
        Kind::TimeOrInf => {
            if text == "inf" {
                Ok(Value::Number(f64::INFINITY))
            } else {
                parse_time(text).map(Value::Number)
            }
        }
        Kind::Rate => with_unit(text, RATE_UNITS)
            .map(Value::Number)
            .ok_or_else(|| format!("expected a rate with unit Hz, kHz or MHz, got `{text}`")),
        Kind::Angular => {
            if let Some(v) = text.strip_suffix("rad/s").and_then(|n| n.trim().parse::<f64>().ok()) {
                return Ok(Value::Number(v));
            }
            with_unit(text, RATE_UNITS)
                .map(|hz| Value::Number(TAU * hz))
                .ok_or_else(|| format!("expected rad/s or a frequency in Hz, got `{text}`"))
        }
        Kind::Count => text
            .parse::<u64>()
            .map(Value::Count)
            .map_err(|_| format!("expected a non-negative integer, got `{text}`")),
        Kind::Float => text
            .parse::<f64>()
            .map(Value::Number)
            .map_err(|_| format!("expected a number, got `{text}`")),
        Kind::Bool => match text {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(format!("expected true or false, got `{text}`")),
        },
        Kind::Text => Ok(Value::Text(text.to_string())),
        Kind::Delays => parse_delays(text).map(Value::List),
    }
}

/// `linspace(a, b, n)` or a comma-separated list of times.
fn parse_delays(text: &str) -> std::result::Result<Vec<f64>, String> {
    if let Some(inner) = text.strip_prefix("linspace(").and_then(|t| t.strip_suffix(')')) {
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        let [a, b, n] = parts[..] else {
            return Err("linspace takes (start, stop, count)".into());
        };
        let (a, b) = (parse_time(a)?, parse_time(b)?);
        let n: usize = n.parse().map_err(|_| format!("bad linspace count `{n}`"))?;
        if n < 2 {
            return Err("linspace count must be >= 2".into());
        }
        return Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect());
    }
    text.split(',').map(|t| parse_time(t.trim())).collect()
}

/// Parses configuration text into a validated [`RunConfig`].
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut entries: BTreeMap<(&'static str, &'static str), Entry> = BTreeMap::new();
    let mut section_lines: BTreeMap<String, usize> = BTreeMap::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !KEYS.iter().any(|k| k.section == name) {
                return Err(cfg_err(line_no, name, "unknown section"));
            }
            if section_lines.insert(name.to_string(), line_no).is_some() {
                return Err(cfg_err(line_no, name, "duplicate section"));
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(cfg_err(line_no, line, "expected `key = value`"));
        };
        let (k, v) = (k.trim(), v.trim());
        let Some(sec) = &section else {
            return Err(cfg_err(line_no, k, "key outside of any section"));
        };
        let spec = KEYS
            .iter()
            .find(|s| s.section == sec && s.name == k)
            .ok_or_else(|| cfg_err(line_no, k, format!("unknown key in [{sec}]")))?;
        let value = parse_value(spec.kind, v).map_err(|m| cfg_err(line_no, k, m))?;
        if entries
            .insert((spec.section, spec.name), Entry { line: line_no, value })
            .is_some()
        {
            return Err(cfg_err(line_no, k, "duplicate key"));
        }
    }
    for spec in KEYS {
        if entries.contains_key(&(spec.section, spec.name)) {
            continue;
        }
        let line = section_lines.get(spec.section).copied().unwrap_or(0);
        let default = spec
            .default
            .ok_or_else(|| cfg_err(line, spec.name, format!("missing required key in [{}]", spec.section)))?;
        let value = parse_value(spec.kind, default).expect("defaults parse");
        entries.insert((spec.section, spec.name), Entry { line: 0, value });
    }
    build(&entries)
}

fn build(entries: &BTreeMap<(&'static str, &'static str), Entry>) -> Result<RunConfig> {
    let get = |section: &'static str, name: &'static str| -> &Entry { &entries[&(section, name)] };
    let num = |section, name| match get(section, name).value {
        Value::Number(v) => v,
        _ => unreachable!("numeric key"),
    };
    let count = |section, name| match get(section, name).value {
        Value::Count(v) => v,
        _ => unreachable!("count key"),
    };
    let text = |section, name| match &get(section, name).value {
        Value::Text(v) => v.clone(),
        _ => unreachable!("text key"),
    };
    let check = |section: &'static str, name: &'static str, ok: bool, rule: &str| -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(cfg_err(get(section, name).line, name, rule))
        }
    };

    let ensemble = EnsembleParams {
        n_emitters: count("ensemble", "N"),
        t2: num("ensemble", "T2"),
        beta: num("ensemble", "beta"),
        t1: num("ensemble", "T1"),
        a_sp: num("ensemble", "A_sp"),
        k: num("ensemble", "k"),
    };
    check("ensemble", "N", ensemble.n_emitters >= 2, "must be >= 2")?;
    check(
        "ensemble",
        "T2",
        ensemble.t2 > 0.0 && ensemble.t2.is_finite(),
        "must be > 0",
    )?;
    check(
        "ensemble",
        "beta",
        ensemble.beta >= 1.0 && ensemble.beta.is_finite(),
        "must be >= 1",
    )?;
    check(
        "ensemble",
        "T1",
        ensemble.t1 > 0.0 && ensemble.t1.is_finite(),
        "must be > 0",
    )?;
    check(
        "ensemble",
        "A_sp",
        ensemble.a_sp > 0.0 && ensemble.a_sp.is_finite(),
        "must be > 0",
    )?;
    check(
        "ensemble",
        "k",
        ensemble.k > 0.0 && ensemble.k <= 1.0,
        "must lie in (0, 1]",
    )?;

    let laser = LaserParams {
        t2_laser: num("laser", "T2_laser"),
    };
    check("laser", "T2_laser", laser.t2_laser > 0.0, "must be > 0")?;

    let shot_noise = match get("detector", "shot_noise").value {
        Value::Bool(b) => b,
        _ => unreachable!("bool key"),
    };
    let detector = DetectorParams {
        efficiency: num("detector", "efficiency"),
        gauss_sigma: num("detector", "gauss_sigma"),
        dark_mean: num("detector", "dark_mean"),
        gate_delay: num("detector", "gate_delay"),
        gate_width: num("detector", "gate_width"),
        outlier_prob: num("detector", "outlier_prob"),
        outlier_scale: num("detector", "outlier_scale"),
        shot_noise,
    };
    check(
        "detector",
        "efficiency",
        (0.0..=1.0).contains(&detector.efficiency),
        "must lie in [0, 1]",
    )?;
    check(
        "detector",
        "gauss_sigma",
        detector.gauss_sigma >= 0.0 && detector.gauss_sigma.is_finite(),
        "must be >= 0",
    )?;
    check(
        "detector",
        "dark_mean",
        detector.dark_mean >= 0.0 && detector.dark_mean.is_finite(),
        "must be >= 0",
    )?;
    check(
        "detector",
        "gate_delay",
        detector.gate_delay >= 0.0 && detector.gate_delay.is_finite(),
        "must be >= 0",
    )?;
    check("detector", "gate_width", detector.gate_width > 0.0, "must be > 0")?;
    check(
        "detector",
        "outlier_prob",
        (0.0..1.0).contains(&detector.outlier_prob),
        "must lie in [0, 1)",
    )?;
    check(
        "detector",
        "outlier_scale",
        detector.outlier_prob == 0.0 || (detector.outlier_scale > 5.0 && detector.outlier_scale.is_finite()),
        "must be > 5 when outlier_prob > 0",
    )?;

    let pulses_line = get("sequence", "pulses").line;
    // `D(tau)` stays symbolic; each run delay binds it.
    let mut sequence: SequenceSpec = parse_sequence(&text("sequence", "pulses"), Some(0.0))
        .map_err(|e| cfg_err(pulses_line, "pulses", e.to_string()))?;
    sequence.tau = None;
    if !sequence.is_canonical_echo() {
        return Err(cfg_err(
            pulses_line,
            "pulses",
            "must be a three-pulse echo with two equal delays",
        ));
    }
    let phase_mode = PhaseMode::from_sequence(&sequence).map_err(|e| cfg_err(pulses_line, "pulses", e.to_string()))?;

    let physics_path = match text("sequence", "physics").as_str() {
        "analytic" => PhysicsPath::Analytic,
        "ensemble" => {
            let n_detunings = count("sequence", "n_detunings");
            let detuning_sigma = num("sequence", "detuning_sigma");
            let rabi_spread = num("sequence", "rabi_spread");
            check("sequence", "n_detunings", n_detunings > 0, "must be > 0")?;
            check(
                "sequence",
                "detuning_sigma",
                detuning_sigma >= 0.0 && detuning_sigma.is_finite(),
                "must be >= 0",
            )?;
            check(
                "sequence",
                "rabi_spread",
                rabi_spread >= 0.0 && rabi_spread.is_finite(),
                "must be >= 0",
            )?;
            PhysicsPath::Ensemble {
                n_detunings: n_detunings as usize,
                detuning_sigma,
                rabi_spread,
            }
        }
        other => {
            return Err(cfg_err(
                get("sequence", "physics").line,
                "physics",
                format!("expected analytic or ensemble, got `{other}`"),
            ))
        }
    };

    let n_shots = count("run", "shots");
    check(
        "run",
        "shots",
        (2..=u32::MAX as u64).contains(&n_shots),
        "must lie in [2, 2^32)",
    )?;
    let delays = match &get("run", "delays").value {
        Value::List(v) => v.clone(),
        _ => unreachable!("delay list"),
    };
    check(
        "run",
        "delays",
        !delays.is_empty() && delays.iter().all(|d| *d >= 0.0 && d.is_finite()),
        "must be finite and >= 0",
    )?;
    let repetition_rate = num("run", "repetition_rate");
    check(
        "run",
        "repetition_rate",
        repetition_rate > 0.0 && repetition_rate.is_finite(),
        "must be > 0",
    )?;

    let cfg = RunConfig {
        ensemble,
        laser,
        detector,
        sequence,
        phase_mode,
        physics_path,
        n_shots: n_shots as usize,
        seed: count("run", "seed"),
        delays,
        repetition_rate,
    };
    cfg.validate().map_err(|e| cfg_err(0, "", e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn time(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}s")
    }
}

/// Writes every key explicitly; [`parse_config`] of the output reproduces `cfg`.
pub fn dump_config(cfg: &RunConfig) -> String {
    let e = &cfg.ensemble;
    let d = &cfg.detector;
    let mut s = String::new();
    let _ = writeln!(s, "[ensemble]");
    let _ = writeln!(s, "N = {}", e.n_emitters);
    let _ = writeln!(s, "T2 = {}", time(e.t2));
    let _ = writeln!(s, "beta = {}", e.beta);
    let _ = writeln!(s, "T1 = {}", time(e.t1));
    let _ = writeln!(s, "A_sp = {}Hz", e.a_sp);
    let _ = writeln!(s, "k = {}", e.k);
    let _ = writeln!(s, "\n[laser]");
    let _ = writeln!(s, "T2_laser = {}", time(cfg.laser.t2_laser));
    let _ = writeln!(s, "\n[detector]");
    let _ = writeln!(s, "efficiency = {}", d.efficiency);
    let _ = writeln!(s, "gauss_sigma = {}", d.gauss_sigma);
    let _ = writeln!(s, "dark_mean = {}", d.dark_mean);
    let _ = writeln!(s, "gate_delay = {}", time(d.gate_delay));
    let _ = writeln!(s, "gate_width = {}", time(d.gate_width));
    let _ = writeln!(s, "outlier_prob = {}", d.outlier_prob);
    let _ = writeln!(s, "outlier_scale = {}", d.outlier_scale);
    let _ = writeln!(s, "shot_noise = {}", d.shot_noise);
    let _ = writeln!(s, "\n[sequence]");
    let _ = writeln!(s, "pulses = {}", cfg.sequence);
    match cfg.physics_path {
        PhysicsPath::Analytic => {
            let _ = writeln!(s, "physics = analytic");
        }
        PhysicsPath::Ensemble {
            n_detunings,
            detuning_sigma,
            rabi_spread,
        } => {
            let _ = writeln!(s, "physics = ensemble");
            let _ = writeln!(s, "n_detunings = {n_detunings}");
            let _ = writeln!(s, "detuning_sigma = {detuning_sigma}rad/s");
            let _ = writeln!(s, "rabi_spread = {rabi_spread}");
        }
    }
    let _ = writeln!(s, "\n[run]");
    let _ = writeln!(s, "shots = {}", cfg.n_shots);
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let delays: Vec<String> = cfg.delays.iter().map(|d| time(*d)).collect();
    let _ = writeln!(s, "delays = {}", delays.join(", "));
    let _ = writeln!(s, "repetition_rate = {}Hz", cfg.repetition_rate);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[ensemble]\nN = 2500\nT2 = 37us\n\n[run]\ndelays = 0us, 10us\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.ensemble.n_emitters, 2500);
        assert!((c.ensemble.t2 - 37e-6).abs() < 1e-18);
        assert_eq!(c.ensemble.beta, 1.0);
        assert_eq!(c.n_shots, 2000);
        assert_eq!(c.phase_mode, PhaseMode::Random);
        assert_eq!(c.physics_path, PhysicsPath::Analytic);
        assert!(c.laser.t2_laser.is_infinite());
        assert_eq!(c.delays.len(), 2);
    }

    #[test]
    fn negative_t2_names_key_and_rule() {
        let err = parse_config("[ensemble]\nN = 2500\nT2 = -1us\n[run]\ndelays = 0us\n").unwrap_err();
        match err {
            Error::Config { line, key, message } => {
                assert_eq!((line, key.as_str()), (3, "T2"));
                assert!(message.contains("> 0"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_cite_lines() {
        let cases = [
            ("[ensemble]\nN = 2500\nT2 = 37\n", 3, "T2"),
            ("[ensemble]\nN = 2500\nT2 = 37us\nbogus = 1\n", 4, "bogus"),
            ("[nope]\n", 1, "nope"),
            ("N = 3\n", 1, "N"),
            ("[ensemble]\nT2 = 37us\n[run]\ndelays = 0us\n", 1, "N"),
            ("[ensemble]\nN = 2500\nT2 = 37us\n[run]\n", 4, "delays"),
            ("[ensemble]\nN = 2500\nN = 2\n", 3, "N"),
        ];
        for (text, line, key) in cases {
            match parse_config(text).unwrap_err() {
                Error::Config { line: l, key: k, .. } => assert_eq!((l, k.as_str()), (line, key), "{text}"),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let text = "[ensemble]\nN = 2500 # ions\nT2 = 37us\nbeta = 2\nk = 0.04\nA_sp = 27Hz\n\
                    [laser]\nT2_laser = 15us\n\
                    [detector]\nefficiency = 0.5\ngate_delay = 3ms\ngate_width = 40ms\noutlier_prob = 0.1\n\
                    [sequence]\npulses = P(0.5pi,X); D(tau); P(1pi,Y); D(tau); P(0.5pi,0.3rad)\n\
                    physics = ensemble\ndetuning_sigma = 2kHz\nrabi_spread = 0.1\n\
                    [run]\ndelays = linspace(0us, 80us, 21)\nseed = 9\nshots = 300\n";
        let first = parse_config(text).unwrap();
        let second = parse_config(&dump_config(&first)).unwrap();
        assert_eq!(first, second);
        assert_eq!(dump_config(&first), dump_config(&second));
        assert!(matches!(first.phase_mode, PhaseMode::Fixed { .. }));
    }

    #[test]
    fn mixed_phases_rejected() {
        let text = "[ensemble]\nN = 10\nT2 = 1us\n[sequence]\npulses = P(0.5pi,X); D(tau); P(1pi,rand); D(tau); P(0.5pi,X)\n[run]\ndelays = 0us\n";
        assert!(matches!(parse_config(text), Err(Error::Config { line: 5, .. })));
    }
}
