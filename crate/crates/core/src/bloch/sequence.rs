//! Pulse sequences and their textual notation.
//!
//! ```text
//! P(0.5pi,X); D(tau); P(1pi,rand); D(tau); P(0.5pi,rand)
//! ```
//!
//! Statements are separated by `;`. `P(<area>,<phase>)` takes an area written
//! as `<float>pi` or `<float>rad` and a phase `X`, `Y`, `<float>rad` or `rand`.
//! `D(<float><unit>)` takes a unit among `s`, `ms`, `us`, `ns`; `D(tau)` refers
//! to the echo half-delay bound at parse time. Whitespace is ignored.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    /// Rotation-axis azimuth in `[0, 2π)`.
    Fixed(f64),
    /// Drawn uniformly for every shot.
    Random,
}

impl Phase {
    /// Wraps `phase` into `[0, 2π)`.
    pub fn fixed(phase: f64) -> Phase {
        let r = phase.rem_euclid(TAU);
        Phase::Fixed(if r >= TAU { 0.0 } else { r })
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Phase::Fixed(p) => Some(*p),
            Phase::Random => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    /// Rotation angle in radians.
    pub area: f64,
    pub phase: Phase,
}

impl Pulse {
    pub fn new(area: f64, phase: Phase) -> Self {
        Pulse { area, phase }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delay {
    /// Free evolution of a fixed duration in seconds.
    Fixed(f64),
    /// Free evolution for the sequence's echo half-delay `tau`.
    Tau,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Element {
    Pulse(Pulse),
    Delay(Delay),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub elements: Vec<Element>,
    /// Echo half-delay in seconds, if bound.
    pub tau: Option<f64>,
}

impl SequenceSpec {
    pub fn new(elements: Vec<Element>, tau: Option<f64>) -> Self {
        SequenceSpec { elements, tau }
    }

    /// `π/2(X) – τ – π(ψ) – τ – π/2(φ)`.
    pub fn canonical_echo(tau: f64, second: Phase, third: Phase) -> Self {
        SequenceSpec {
            elements: vec![
                Element::Pulse(Pulse::new(FRAC_PI_2, Phase::Fixed(0.0))),
                Element::Delay(Delay::Tau),
                Element::Pulse(Pulse::new(PI, second)),
                Element::Delay(Delay::Tau),
                Element::Pulse(Pulse::new(FRAC_PI_2, third)),
            ],
            tau: Some(tau),
        }
    }

    pub fn delay_duration(&self, delay: &Delay) -> Result<f64> {
        match delay {
            Delay::Fixed(d) => Ok(*d),
            Delay::Tau => self
                .tau
                .ok_or_else(|| Error::InvalidState("delay refers to an unbound tau".into())),
        }
    }

    pub fn pulses(&self) -> impl Iterator<Item = &Pulse> {
        self.elements.iter().filter_map(|e| match e {
            Element::Pulse(p) => Some(p),
            Element::Delay(_) => None,
        })
    }

    /// Three pulses separated by two equal delays.
    pub fn is_canonical_echo(&self) -> bool {
        match self.elements.as_slice() {
            [Element::Pulse(_), Element::Delay(d1), Element::Pulse(_), Element::Delay(d2), Element::Pulse(_)] => {
                match (self.delay_duration(d1), self.delay_duration(d2)) {
                    (Ok(a), Ok(b)) => a == b,
                    _ => d1 == d2,
                }
            }
            _ => false,
        }
    }

    /// Phases of the second and third pulses of a canonical echo.
    pub fn echo_phases(&self) -> Result<(Phase, Phase)> {
        self.require_canonical()?;
        let p: Vec<&Pulse> = self.pulses().collect();
        Ok((p[1].phase, p[2].phase))
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        SequenceSpec {
            elements: self.elements.clone(),
            tau: Some(tau),
        }
    }

    /// Concrete copy of a canonical echo with both delays set to `tau` and the
    /// second/third pulse phases set to `psi`/`phi` relative to the first pulse.
    pub fn resolve_echo(&self, tau: f64, psi: f64, phi: f64) -> Result<SequenceSpec> {
        self.require_canonical()?;
        let reference = match self.elements[0] {
            Element::Pulse(Pulse {
                phase: Phase::Fixed(p), ..
            }) => p,
            _ => {
                return Err(Error::InvalidState(
                    "the first pulse of an echo must have a fixed phase".into(),
                ))
            }
        };
        let mut elements = self.elements.clone();
        for (idx, rel) in [(2usize, psi), (4usize, phi)] {
            if let Element::Pulse(p) = &mut elements[idx] {
                p.phase = Phase::Fixed(reference + rel);
            }
        }
        for idx in [1usize, 3] {
            elements[idx] = Element::Delay(Delay::Fixed(tau));
        }
        Ok(SequenceSpec {
            elements,
            tau: Some(tau),
        })
    }

    fn require_canonical(&self) -> Result<()> {
        if self.is_canonical_echo() {
            Ok(())
        } else {
            Err(Error::InvalidState(
                "expected a three-pulse echo with two equal delays".into(),
            ))
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Phase::Random => write!(f, "rand"),
            Phase::Fixed(0.0) => write!(f, "X"),
            Phase::Fixed(p) if p == FRAC_PI_2 => write!(f, "Y"),
            Phase::Fixed(p) => write!(f, "{p}rad"),
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Element::Pulse(p) => {
                let multiple = p.area / PI;
                if multiple * PI == p.area {
                    write!(f, "P({multiple}pi,{})", p.phase)
                } else {
                    write!(f, "P({}rad,{})", p.area, p.phase)
                }
            }
            Element::Delay(Delay::Tau) => write!(f, "D(tau)"),
            Element::Delay(Delay::Fixed(d)) => write!(f, "D({d}s)"),
        }
    }
}

impl fmt::Display for SequenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.elements.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
    Semi,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    column: usize,
}

fn perr<T>(column: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        column,
        message: message.into(),
    })
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let simple = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            ';' => Some(Tok::Semi),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token { tok, column });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent only when followed by digits, so `1e-6s` lexes but `2es` does not
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '-' || chars[j] == '+') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let s: String = chars[start..i].iter().collect();
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => out.push(Token {
                    tok: Tok::Number(v),
                    column,
                }),
                _ => return perr(column, format!("invalid number `{s}`")),
            }
            continue;
        }
        if c.is_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                column,
            });
            continue;
        }
        return perr(column, format!("unexpected character `{c}`"));
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end_column: usize,
    tau: Option<f64>,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn column(&self) -> usize {
        self.peek().map_or(self.end_column, |t| t.column)
    }

    fn next(&mut self, what: &str) -> Result<Token> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => perr(self.end_column, format!("unexpected end of input, expected {what}")),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        let t = self.next(what)?;
        if t.tok == tok {
            Ok(())
        } else {
            perr(t.column, format!("expected {what}"))
        }
    }

    fn number(&mut self, what: &str) -> Result<(f64, usize)> {
        let t = self.next(what)?;
        match t.tok {
            Tok::Number(v) => Ok((v, t.column)),
            _ => perr(t.column, format!("expected {what}")),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize)> {
        let t = self.next(what)?;
        match t.tok {
            Tok::Ident(s) => Ok((s, t.column)),
            _ => perr(t.column, format!("expected {what}")),
        }
    }

    fn statement(&mut self) -> Result<Element> {
        let (kind, column) = self.ident("`P` or `D`")?;
        match kind.as_str() {
            "P" => {
                self.expect(Tok::LParen, "`(`")?;
                let area = self.area()?;
                self.expect(Tok::Comma, "`,`")?;
                let phase = self.phase()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Element::Pulse(Pulse::new(area, phase)))
            }
            "D" => {
                self.expect(Tok::LParen, "`(`")?;
                let delay = self.delay()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Element::Delay(delay))
            }
            other => perr(column, format!("unknown statement `{other}`")),
        }
    }

    fn area(&mut self) -> Result<f64> {
        let (v, column) = self.number("pulse area")?;
        if v < 0.0 {
            return perr(column, "pulse area must be non-negative");
        }
        let (unit, ucol) = self.ident("`pi` or `rad`")?;
        match unit.as_str() {
            "pi" => Ok(v * PI),
            "rad" => Ok(v),
            other => perr(ucol, format!("unknown area unit `{other}`")),
        }
    }

    fn phase(&mut self) -> Result<Phase> {
        match self.peek().map(|t| t.tok.clone()) {
            Some(Tok::Number(_)) => {
                let (v, _) = self.number("phase")?;
                let (unit, ucol) = self.ident("`rad`")?;
                if unit != "rad" {
                    return perr(ucol, format!("unknown phase unit `{unit}`"));
                }
                Ok(Phase::fixed(v))
            }
            _ => {
                let (name, column) = self.ident("phase")?;
                match name.as_str() {
                    "X" => Ok(Phase::Fixed(0.0)),
                    "Y" => Ok(Phase::Fixed(FRAC_PI_2)),
                    "rand" => Ok(Phase::Random),
                    other => perr(column, format!("unknown phase `{other}`")),
                }
            }
        }
    }

    fn delay(&mut self) -> Result<Delay> {
        if let Some(Tok::Ident(name)) = self.peek().map(|t| t.tok.clone()) {
            let column = self.column();
            self.pos += 1;
            if name != "tau" {
                return perr(column, format!("unknown delay `{name}`"));
            }
            if self.tau.is_none() {
                return perr(column, "`tau` used without a tau binding");
            }
            return Ok(Delay::Tau);
        }
        let (v, column) = self.number("duration")?;
        if v < 0.0 {
            return perr(column, "duration must be non-negative");
        }
        let (unit, ucol) = self.ident("time unit")?;
        let scale = match unit.as_str() {
            "s" => 1.0,
            "ms" => 1e-3,
            "us" => 1e-6,
            "ns" => 1e-9,
            other => return perr(ucol, format!("unknown time unit `{other}`")),
        };
        Ok(Delay::Fixed(v * scale))
    }
}

/// Parses the sequence notation. `tau` binds `D(tau)` delays.
pub fn parse_sequence(text: &str, tau: Option<f64>) -> Result<SequenceSpec> {
    if let Some(t) = tau {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be finite and >= 0, got {t}")));
        }
    }
    let mut parser = Parser {
        tokens: lex(text)?,
        pos: 0,
        end_column: text.chars().count() + 1,
        tau,
    };
    let mut elements = Vec::new();
    loop {
        if parser.peek().is_none() {
            if elements.is_empty() {
                return perr(parser.end_column, "empty sequence");
            }
            break;
        }
        elements.push(parser.statement()?);
        match parser.peek() {
            None => break,
            Some(Token { tok: Tok::Semi, .. }) => parser.pos += 1,
            Some(t) => return perr(t.column, "expected `;`"),
        }
    }
    Ok(SequenceSpec { elements, tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_fixed_phase_echo() {
        let s = parse_sequence("P(0.5pi,X); D(tau); P(1pi,Y); D(tau); P(0.5pi,X)", Some(0.8e-6)).unwrap();
        let expected = SequenceSpec::canonical_echo(0.8e-6, Phase::Fixed(FRAC_PI_2), Phase::Fixed(0.0));
        assert_eq!(s, expected);
        assert!(s.is_canonical_echo());
    }

    #[test]
    fn parses_random_phase_echo() {
        let s = parse_sequence("P(0.5pi,X); D(tau); P(1pi,rand); D(tau); P(0.5pi,rand)", Some(1e-6)).unwrap();
        assert_eq!(s, SequenceSpec::canonical_echo(1e-6, Phase::Random, Phase::Random));
        assert_eq!(s.echo_phases().unwrap(), (Phase::Random, Phase::Random));
    }

    #[test]
    fn whitespace_is_ignored() {
        let a = parse_sequence("P(0.5pi,X);D(2us)", None).unwrap();
        let b = parse_sequence("  P ( 0.5 pi , X ) ;\n D ( 2 us )  ", None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.elements[1], Element::Delay(Delay::Fixed(2.0 * 1e-6)));
    }

    #[test]
    fn unknown_phase_reports_column() {
        let err = parse_sequence("P(0.5pi,Z)", None).unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                column: 9,
                message: "unknown phase `Z`".into()
            }
        );
    }

    #[test]
    fn error_cases() {
        let col = |text: &str, tau| match parse_sequence(text, tau) {
            Err(Error::Parse { column, .. }) => column,
            other => panic!("expected parse error for {text:?}, got {other:?}"),
        };
        assert_eq!(col("D(-1us)", None), 3);
        assert_eq!(col("P(0.5pi,X); D(tau)", None), 15);
        assert_eq!(col("D(3 fs)", None), 5);
        assert_eq!(col("Q(1pi,X)", None), 1);
        assert_eq!(col("P(1pi,X) D(1s)", None), 10);
        assert_eq!(col("P(1pi,X", None), 8);
        assert_eq!(col("", None), 1);
        assert_eq!(col("P(1pi,X)#", None), 9);
    }

    #[test]
    fn explicit_radian_phase_is_wrapped() {
        let s = parse_sequence("P(1rad,7rad)", None).unwrap();
        match s.elements[0] {
            Element::Pulse(p) => {
                assert_eq!(p.area, 1.0);
                assert!((p.phase.value().unwrap() - (7.0 - TAU)).abs() < 1e-15);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn resolve_echo_sets_phases_and_delays() {
        let s = SequenceSpec::canonical_echo(0.0, Phase::Random, Phase::Random);
        let r = s.resolve_echo(2e-6, 1.0, 2.0).unwrap();
        assert_eq!(r.elements[1], Element::Delay(Delay::Fixed(2e-6)));
        assert_eq!(r.echo_phases().unwrap(), (Phase::Fixed(1.0), Phase::Fixed(2.0)));
        let single = parse_sequence("P(1pi,X)", None).unwrap();
        assert!(single.resolve_echo(1e-6, 0.0, 0.0).is_err());
    }

    fn element() -> impl Strategy<Value = Element> {
        let phase = prop_oneof![
            Just(Phase::Random),
            Just(Phase::Fixed(0.0)),
            Just(Phase::Fixed(FRAC_PI_2)),
            (0.0..TAU).prop_map(Phase::fixed),
        ];
        let area = prop_oneof![(0u32..8).prop_map(|m| m as f64 * 0.25 * PI), 0.0..20.0f64];
        prop_oneof![
            (area, phase).prop_map(|(a, p)| Element::Pulse(Pulse::new(a, p))),
            Just(Element::Delay(Delay::Tau)),
            (0.0..1.0f64).prop_map(|d| Element::Delay(Delay::Fixed(d))),
        ]
    }

    proptest! {
        #[test]
        fn format_then_parse_round_trips(elements in prop::collection::vec(element(), 1..8), tau in 0.0..1e-3f64) {
            let spec = SequenceSpec::new(elements, Some(tau));
            let reparsed = parse_sequence(&spec.to_string(), Some(tau)).unwrap();
            prop_assert_eq!(reparsed, spec);
        }
    }
}
