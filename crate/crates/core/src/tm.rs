//! Turing machines: parsing, validation, exact simulation, and the base-10
//! arithmetization of configurations. Everything downstream is tested against
//! this module, so every operation here is exact integer arithmetic.
//!
//! Conventions: states are {1,…,r} with q0 = 1 and q_halt = r; the alphabet is
//! {0,…,9} with 0 the blank; move ε = +1 shifts the tape left (head moves
//! right), ε = −1 shifts it right.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

pub const ALPHABET: u8 = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TmError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: state index {q} out of range 1..={r}")]
    StateOutOfRange { line: usize, q: i64, r: u32 },
    #[error("line {line}: symbol {s} out of range 0..=9")]
    SymbolOutOfRange { line: usize, s: i64 },
    #[error("line {line}: move token {m} not in {{-1,0,1}}")]
    BadMove { line: usize, m: i64 },
    #[error("line {line}: duplicate rule for (q={q}, s={s})")]
    DuplicateRule { line: usize, q: u32, s: u8 },
    #[error("missing `states <r>` header")]
    MissingStates,
    #[error("state count {0} must be at least 2")]
    TooFewStates(u32),
    #[error("window overflow: non-blank symbol shifted past ±k0={0}")]
    WindowOverflow(usize),
    #[error("tape literal: {0}")]
    BadTape(String),
    #[error("encoded value out of range for window radius k0={k0}: {what}")]
    DecodeRange { k0: usize, what: String },
    #[error("output window k={k} exceeds tape radius k0={k0}")]
    WindowTooWide { k: usize, k0: usize },
    #[error("output string length {got} does not match 2k+1 = {want}")]
    OutputLength { got: usize, want: usize },
}

/// One transition: next state, written symbol, move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Rule {
    pub next: u32,
    pub write: u8,
    pub mv: i8,
}

/// A normalized total machine. `rules` covers every (q, s) with 1 ≤ q < r;
/// the halting state r is never consulted.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TuringMachine {
    pub name: String,
    pub states: u32,
    rules: BTreeMap<(u32, u8), Rule>,
}

impl TuringMachine {
    /// Builds a machine from explicit rules, normalizing omitted entries to
    /// (q_halt, same symbol, 0).
    pub fn new(name: &str, states: u32, rules: &[((u32, u8), Rule)]) -> Result<Self, TmError> {
        if states < 2 {
            return Err(TmError::TooFewStates(states));
        }
        let mut map = BTreeMap::new();
        for ((q, s), rule) in rules {
            map.insert((*q, *s), *rule);
        }
        let mut m = TuringMachine { name: name.to_string(), states, rules: map };
        m.normalize();
        Ok(m)
    }

    fn normalize(&mut self) {
        for q in 1..self.states {
            for s in 0..ALPHABET {
                self.rules
                    .entry((q, s))
                    .or_insert(Rule { next: self.states, write: s, mv: 0 });
            }
        }
    }

    pub fn q_halt(&self) -> u32 {
        self.states
    }

    /// δ(q, s). Panics if consulted on the halting state; callers handle halt
    /// before looking up.
    pub fn rule(&self, q: u32, s: u8) -> Rule {
        debug_assert!(q >= 1 && q < self.states && s < ALPHABET);
        self.rules[&(q, s)]
    }

    /// Set of moves that actually occur in the table.
    pub fn moves_used(&self) -> Vec<i8> {
        let mut out: Vec<i8> = self.rules.values().map(|r| r.mv).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Parses the TM file format: `states <r>`, optional `name <text>`, rule lines
/// `q,s -> q',s',m`, `#` comments. Omitted (q,s) entries halt in place.
pub fn parse_machine(text: &str) -> Result<TuringMachine, TmError> {
    let mut states: Option<u32> = None;
    let mut name = String::from("machine");
    let mut rules: BTreeMap<(u32, u8), Rule> = BTreeMap::new();
    let mut pending: Vec<(usize, (i64, i64), (i64, i64, i64))> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("states") {
            let r: u32 = rest.trim().parse().map_err(|_| TmError::Syntax {
                line: line_no,
                msg: format!("bad state count `{}`", rest.trim()),
            })?;
            states = Some(r);
            continue;
        }
        if let Some(rest) = line.strip_prefix("name") {
            name = rest.trim().to_string();
            continue;
        }
        let (lhs, rhs) = line.split_once("->").ok_or_else(|| TmError::Syntax {
            line: line_no,
            msg: "expected `q,s -> q',s',m`".into(),
        })?;
        let parse_ints = |part: &str, want: usize| -> Result<Vec<i64>, TmError> {
            let items: Vec<&str> = part.split(',').map(str::trim).collect();
            if items.len() != want {
                return Err(TmError::Syntax {
                    line: line_no,
                    msg: format!("expected {want} comma-separated integers in `{part}`"),
                });
            }
            items
                .iter()
                .map(|t| {
                    t.parse::<i64>().map_err(|_| TmError::Syntax {
                        line: line_no,
                        msg: format!("bad integer `{t}`"),
                    })
                })
                .collect()
        };
        let l = parse_ints(lhs, 2)?;
        let r = parse_ints(rhs, 3)?;
        pending.push((line_no, (l[0], l[1]), (r[0], r[1], r[2])));
    }

    let states = states.ok_or(TmError::MissingStates)?;
    if states < 2 {
        return Err(TmError::TooFewStates(states));
    }
    for (line, (q, s), (q2, w, mv)) in pending {
        let check_state = |x: i64| -> Result<u32, TmError> {
            if x < 1 || x > states as i64 {
                Err(TmError::StateOutOfRange { line, q: x, r: states })
            } else {
                Ok(x as u32)
            }
        };
        let check_symbol = |x: i64| -> Result<u8, TmError> {
            if !(0..ALPHABET as i64).contains(&x) {
                Err(TmError::SymbolOutOfRange { line, s: x })
            } else {
                Ok(x as u8)
            }
        };
        let q = check_state(q)?;
        let s = check_symbol(s)?;
        let q2 = check_state(q2)?;
        let w = check_symbol(w)?;
        if !(-1..=1).contains(&mv) {
            return Err(TmError::BadMove { line, m: mv });
        }
        if rules.insert((q, s), Rule { next: q2, write: w, mv: mv as i8 }).is_some() {
            return Err(TmError::DuplicateRule { line, q, s });
        }
    }
    let mut m = TuringMachine { name, states, rules };
    m.normalize();
    Ok(m)
}

/// Fixed-window tape: cells at positions −k0..=k0, blank outside.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tape {
    k0: usize,
    cells: Vec<u8>, // index i+k0 holds position i
}

impl Tape {
    pub fn blank(k0: usize) -> Self {
        Tape { k0, cells: vec![0; 2 * k0 + 1] }
    }

    /// Parses `<left>|<right>` where the character adjacent to the bar on the
    /// left is t₋₁ and the right part reads t0 t1 …; e.g. `3|72` has t₋₁=3,
    /// t0=7, t1=2.
    pub fn parse(lit: &str, k0: usize) -> Result<Self, TmError> {
        let (left, right) = lit
            .split_once('|')
            .ok_or_else(|| TmError::BadTape(format!("missing `|` in `{lit}`")))?;
        let digit = |c: char| -> Result<u8, TmError> {
            c.to_digit(10)
                .map(|d| d as u8)
                .ok_or_else(|| TmError::BadTape(format!("non-digit `{c}` in `{lit}`")))
        };
        let mut t = Tape::blank(k0);
        for (i, c) in right.chars().enumerate() {
            let d = digit(c)?;
            if d != 0 {
                if i > k0 {
                    return Err(TmError::BadTape(format!(
                        "position {i} exceeds window radius {k0}"
                    )));
                }
                t.set(i as isize, d)?;
            }
        }
        for (i, c) in left.chars().rev().enumerate() {
            let d = digit(c)?;
            if d != 0 {
                let pos = -(i as isize) - 1;
                if i + 1 > k0 {
                    return Err(TmError::BadTape(format!(
                        "position {pos} exceeds window radius {k0}"
                    )));
                }
                t.set(pos, d)?;
            }
        }
        Ok(t)
    }

    pub fn k0(&self) -> usize {
        self.k0
    }

    pub fn get(&self, pos: isize) -> u8 {
        let idx = pos + self.k0 as isize;
        if idx < 0 || idx >= self.cells.len() as isize {
            0
        } else {
            self.cells[idx as usize]
        }
    }

    pub fn set(&mut self, pos: isize, val: u8) -> Result<(), TmError> {
        assert!(val < ALPHABET);
        let idx = pos + self.k0 as isize;
        if idx < 0 || idx >= self.cells.len() as isize {
            if val != 0 {
                return Err(TmError::WindowOverflow(self.k0));
            }
            return Ok(());
        }
        self.cells[idx as usize] = val;
        Ok(())
    }

    /// ε-shift: ε=+1 is the left shift (new t_i = old t_{i+1}).
    pub fn shifted(&self, eps: i8) -> Result<Tape, TmError> {
        if eps == 0 {
            return Ok(self.clone());
        }
        let mut out = Tape::blank(self.k0);
        for i in -(self.k0 as isize)..=(self.k0 as isize) {
            let src = i + eps as isize;
            out.cells[(i + self.k0 as isize) as usize] = self.get(src);
        }
        // The symbol pushed out of the window must be blank.
        let lost = if eps == 1 { -(self.k0 as isize) } else { self.k0 as isize };
        if self.get(lost) != 0 {
            return Err(TmError::WindowOverflow(self.k0));
        }
        Ok(out)
    }

    /// Tape literal in the same format `parse` accepts.
    pub fn literal(&self) -> String {
        let mut left = String::new();
        let mut right = String::new();
        let lo = -(self.k0 as isize);
        let hi = self.k0 as isize;
        let mut min_pos = 0isize;
        let mut max_pos = -1isize;
        for i in lo..=hi {
            if self.get(i) != 0 {
                min_pos = min_pos.min(i);
                max_pos = max_pos.max(i);
            }
        }
        for i in (min_pos..0).rev() {
            left.insert(0, char::from(b'0' + self.get(i)));
        }
        for i in 0..=max_pos.max(-1) {
            right.push(char::from(b'0' + self.get(i)));
        }
        format!("{left}|{right}")
    }
}

impl fmt::Display for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.literal())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    pub state: u32,
    pub tape: Tape,
}

impl Configuration {
    pub fn initial(tape: Tape) -> Self {
        Configuration { state: 1, tape }
    }
}

/// The ℕ³ image (y1, y2, q) of a configuration: base-10 digits of y1 are
/// t0, t1, …; digits of y2 are t₋₁, t₋₂, ….
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EncodedConfig {
    pub y1: BigUint,
    pub y2: BigUint,
    pub q: u32,
}

impl fmt::Display for EncodedConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.y1, self.y2, self.q)
    }
}

/// One machine step. Halting configurations are fixed points.
pub fn step(machine: &TuringMachine, config: &Configuration) -> Result<Configuration, TmError> {
    if config.state == machine.q_halt() {
        return Ok(config.clone());
    }
    let t0 = config.tape.get(0);
    let rule = machine.rule(config.state, t0);
    let mut tape = config.tape.clone();
    tape.set(0, rule.write)?;
    let tape = tape.shifted(rule.mv)?;
    Ok(Configuration { state: rule.next, tape })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome {
    /// Halted after exactly `steps` steps (minimal) with the given tape.
    Halted { steps: usize, tape: Tape },
    /// Still running after max_steps.
    Running(Configuration),
}

pub fn run(
    machine: &TuringMachine,
    tape: Tape,
    max_steps: usize,
) -> Result<RunOutcome, TmError> {
    let mut config = Configuration::initial(tape);
    for j in 0..=max_steps {
        if config.state == machine.q_halt() {
            return Ok(RunOutcome::Halted { steps: j, tape: config.tape });
        }
        if j == max_steps {
            break;
        }
        config = step(machine, &config)?;
    }
    Ok(RunOutcome::Running(config))
}

pub fn encode(config: &Configuration) -> EncodedConfig {
    let k0 = config.tape.k0() as isize;
    let ten = BigUint::from(10u32);
    let mut y1 = BigUint::zero();
    for i in (0..=k0).rev() {
        y1 = &y1 * &ten + BigUint::from(config.tape.get(i));
    }
    let mut y2 = BigUint::zero();
    for i in (1..=k0).rev() {
        y2 = &y2 * &ten + BigUint::from(config.tape.get(-i));
    }
    EncodedConfig { y1, y2, q: config.state }
}

pub fn decode(enc: &EncodedConfig, k0: usize) -> Result<Configuration, TmError> {
    let ten = BigUint::from(10u32);
    let bound1 = ten.pow(k0 as u32 + 1);
    let bound2 = ten.pow(k0 as u32);
    if enc.y1 >= bound1 {
        return Err(TmError::DecodeRange { k0, what: format!("y1 = {} ≥ 10^{}", enc.y1, k0 + 1) });
    }
    if enc.y2 >= bound2 {
        return Err(TmError::DecodeRange { k0, what: format!("y2 = {} ≥ 10^{}", enc.y2, k0) });
    }
    let mut tape = Tape::blank(k0);
    let mut v = enc.y1.clone();
    let mut i = 0isize;
    while !v.is_zero() {
        let (q, r) = v.div_rem(&ten);
        tape.set(i, r.to_u8().unwrap())?;
        v = q;
        i += 1;
    }
    let mut v = enc.y2.clone();
    let mut i = -1isize;
    while !v.is_zero() {
        let (q, r) = v.div_rem(&ten);
        tape.set(i, r.to_u8().unwrap())?;
        v = q;
        i -= 1;
    }
    Ok(Configuration { state: enc.q, tape })
}

/// The global transition Δ on ℕ³: exact big-integer update formulas, extended
/// as the identity off the image of the encoding (q out of range) and on the
/// halting state.
pub fn delta_encoded(machine: &TuringMachine, enc: &EncodedConfig) -> EncodedConfig {
    if enc.q < 1 || enc.q >= machine.q_halt() {
        return enc.clone();
    }
    let ten = BigUint::from(10u32);
    let u1 = (&enc.y1 % &ten).to_u8().unwrap();
    let u2 = (&enc.y2 % &ten).to_u8().unwrap();
    let rule = machine.rule(enc.q, u1);
    let w = BigUint::from(rule.write);
    let y1_stripped = &enc.y1 - BigUint::from(u1);
    match rule.mv {
        0 => EncodedConfig { y1: &y1_stripped + &w, y2: enc.y2.clone(), q: rule.next },
        1 => EncodedConfig {
            y1: &y1_stripped / &ten,
            y2: &enc.y2 * &ten + &w,
            q: rule.next,
        },
        -1 => EncodedConfig {
            y1: BigUint::from(u2) + (&y1_stripped + &w) * &ten,
            y2: (&enc.y2 - BigUint::from(u2)) / &ten,
            q: rule.next,
        },
        _ => unreachable!(),
    }
}

/// True iff tape positions −k..=k equal t_star exactly.
pub fn output_matches(tape: &Tape, t_star: &[u8], k: usize) -> Result<bool, TmError> {
    if t_star.len() != 2 * k + 1 {
        return Err(TmError::OutputLength { got: t_star.len(), want: 2 * k + 1 });
    }
    if k > tape.k0() {
        return Err(TmError::WindowTooWide { k, k0: tape.k0() });
    }
    for (idx, want) in t_star.iter().enumerate() {
        let pos = idx as isize - k as isize;
        if tape.get(pos) != *want {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Parses an output-window string of digits into symbols; length 2k+1.
pub fn parse_window(s: &str) -> Result<Vec<u8>, TmError> {
    s.chars()
        .map(|c| {
            c.to_digit(10)
                .map(|d| d as u8)
                .ok_or_else(|| TmError::BadTape(format!("non-digit `{c}` in window")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inc() -> TuringMachine {
        parse_machine("states 2\n1,0 -> 2,1,0\n").unwrap()
    }

    #[test]
    fn parse_two_line_inc() {
        let m = inc();
        assert_eq!(m.states, 2);
        assert_eq!(m.rule(1, 0), Rule { next: 2, write: 1, mv: 0 });
    }

    #[test]
    fn omitted_entries_halt_in_place() {
        let m = inc();
        assert_eq!(m.rule(1, 7), Rule { next: 2, write: 7, mv: 0 });
    }

    #[test]
    fn state_out_of_range_is_an_error() {
        let err = parse_machine("states 2\n1,0 -> 3,1,0\n").unwrap_err();
        assert!(matches!(err, TmError::StateOutOfRange { q: 3, .. }));
    }

    #[test]
    fn duplicate_rule_is_an_error() {
        let err = parse_machine("states 2\n1,0 -> 2,1,0\n1,0 -> 2,2,0\n").unwrap_err();
        assert!(matches!(err, TmError::DuplicateRule { q: 1, s: 0, .. }));
    }

    #[test]
    fn parse_is_deterministic() {
        let text = "states 3\nname X\n1,0 -> 2,1,1\n2,1 -> 3,0,-1\n";
        assert_eq!(parse_machine(text).unwrap(), parse_machine(text).unwrap());
    }

    #[test]
    fn inc_steps_to_halt_with_one() {
        let m = inc();
        let c = Configuration::initial(Tape::blank(3));
        let c2 = step(&m, &c).unwrap();
        assert_eq!(c2.state, 2);
        assert_eq!(c2.tape.get(0), 1);
    }

    #[test]
    fn halting_config_is_fixed() {
        let m = inc();
        let mut t = Tape::blank(2);
        t.set(0, 5).unwrap();
        let c = Configuration { state: 2, tape: t };
        assert_eq!(step(&m, &c).unwrap(), c);
    }

    #[test]
    fn left_writer_moves_symbol() {
        // rule (1,0) -> (1,5,1): writes 5 then left-shifts; head sees blank,
        // the 5 sits at position −1.
        let m = parse_machine("states 2\n1,0 -> 1,5,1\n").unwrap();
        let c = Configuration::initial(Tape::blank(2));
        let c2 = step(&m, &c).unwrap();
        assert_eq!(c2.state, 1);
        assert_eq!(c2.tape.get(-1), 5);
        assert_eq!(c2.tape.get(0), 0);
    }

    #[test]
    fn window_overflow_is_detected() {
        let m = parse_machine("states 2\n1,0 -> 1,5,1\n").unwrap();
        let mut c = Configuration::initial(Tape::blank(1));
        // two steps push the first 5 to −2 which is outside k0=1
        c = step(&m, &c).unwrap();
        let err = step(&m, &c).unwrap_err();
        assert_eq!(err, TmError::WindowOverflow(1));
    }

    #[test]
    fn run_inc_halts_at_one() {
        let m = inc();
        match run(&m, Tape::blank(3), 10).unwrap() {
            RunOutcome::Halted { steps, tape } => {
                assert_eq!(steps, 1);
                assert_eq!(tape.get(0), 1);
            }
            _ => panic!("expected halt"),
        }
    }

    #[test]
    fn run_zero_budget_reports_running() {
        let m = inc();
        assert!(matches!(run(&m, Tape::blank(1), 0).unwrap(), RunOutcome::Running(_)));
    }

    #[test]
    fn monotone_halting() {
        let m = inc();
        for max in 1..6 {
            match run(&m, Tape::blank(2), max).unwrap() {
                RunOutcome::Halted { steps, .. } => assert_eq!(steps, 1),
                _ => panic!("expected halt at budget {max}"),
            }
        }
    }

    #[test]
    fn encode_examples() {
        let c = Configuration::initial(Tape::blank(3));
        let e = encode(&c);
        assert_eq!(e, EncodedConfig { y1: 0u32.into(), y2: 0u32.into(), q: 1 });

        let t = Tape::parse("3|72", 1).unwrap();
        let e = encode(&Configuration { state: 2, tape: t });
        assert_eq!(e, EncodedConfig { y1: 27u32.into(), y2: 3u32.into(), q: 2 });

        let t = Tape::parse("9|99", 1).unwrap();
        let e = encode(&Configuration { state: 1, tape: t });
        assert_eq!(e, EncodedConfig { y1: 99u32.into(), y2: 9u32.into(), q: 1 });
    }

    #[test]
    fn tape_parse_rejects_out_of_window() {
        assert!(Tape::parse("|0001", 2).is_err());
        assert!(Tape::parse("12|", 1).is_err());
        // zeros beyond the window are harmless
        assert!(Tape::parse("|0001", 3).is_ok());
    }

    #[test]
    fn decode_inverts_encode() {
        let e = EncodedConfig { y1: 27u32.into(), y2: 3u32.into(), q: 2 };
        let c = decode(&e, 1).unwrap();
        assert_eq!(c.state, 2);
        assert_eq!(c.tape.get(-1), 3);
        assert_eq!(c.tape.get(0), 7);
        assert_eq!(c.tape.get(1), 2);

        let blank = EncodedConfig { y1: 0u32.into(), y2: 0u32.into(), q: 1 };
        assert_eq!(decode(&blank, 2).unwrap().tape, Tape::blank(2));
    }

    #[test]
    fn decode_range_check() {
        let e = EncodedConfig { y1: 1000u32.into(), y2: 0u32.into(), q: 1 };
        assert!(matches!(decode(&e, 2).unwrap_err(), TmError::DecodeRange { .. }));
    }

    #[test]
    fn delta_encoded_examples() {
        let m = inc();
        let e = EncodedConfig { y1: 0u32.into(), y2: 0u32.into(), q: 1 };
        assert_eq!(
            delta_encoded(&m, &e),
            EncodedConfig { y1: 1u32.into(), y2: 0u32.into(), q: 2 }
        );

        // right-mover (1,7) -> (1,7,+1) on (27, 3, 1) -> (2, 37, 1)
        let m = parse_machine("states 2\n1,7 -> 1,7,1\n").unwrap();
        let e = EncodedConfig { y1: 27u32.into(), y2: 3u32.into(), q: 1 };
        assert_eq!(
            delta_encoded(&m, &e),
            EncodedConfig { y1: 2u32.into(), y2: 37u32.into(), q: 1 }
        );

        // halting fixpoint
        let e = EncodedConfig { y1: 123u32.into(), y2: 9u32.into(), q: 2 };
        assert_eq!(delta_encoded(&m, &e), e);
    }

    #[test]
    fn delta_encoded_left_move() {
        // (1,0) -> (1,5,-1): u2 becomes the new t0 digit
        let m = parse_machine("states 2\n1,0 -> 1,5,-1\n").unwrap();
        let e = EncodedConfig { y1: 20u32.into(), y2: 43u32.into(), q: 1 };
        // y1' = u2 + 10*(y1 - u1 + w) = 3 + 10*25 = 253, y2' = 4
        assert_eq!(
            delta_encoded(&m, &e),
            EncodedConfig { y1: 253u32.into(), y2: 4u32.into(), q: 1 }
        );
    }

    #[test]
    fn delta_matches_step_on_random_configs() {
        let m = parse_machine(
            "states 3\n1,0 -> 2,1,1\n1,1 -> 1,2,-1\n2,1 -> 3,9,0\n2,0 -> 1,0,1\n",
        )
        .unwrap();
        let mut seed = 0x12345678u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            seed >> 33
        };
        let k0 = 3usize;
        for _ in 0..500 {
            let mut tape = Tape::blank(k0);
            // keep the boundary cells blank so step() cannot overflow
            for pos in -(k0 as isize - 1)..(k0 as isize) {
                tape.set(pos, (next() % 10) as u8).unwrap();
            }
            let q = 1 + (next() % 3) as u32;
            let c = Configuration { state: q, tape };
            let enc = encode(&c);
            let via_formula = delta_encoded(&m, &enc);
            let via_step = encode(&step(&m, &c).unwrap());
            assert_eq!(via_formula, via_step);
        }
    }

    #[test]
    fn output_window_checks() {
        let mut t = Tape::blank(2);
        t.set(0, 1).unwrap();
        assert!(output_matches(&t, &[1], 0).unwrap());
        assert!(output_matches(&Tape::blank(2), &[0, 0, 0], 1).unwrap());
        assert!(!output_matches(&t, &[0], 0).unwrap());
        assert!(output_matches(&t, &[1, 0], 0).is_err());
    }

    #[test]
    fn tape_literal_round_trip() {
        for lit in ["|", "3|72", "21|3", "|907", "1|"] {
            let t = Tape::parse(lit, 3).unwrap();
            let again = Tape::parse(&t.literal(), 3).unwrap();
            assert_eq!(t, again, "literal {lit} -> {} changed", t.literal());
        }
    }
}
