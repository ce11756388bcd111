//! The five-machine test corpus shared by the test suite and the CLI, with
//! standard inputs and oracle helpers.

use crate::tm::{
    decode, delta_encoded, encode, parse_machine, run, Configuration, EncodedConfig, RunOutcome,
    Tape, TuringMachine,
};

pub const INC_TM: &str = include_str!("../../../machines/inc.tm");
pub const SHIFTR_TM: &str = include_str!("../../../machines/shiftr.tm");
pub const LOOP_TM: &str = include_str!("../../../machines/loop.tm");
pub const COPY_TM: &str = include_str!("../../../machines/copy.tm");
pub const PARITY_TM: &str = include_str!("../../../machines/parity.tm");

pub fn inc() -> TuringMachine {
    parse_machine(INC_TM).expect("inc.tm parses")
}

pub fn shiftr() -> TuringMachine {
    parse_machine(SHIFTR_TM).expect("shiftr.tm parses")
}

pub fn loop_machine() -> TuringMachine {
    parse_machine(LOOP_TM).expect("loop.tm parses")
}

pub fn copy() -> TuringMachine {
    parse_machine(COPY_TM).expect("copy.tm parses")
}

pub fn parity() -> TuringMachine {
    parse_machine(PARITY_TM).expect("parity.tm parses")
}

pub fn all() -> Vec<TuringMachine> {
    vec![inc(), shiftr(), loop_machine(), copy(), parity()]
}

/// Standard small-valued input tapes per machine (tape literals). Small digit
/// content keeps compiled-flow transients small, which the slow end-to-end
/// suites rely on.
pub fn standard_inputs(name: &str) -> Vec<&'static str> {
    match name {
        "INC" => vec!["|"],
        "SHIFTR" => vec!["|", "|1", "|11"],
        "LOOP" => vec!["|"],
        "COPY" => vec!["|", "|1"],
        "PARITY" => vec!["|", "|1", "|21"],
        _ => vec!["|"],
    }
}

/// A halting scenario used by the end-to-end suites: input tape, expected
/// output window, and the oracle halting time.
pub struct Scenario {
    pub machine: TuringMachine,
    pub tape: &'static str,
    pub t_star: Vec<u8>,
    pub k: usize,
    pub halt_steps: Option<usize>,
}

/// Halting scenarios (oracle time ≤ 10) plus the non-halting LOOP scenario.
pub fn scenarios(k0: usize) -> Vec<Scenario> {
    let mk = |machine: TuringMachine,
              tape: &'static str,
              t_star: Vec<u8>,
              k: usize|
     -> Scenario {
        let t = Tape::parse(tape, k0).expect("scenario tape");
        let halt_steps = match run(&machine, t, 64).expect("scenario run") {
            RunOutcome::Halted { steps, .. } => Some(steps),
            RunOutcome::Running(_) => None,
        };
        Scenario { machine, tape, t_star, k, halt_steps }
    };
    vec![
        mk(inc(), "|", vec![1], 0),
        mk(shiftr(), "|1", vec![1, 0, 0], 1),
        mk(copy(), "|1", vec![0, 1, 1], 1),
        mk(parity(), "|1", vec![1], 0),
        mk(loop_machine(), "|", vec![0], 0),
    ]
}

/// All encodings reachable from the machine's standard inputs within the
/// given horizon (includes the starting configurations).
pub fn reachable_encodings(
    machine: &TuringMachine,
    k0: usize,
    horizon: usize,
) -> Vec<EncodedConfig> {
    let mut out = Vec::new();
    for lit in standard_inputs(&machine.name) {
        let tape = Tape::parse(lit, k0).expect("standard input parses");
        let mut config = Configuration::initial(tape);
        for _ in 0..=horizon {
            let enc = encode(&config);
            if !out.contains(&enc) {
                out.push(enc);
            }
            if config.state == machine.q_halt() {
                break;
            }
            config = crate::tm::step(machine, &config).expect("standard input stays in window");
        }
    }
    out
}

/// Oracle iterate Δ^j(x0) computed through the exact encoded map.
pub fn delta_iterate(machine: &TuringMachine, x0: &EncodedConfig, j: usize) -> EncodedConfig {
    let mut x = x0.clone();
    for _ in 0..j {
        x = delta_encoded(machine, &x);
    }
    x
}

/// Decode helper for tests: encoded config -> tape literal.
pub fn decode_literal(enc: &EncodedConfig, k0: usize) -> String {
    decode(enc, k0).map(|c| c.tape.literal()).unwrap_or_else(|e| format!("<{e}>"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tm::{output_matches, run, RunOutcome};

    #[test]
    fn corpus_shapes() {
        assert_eq!(inc().states, 2);
        assert_eq!(shiftr().states, 2);
        assert_eq!(loop_machine().states, 2);
        assert_eq!(copy().states, 4);
        assert_eq!(parity().states, 3);
    }

    #[test]
    fn loop_never_halts_within_100() {
        let m = loop_machine();
        assert!(matches!(
            run(&m, Tape::blank(3), 100).unwrap(),
            RunOutcome::Running(_)
        ));
    }

    #[test]
    fn shiftr_on_070_halts_with_blank_head() {
        let m = shiftr();
        let t = Tape::parse("0|70", 2).unwrap();
        match run(&m, t, 20).unwrap() {
            RunOutcome::Halted { steps, tape } => {
                assert_eq!(steps, 2);
                assert!(output_matches(&tape, &[0], 0).unwrap());
                assert_eq!(tape.get(-1), 7);
            }
            _ => panic!("expected halt"),
        }
    }

    #[test]
    fn copy_duplicates_a_one() {
        let m = copy();
        let t = Tape::parse("|1", 2).unwrap();
        match run(&m, t, 20).unwrap() {
            RunOutcome::Halted { steps, tape } => {
                assert_eq!(steps, 3);
                assert!(output_matches(&tape, &[0, 1, 1], 1).unwrap());
            }
            _ => panic!("expected halt"),
        }
    }

    #[test]
    fn parity_counts_odd_digits() {
        let m = parity();
        for (lit, want) in [("|", 0u8), ("|1", 1), ("|21", 1), ("|13", 0), ("|135", 1)] {
            let t = Tape::parse(lit, 3).unwrap();
            match run(&m, t, 30).unwrap() {
                RunOutcome::Halted { tape, .. } => {
                    assert!(
                        output_matches(&tape, &[want], 0).unwrap(),
                        "parity of {lit} should be {want}, tape {}",
                        tape.literal()
                    );
                }
                _ => panic!("parity should halt on {lit}"),
            }
        }
    }

    #[test]
    fn scenarios_have_expected_halting_times() {
        let sc = scenarios(3);
        let times: Vec<Option<usize>> = sc.iter().map(|s| s.halt_steps).collect();
        assert_eq!(times, vec![Some(1), Some(2), Some(3), Some(2), None]);
    }

    #[test]
    fn reachable_sets_are_small_and_halting_closed() {
        for m in all() {
            let set = reachable_encodings(&m, 3, 12);
            assert!(!set.is_empty() && set.len() <= 24, "{}: {}", m.name, set.len());
        }
    }
}
