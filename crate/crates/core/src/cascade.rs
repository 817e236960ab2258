//! NAND netlists and the bench-space and delay estimate for building them
//! out of dish gates.
//!
//! Netlist text has one statement per line:
//!
//! ```text
//! input a b
//! output sum carry
//! nand na a a
//! ```
//!
//! `nand <out> <in1> <in2>` drives signal `out` from two signals; a gate's
//! inputs may be the same signal (an inverter).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Clearance around each dish on the bench, mm: room for the electrode
/// leads, the LED rig and the barriers.
pub const BENCH_MARGIN: f64 = 180.0;

#[derive(Debug, Error, PartialEq)]
pub enum NetlistError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("signal {0} is driven more than once")]
    MultipleDrivers(String),
    #[error("signal {0} is used but never driven or declared as an input")]
    Undriven(String),
    #[error("netlist is cyclic through {0}")]
    Cyclic(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nand {
    pub out: String,
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Netlist {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub gates: Vec<Nand>,
}

/// Gate count, bench area and critical-path delay of a netlist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeEstimate {
    pub gates: usize,
    pub area_m2: f64,
    pub delay_ticks: f64,
    /// Gates on the longest input-to-output path.
    pub depth: usize,
}

impl Netlist {
    pub fn parse(text: &str) -> Result<Self, NetlistError> {
        let mut net = Netlist::default();
        for (n, raw) in text.lines().enumerate() {
            let words: Vec<&str> = raw.split('#').next().unwrap_or("").split_whitespace().collect();
            let syntax = |message: &str| NetlistError::Syntax { line: n + 1, message: message.into() };
            match words.as_slice() {
                [] => {}
                ["input", names @ ..] if !names.is_empty() => net.inputs.extend(names.iter().map(|s| s.to_string())),
                ["output", names @ ..] if !names.is_empty() => net.outputs.extend(names.iter().map(|s| s.to_string())),
                ["nand", out, a, b] => net.gates.push(Nand { out: out.to_string(), a: a.to_string(), b: b.to_string() }),
                ["nand", ..] => return Err(syntax("expected `nand <out> <in1> <in2>`")),
                ["input" | "output"] => return Err(syntax("declaration names no signals")),
                [other, ..] => return Err(syntax(&format!("unknown statement `{other}`"))),
            }
        }
        net.check()?;
        Ok(net)
    }

    /// The one-bit half adder from seven NAND gates.
    pub fn half_adder() -> Self {
        Netlist::parse(HALF_ADDER).expect("built-in netlist parses")
    }

    fn check(&self) -> Result<(), NetlistError> {
        let mut driven: BTreeSet<&str> = self.inputs.iter().map(String::as_str).collect();
        if driven.len() != self.inputs.len() {
            let dup = self.inputs.iter().find(|s| self.inputs.iter().filter(|t| t == s).count() > 1).expect("duplicate exists");
            return Err(NetlistError::MultipleDrivers(dup.clone()));
        }
        for g in &self.gates {
            if !driven.insert(&g.out) {
                return Err(NetlistError::MultipleDrivers(g.out.clone()));
            }
        }
        for s in self.gates.iter().flat_map(|g| [&g.a, &g.b]).chain(&self.outputs) {
            if !driven.contains(s.as_str()) {
                return Err(NetlistError::Undriven(s.clone()));
            }
        }
        self.depths().map(|_| ())
    }

    /// Gate depth of every driven signal; inputs sit at depth 0.
    fn depths(&self) -> Result<BTreeMap<&str, usize>, NetlistError> {
        let by_out: BTreeMap<&str, &Nand> = self.gates.iter().map(|g| (g.out.as_str(), g)).collect();
        let mut depth: BTreeMap<&str, usize> = self.inputs.iter().map(|s| (s.as_str(), 0)).collect();
        let mut on_stack = BTreeSet::new();
        fn visit<'a>(
            s: &'a str,
            by_out: &BTreeMap<&'a str, &'a Nand>,
            depth: &mut BTreeMap<&'a str, usize>,
            on_stack: &mut BTreeSet<&'a str>,
        ) -> Result<usize, NetlistError> {
            if let Some(&d) = depth.get(s) {
                return Ok(d);
            }
            let Some(g) = by_out.get(s) else { return Ok(0) };
            if !on_stack.insert(s) {
                return Err(NetlistError::Cyclic(s.to_string()));
            }
            let d = 1 + visit(&g.a, by_out, depth, on_stack)?.max(visit(&g.b, by_out, depth, on_stack)?);
            on_stack.remove(s);
            depth.insert(s, d);
            Ok(d)
        }
        for g in &self.gates {
            visit(&g.out, &by_out, &mut depth, &mut on_stack)?;
        }
        Ok(depth)
    }

    /// Longest chain of gates between any input and any gate output.
    pub fn depth(&self) -> usize {
        self.depths().map(|d| d.values().copied().max().unwrap_or(0)).unwrap_or(0)
    }
}

const HALF_ADDER: &str = "\
input a b
output sum carry
nand na a a
nand nb b b
nand t1 a nb
nand t2 na b
nand sum t1 t2
nand c1 a b
nand carry c1 c1
";

/// Bench area for gates in dishes of `dish_diameter` mm, each on a square
/// tile with [`BENCH_MARGIN`] of clearance, and the critical-path delay
/// given the median delay of one gate.
pub fn estimate_cascade(net: &Netlist, dish_diameter: f64, gate_delay_ticks: f64) -> Result<CascadeEstimate, NetlistError> {
    net.check()?;
    let gates = net.gates.len();
    let tile_m = (dish_diameter + BENCH_MARGIN) / 1000.0;
    let depth = net.depth();
    Ok(CascadeEstimate { gates, area_m2: gates as f64 * tile_m * tile_m, delay_ticks: depth as f64 * gate_delay_ticks, depth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_adder_shape() {
        let h = Netlist::half_adder();
        assert_eq!(h.gates.len(), 7);
        assert_eq!(h.depth(), 3);
        assert_eq!(h.outputs, ["sum", "carry"]);
    }

    #[test]
    fn half_adder_computes_sum_and_carry() {
        let h = Netlist::half_adder();
        for a in 0..2u8 {
            for b in 0..2u8 {
                let mut v: BTreeMap<&str, u8> = [("a", a), ("b", b)].into();
                while v.len() < 2 + h.gates.len() {
                    for g in &h.gates {
                        if let (Some(&x), Some(&y)) = (v.get(g.a.as_str()), v.get(g.b.as_str())) {
                            v.insert(&g.out, 1 - (x & y));
                        }
                    }
                }
                assert_eq!(v["sum"], a ^ b);
                assert_eq!(v["carry"], a & b);
            }
        }
    }

    #[test]
    fn malformed_netlists() {
        assert_eq!(Netlist::parse("input a\nnand x a\n"), Err(NetlistError::Syntax { line: 2, message: "expected `nand <out> <in1> <in2>`".into() }));
        assert_eq!(Netlist::parse("input a\nnand x a y\n"), Err(NetlistError::Undriven("y".into())));
        assert_eq!(Netlist::parse("input a\nnand a a a\n"), Err(NetlistError::MultipleDrivers("a".into())));
        assert!(matches!(Netlist::parse("input a\nnand x a y\nnand y a x\n"), Err(NetlistError::Cyclic(_))));
        assert!(matches!(Netlist::parse("xor a b c"), Err(NetlistError::Syntax { line: 1, .. })));
    }

    #[test]
    fn empty_netlist_costs_nothing() {
        let e = estimate_cascade(&Netlist::parse("").unwrap(), 90.0, 3000.0).unwrap();
        assert_eq!((e.gates, e.area_m2, e.delay_ticks), (0, 0.0, 0.0));
    }
}
