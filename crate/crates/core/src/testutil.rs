//! Shared generators for unit tests.

use rand::rngs::StdRng;
use rand::Rng;

use crate::qasm::{RawGate, SourceCircuit};

/// Random mix of `h` and `cx` gates on `n` qubits.
pub fn random_circuit(rng: &mut StdRng, n: usize, gates: usize) -> SourceCircuit {
    let mut c = SourceCircuit::new(n);
    for _ in 0..gates {
        if n >= 2 && rng.gen_bool(0.5) {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            c.push(RawGate::new("cx", &[a, b]));
        } else {
            c.push(RawGate::new("h", &[rng.gen_range(0..n)]));
        }
    }
    c
}
