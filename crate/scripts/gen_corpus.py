#!/usr/bin/env python3
"""Regenerate the bundled benchmark corpus (crates/core/corpus).

Output is fully determined by SEED; rerunning overwrites the files byte for byte.
"""
import random
from pathlib import Path

SEED = 20240611
OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "corpus"
ONE_Q = ["h", "x", "t", "tdg", "s", "sdg"]


def header(n, measure):
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{n}];"]
    if measure:
        lines.append(f"creg c[{n}];")
    return lines


def footer(n, measure):
    return [f"measure q[{i}] -> c[{i}];" for i in range(n)] if measure else []


def random_mix(rng, n, gates, cx_ratio):
    body = []
    for _ in range(gates):
        if rng.random() < cx_ratio:
            a, b = rng.sample(range(n), 2)
            body.append(f"cx q[{a}],q[{b}];")
        elif rng.random() < 0.2:
            body.append(f"rz({rng.choice(['pi/4', 'pi/8', '-pi/2', '3*pi/4'])}) q[{rng.randrange(n)}];")
        else:
            body.append(f"{rng.choice(ONE_Q)} q[{rng.randrange(n)}];")
    return body


def ghz(n):
    return ["h q[0];"] + [f"cx q[{i}],q[{i + 1}];" for i in range(n - 1)]


def qft(n):
    body = []
    for i in range(n):
        body.append(f"h q[{i}];")
        for j in range(i + 1, n):
            k = j - i + 1
            # controlled phase as cx + rz
            body += [f"rz(pi/{2 ** k}) q[{j}];", f"cx q[{j}],q[{i}];", f"rz(-pi/{2 ** k}) q[{i}];",
                     f"cx q[{j}],q[{i}];", f"rz(pi/{2 ** k}) q[{i}];"]
    return body


def toffoli(a, b, c):
    return [f"h q[{c}];", f"cx q[{b}],q[{c}];", f"tdg q[{c}];", f"cx q[{a}],q[{c}];", f"t q[{c}];",
            f"cx q[{b}],q[{c}];", f"tdg q[{c}];", f"cx q[{a}],q[{c}];", f"t q[{b}];", f"t q[{c}];",
            f"h q[{c}];", f"cx q[{a}],q[{b}];", f"t q[{a}];", f"tdg q[{b}];", f"cx q[{a}],q[{b}];"]


def ripple_adder(bits):
    # qubits: carry, a0..a{bits-1}, b0..b{bits-1}
    n = 2 * bits + 1
    a = [1 + i for i in range(bits)]
    b = [1 + bits + i for i in range(bits)]
    body = [f"x q[{q}];" for q in a[::2]]
    carry = 0
    for i in range(bits):
        body += [f"cx q[{a[i]}],q[{b[i]}];", f"cx q[{a[i]}],q[{carry}];"]
        body += toffoli(carry, b[i], a[i])
        carry = a[i]
    for i in reversed(range(bits)):
        prev = 0 if i == 0 else a[i - 1]
        body += toffoli(prev, b[i], a[i])
        body += [f"cx q[{a[i]}],q[{prev}];", f"cx q[{prev}],q[{b[i]}];"]
    return n, body


def main():
    rng = random.Random(SEED)
    OUT.mkdir(parents=True, exist_ok=True)
    files = {}
    for n in (5, 8, 12, 16):
        files[f"ghz_{n:02}.qasm"] = (n, ghz(n), True)
    for n in (5, 6, 8):
        files[f"qft_{n:02}.qasm"] = (n, qft(n), True)
    for bits in (2, 3, 4, 6):
        n, body = ripple_adder(bits)
        files[f"adder_{n:02}.qasm"] = (n, body, False)
    specs = [(5, 60, 0.4), (6, 120, 0.5), (7, 180, 0.3), (8, 150, 0.6), (10, 240, 0.4),
             (10, 400, 0.5), (12, 320, 0.45), (14, 600, 0.4), (16, 850, 0.35)]
    for n, gates, ratio in specs:
        files[f"rand_{n:02}q_{gates:03}g.qasm"] = (n, random_mix(rng, n, gates, ratio), rng.random() < 0.5)
    assert len(files) == 20, len(files)
    for name, (n, body, measure) in sorted(files.items()):
        text = "\n".join(header(n, measure) + body + footer(n, measure)) + "\n"
        (OUT / name).write_text(text)
        print(f"{name}: {n} qubits, {len(body)} gates")


if __name__ == "__main__":
    main()
