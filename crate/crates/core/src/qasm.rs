//! OpenQASM 2.0 reader and writer for the subset the router understands.
//!
//! Supported statements are the `OPENQASM` version line, `include`, a single
//! `qreg`, any number of `creg`s, single-qubit gate applications, `cx`/`CX`,
//! `swap`, `barrier` and `measure`. Angle parameters are carried through as
//! text and never evaluated.

use std::fmt::Write as _;

use thiserror::Error;

/// Gate names that are accepted as two-qubit CNOTs.
const CX_NAMES: [&str; 2] = ["cx", "CX"];

/// Single-qubit gates from `qelib1.inc` plus the builtin `U`. Unknown names are
/// still accepted when applied to one qubit.
const SINGLE_QUBIT_NAMES: [&str; 20] = [
    "U", "u", "u1", "u2", "u3", "p", "id", "x", "y", "z", "h", "s", "sdg", "t", "tdg", "rx",
    "ry", "rz", "sx", "sxdg",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QasmError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: only one quantum register is supported (second register `{name}`)")]
    MultipleRegisters { line: usize, col: usize, name: String },
    #[error("{line}:{col}: gate `{name}` expects {expected} qubit(s), got {got}")]
    Arity { line: usize, col: usize, name: String, expected: usize, got: usize },
    #[error("{line}:{col}: unsupported multi-qubit gate `{name}`")]
    UnknownMultiQubit { line: usize, col: usize, name: String },
    #[error("{line}:{col}: unsupported statement `{keyword}`")]
    Unsupported { line: usize, col: usize, keyword: String },
    #[error("{line}:{col}: {msg}")]
    Semantic { line: usize, col: usize, msg: String },
}

impl QasmError {
    /// One-based line and column of the offending statement or token.
    pub fn position(&self) -> (usize, usize) {
        match self {
            QasmError::Syntax { line, col, .. }
            | QasmError::MultipleRegisters { line, col, .. }
            | QasmError::Arity { line, col, .. }
            | QasmError::UnknownMultiQubit { line, col, .. }
            | QasmError::Unsupported { line, col, .. }
            | QasmError::Semantic { line, col, .. } => (*line, *col),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    Single,
    Cx,
    Swap,
    Barrier,
    Measure,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassicalBit {
    pub register: String,
    pub index: usize,
}

/// One statement that acts on qubits, exactly as written in the source.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawGate {
    pub name: String,
    pub params: Vec<String>,
    pub qubits: Vec<usize>,
    /// Destination bit for `measure`.
    pub clbit: Option<ClassicalBit>,
}

impl RawGate {
    pub fn new(name: &str, qubits: &[usize]) -> Self {
        RawGate { name: name.to_string(), params: Vec::new(), qubits: qubits.to_vec(), clbit: None }
    }

    pub fn with_params(name: &str, params: &[&str], qubits: &[usize]) -> Self {
        RawGate {
            name: name.to_string(),
            params: params.iter().map(|p| p.to_string()).collect(),
            qubits: qubits.to_vec(),
            clbit: None,
        }
    }

    pub fn measure(qubit: usize, register: &str, index: usize) -> Self {
        RawGate {
            name: "measure".to_string(),
            params: Vec::new(),
            qubits: vec![qubit],
            clbit: Some(ClassicalBit { register: register.to_string(), index }),
        }
    }

    pub fn kind(&self) -> GateKind {
        match self.name.as_str() {
            "barrier" => GateKind::Barrier,
            "measure" => GateKind::Measure,
            "swap" => GateKind::Swap,
            n if CX_NAMES.contains(&n) => GateKind::Cx,
            _ => GateKind::Single,
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self.kind(), GateKind::Cx | GateKind::Swap)
    }
}

/// A parsed program: one quantum register plus an ordered gate list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceCircuit {
    pub num_qubits: usize,
    pub version: String,
    pub includes: Vec<String>,
    pub qreg: String,
    pub cregs: Vec<(String, usize)>,
    pub gates: Vec<RawGate>,
}

impl SourceCircuit {
    pub fn new(num_qubits: usize) -> Self {
        SourceCircuit {
            num_qubits,
            version: "2.0".to_string(),
            includes: vec!["qelib1.inc".to_string()],
            qreg: "q".to_string(),
            cregs: Vec::new(),
            gates: Vec::new(),
        }
    }

    pub fn push(&mut self, gate: RawGate) -> &mut Self {
        self.gates.push(gate);
        self
    }

    /// Number of gate statements that are neither barriers nor measurements.
    pub fn gate_count(&self) -> usize {
        self.gates
            .iter()
            .filter(|g| !matches!(g.kind(), GateKind::Barrier | GateKind::Measure))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Punct(char),
    Arrow,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> QasmError {
    QasmError::Syntax { line, col, msg: msg.into() }
}

fn tokenize(text: &str) -> Result<Vec<Token>, QasmError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut advance = |n: usize, i: &mut usize| {
            for _ in 0..n {
                if chars[*i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                *i += 1;
            }
        };
        if c.is_whitespace() {
            advance(1, &mut i);
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            let mut n = 0;
            while i + n < chars.len() && chars[i + n] != '\n' {
                n += 1;
            }
            advance(n, &mut i);
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut n = 0;
            while i + n < chars.len() && (chars[i + n].is_ascii_alphanumeric() || chars[i + n] == '_') {
                n += 1;
            }
            let s: String = chars[i..i + n].iter().collect();
            advance(n, &mut i);
            out.push(Token { tok: Tok::Ident(s), line: tl, col: tc });
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut n = 0;
            while i + n < chars.len() {
                let d = chars[i + n];
                let exp_sign = (d == '+' || d == '-') && n > 0 && matches!(chars[i + n - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    n += 1;
                } else {
                    break;
                }
            }
            let s: String = chars[i..i + n].iter().collect();
            advance(n, &mut i);
            out.push(Token { tok: Tok::Number(s), line: tl, col: tc });
        } else if c == '"' {
            let mut n = 1;
            while i + n < chars.len() && chars[i + n] != '"' {
                if chars[i + n] == '\n' {
                    return Err(syntax(tl, tc, "unterminated string"));
                }
                n += 1;
            }
            if i + n >= chars.len() {
                return Err(syntax(tl, tc, "unterminated string"));
            }
            let s: String = chars[i + 1..i + n].iter().collect();
            advance(n + 1, &mut i);
            out.push(Token { tok: Tok::Str(s), line: tl, col: tc });
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            advance(2, &mut i);
            out.push(Token { tok: Tok::Arrow, line: tl, col: tc });
        } else if "[](),;+-*/^{}=<>".contains(c) {
            advance(1, &mut i);
            out.push(Token { tok: Tok::Punct(c), line: tl, col: tc });
        } else {
            return Err(syntax(tl, tc, format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

/// A qubit or bit argument: either a whole register or one indexed element.
#[derive(Debug)]
struct Arg {
    reg: String,
    index: Option<usize>,
    line: usize,
    col: usize,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
    circuit: SourceCircuit,
    qreg_seen: bool,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map(|t| (t.line, t.col)).unwrap_or(self.end)
    }

    fn next(&mut self) -> Result<Token, QasmError> {
        let (l, c) = self.here();
        let t = self.toks.get(self.pos).cloned().ok_or_else(|| syntax(l, c, "unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect_punct(&mut self, p: char) -> Result<(), QasmError> {
        let t = self.next()?;
        match t.tok {
            Tok::Punct(c) if c == p => Ok(()),
            other => Err(syntax(t.line, t.col, format!("expected `{p}`, found {}", describe(&other)))),
        }
    }

    fn expect_ident(&mut self) -> Result<(String, usize, usize), QasmError> {
        let t = self.next()?;
        match t.tok {
            Tok::Ident(s) => Ok((s, t.line, t.col)),
            other => Err(syntax(t.line, t.col, format!("expected identifier, found {}", describe(&other)))),
        }
    }

    fn expect_uint(&mut self) -> Result<usize, QasmError> {
        let t = self.next()?;
        match &t.tok {
            Tok::Number(s) => s
                .parse::<usize>()
                .map_err(|_| syntax(t.line, t.col, format!("expected non-negative integer, found `{s}`"))),
            other => Err(syntax(t.line, t.col, format!("expected integer, found {}", describe(other)))),
        }
    }

    fn at_punct(&self, p: char) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Punct(c), .. }) if *c == p)
    }

    fn parse_program(&mut self) -> Result<(), QasmError> {
        while let Some(tok) = self.peek().cloned() {
            let Tok::Ident(word) = &tok.tok else {
                return Err(syntax(tok.line, tok.col, format!("expected statement, found {}", describe(&tok.tok))));
            };
            match word.as_str() {
                "OPENQASM" => {
                    self.pos += 1;
                    let t = self.next()?;
                    match t.tok {
                        Tok::Number(v) => self.circuit.version = v,
                        other => return Err(syntax(t.line, t.col, format!("expected version, found {}", describe(&other)))),
                    }
                    self.expect_punct(';')?;
                }
                "include" => {
                    self.pos += 1;
                    let t = self.next()?;
                    match t.tok {
                        Tok::Str(s) => self.circuit.includes.push(s),
                        other => return Err(syntax(t.line, t.col, format!("expected file name, found {}", describe(&other)))),
                    }
                    self.expect_punct(';')?;
                }
                "qreg" => {
                    self.pos += 1;
                    let (name, line, col) = self.expect_ident()?;
                    self.expect_punct('[')?;
                    let n = self.expect_uint()?;
                    self.expect_punct(']')?;
                    self.expect_punct(';')?;
                    if self.qreg_seen {
                        return Err(QasmError::MultipleRegisters { line, col, name });
                    }
                    self.qreg_seen = true;
                    self.circuit.qreg = name;
                    self.circuit.num_qubits = n;
                }
                "creg" => {
                    self.pos += 1;
                    let (name, line, col) = self.expect_ident()?;
                    self.expect_punct('[')?;
                    let n = self.expect_uint()?;
                    self.expect_punct(']')?;
                    self.expect_punct(';')?;
                    if self.circuit.cregs.iter().any(|(r, _)| *r == name) {
                        return Err(QasmError::Semantic { line, col, msg: format!("duplicate register `{name}`") });
                    }
                    self.circuit.cregs.push((name, n));
                }
                "gate" | "opaque" | "if" | "reset" => {
                    return Err(QasmError::Unsupported { line: tok.line, col: tok.col, keyword: word.clone() });
                }
                "measure" => self.parse_measure()?,
                _ => self.parse_gate()?,
            }
        }
        Ok(())
    }

    fn parse_arg(&mut self) -> Result<Arg, QasmError> {
        let (reg, line, col) = self.expect_ident()?;
        let index = if self.at_punct('[') {
            self.pos += 1;
            let i = self.expect_uint()?;
            self.expect_punct(']')?;
            Some(i)
        } else {
            None
        };
        Ok(Arg { reg, index, line, col })
    }

    /// Resolves a qubit argument to indices, expanding a bare register name.
    fn qubits_of(&self, arg: &Arg) -> Result<Vec<usize>, QasmError> {
        if !self.qreg_seen || arg.reg != self.circuit.qreg {
            let msg = if self.circuit.cregs.iter().any(|(r, _)| *r == arg.reg) {
                format!("`{}` is a classical register", arg.reg)
            } else {
                format!("undeclared quantum register `{}`", arg.reg)
            };
            return Err(QasmError::Semantic { line: arg.line, col: arg.col, msg });
        }
        match arg.index {
            Some(i) if i >= self.circuit.num_qubits => Err(QasmError::Semantic {
                line: arg.line,
                col: arg.col,
                msg: format!("qubit index {i} out of range for `{}[{}]`", arg.reg, self.circuit.num_qubits),
            }),
            Some(i) => Ok(vec![i]),
            None => Ok((0..self.circuit.num_qubits).collect()),
        }
    }

    fn parse_measure(&mut self) -> Result<(), QasmError> {
        let kw = self.next()?;
        let q = self.parse_arg()?;
        let t = self.next()?;
        if t.tok != Tok::Arrow {
            return Err(syntax(t.line, t.col, format!("expected `->`, found {}", describe(&t.tok))));
        }
        let c = self.parse_arg()?;
        self.expect_punct(';')?;
        let qubits = self.qubits_of(&q)?;
        let Some(&(_, csize)) = self.circuit.cregs.iter().find(|(r, _)| *r == c.reg) else {
            return Err(QasmError::Semantic { line: c.line, col: c.col, msg: format!("undeclared classical register `{}`", c.reg) });
        };
        let bits: Vec<usize> = match c.index {
            Some(i) if i >= csize => {
                return Err(QasmError::Semantic { line: c.line, col: c.col, msg: format!("bit index {i} out of range") })
            }
            Some(i) => vec![i],
            None => (0..csize).collect(),
        };
        if qubits.len() != bits.len() {
            return Err(QasmError::Semantic {
                line: kw.line,
                col: kw.col,
                msg: "measure register sizes differ".to_string(),
            });
        }
        for (q, b) in qubits.into_iter().zip(bits) {
            self.circuit.gates.push(RawGate::measure(q, &c.reg, b));
        }
        Ok(())
    }

    fn parse_params(&mut self) -> Result<Vec<String>, QasmError> {
        // Raw token text between the outer parentheses, split at top-level commas.
        self.expect_punct('(')?;
        let mut params = Vec::new();
        let mut cur = String::new();
        let mut depth = 0usize;
        loop {
            let t = self.next()?;
            match &t.tok {
                Tok::Punct('(') => {
                    depth += 1;
                    cur.push('(');
                }
                Tok::Punct(')') if depth == 0 => {
                    if !cur.is_empty() || !params.is_empty() {
                        if cur.is_empty() {
                            return Err(syntax(t.line, t.col, "empty parameter"));
                        }
                        params.push(std::mem::take(&mut cur));
                    }
                    return Ok(params);
                }
                Tok::Punct(')') => {
                    depth -= 1;
                    cur.push(')');
                }
                Tok::Punct(',') if depth == 0 => {
                    if cur.is_empty() {
                        return Err(syntax(t.line, t.col, "empty parameter"));
                    }
                    params.push(std::mem::take(&mut cur));
                }
                Tok::Punct(';') => return Err(syntax(t.line, t.col, "unclosed parameter list")),
                Tok::Ident(s) | Tok::Number(s) => cur.push_str(s),
                Tok::Punct(c) => cur.push(*c),
                other => return Err(syntax(t.line, t.col, format!("unexpected {} in parameters", describe(other)))),
            }
        }
    }

    fn parse_gate(&mut self) -> Result<(), QasmError> {
        let (name, line, col) = self.expect_ident()?;
        let params = if self.at_punct('(') { self.parse_params()? } else { Vec::new() };
        let mut args = vec![self.parse_arg()?];
        while self.at_punct(',') {
            self.pos += 1;
            args.push(self.parse_arg()?);
        }
        self.expect_punct(';')?;

        if name == "barrier" {
            let mut qubits = Vec::new();
            for a in &args {
                for q in self.qubits_of(a)? {
                    if !qubits.contains(&q) {
                        qubits.push(q);
                    }
                }
            }
            self.circuit.gates.push(RawGate { name, params, qubits, clbit: None });
            return Ok(());
        }

        let two_qubit = CX_NAMES.contains(&name.as_str()) || name == "swap";
        let expected = if two_qubit { 2 } else { 1 };
        if args.len() != expected {
            if !two_qubit && args.len() >= 2 && !SINGLE_QUBIT_NAMES.contains(&name.as_str()) {
                return Err(QasmError::UnknownMultiQubit { line, col, name });
            }
            return Err(QasmError::Arity { line, col, name, expected, got: args.len() });
        }
        if two_qubit {
            if args.iter().any(|a| a.index.is_none()) {
                return Err(QasmError::Semantic { line, col, msg: "register broadcast of two-qubit gates is not supported".into() });
            }
            let a = self.qubits_of(&args[0])?[0];
            let b = self.qubits_of(&args[1])?[0];
            if a == b {
                return Err(QasmError::Semantic { line, col, msg: format!("`{name}` applied twice to qubit {a}") });
            }
            self.circuit.gates.push(RawGate { name, params, qubits: vec![a, b], clbit: None });
        } else {
            for q in self.qubits_of(&args[0])? {
                self.circuit.gates.push(RawGate { name: name.clone(), params: params.clone(), qubits: vec![q], clbit: None });
            }
        }
        Ok(())
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Number(s) => format!("number `{s}`"),
        Tok::Str(s) => format!("string \"{s}\""),
        Tok::Punct(c) => format!("`{c}`"),
        Tok::Arrow => "`->`".to_string(),
    }
}

/// Parses OpenQASM 2.0 source text.
pub fn parse_qasm(text: &str) -> Result<SourceCircuit, QasmError> {
    let toks = tokenize(text)?;
    let line_count = text.lines().count().max(1);
    let last_col = text.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
    let mut circuit = SourceCircuit::new(0);
    circuit.includes.clear();
    let mut p = Parser { toks, pos: 0, end: (line_count, last_col), circuit, qreg_seen: false };
    p.parse_program()?;
    Ok(p.circuit)
}

fn write_gate(out: &mut String, reg: &str, g: &RawGate) {
    out.push_str(&g.name);
    if !g.params.is_empty() {
        let _ = write!(out, "({})", g.params.join(","));
    }
    out.push(' ');
    let args: Vec<String> = g.qubits.iter().map(|q| format!("{reg}[{q}]")).collect();
    out.push_str(&args.join(","));
    if let Some(c) = &g.clbit {
        let _ = write!(out, " -> {}[{}]", c.register, c.index);
    }
    out.push_str(";\n");
}

/// Prints a circuit as OpenQASM 2.0 with LF line endings.
///
/// With `decompose_swaps`, every `swap a,b` becomes three CNOTs; when
/// `directed` is also set the middle CNOT is reversed with Hadamards so all
/// three use `a` as control (the `a -> b` link direction).
pub fn emit_qasm(circuit: &SourceCircuit, decompose_swaps: bool, directed: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "OPENQASM {};", circuit.version);
    for inc in &circuit.includes {
        let _ = writeln!(out, "include \"{inc}\";");
    }
    let _ = writeln!(out, "qreg {}[{}];", circuit.qreg, circuit.num_qubits);
    for (name, n) in &circuit.cregs {
        let _ = writeln!(out, "creg {name}[{n}];");
    }
    let reg = circuit.qreg.as_str();
    for g in &circuit.gates {
        if decompose_swaps && g.kind() == GateKind::Swap {
            let (a, b) = (g.qubits[0], g.qubits[1]);
            for piece in swap_decomposition(a, b, directed) {
                write_gate(&mut out, reg, &piece);
            }
        } else {
            write_gate(&mut out, reg, g);
        }
    }
    out
}

/// Gate sequence implementing `swap a,b`.
pub fn swap_decomposition(a: usize, b: usize, directed: bool) -> Vec<RawGate> {
    if directed {
        vec![
            RawGate::new("cx", &[a, b]),
            RawGate::new("h", &[a]),
            RawGate::new("h", &[b]),
            RawGate::new("cx", &[a, b]),
            RawGate::new("h", &[a]),
            RawGate::new("h", &[b]),
            RawGate::new("cx", &[a, b]),
        ]
    } else {
        vec![RawGate::new("cx", &[a, b]), RawGate::new("cx", &[b, a]), RawGate::new("cx", &[a, b])]
    }
}
