//! Logical to physical qubit assignment.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MappingError {
    #[error("mapping has {got} entries, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("physical qubit {0} is out of range")]
    OutOfRange(usize),
    #[error("physical qubit {0} is assigned twice")]
    Duplicate(usize),
    #[error("{logical} logical qubits do not fit on {physical} physical qubits")]
    TooManyLogical { logical: usize, physical: usize },
}

/// A swap between two physical sites. Logical labels are derived on demand
/// from the mapping the swap is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SwapOp {
    pub phys_a: usize,
    pub phys_b: usize,
}

impl SwapOp {
    pub fn new(phys_a: usize, phys_b: usize) -> Self {
        debug_assert_ne!(phys_a, phys_b);
        SwapOp { phys_a, phys_b }
    }

    pub fn touches(&self, p: usize) -> bool {
        self.phys_a == p || self.phys_b == p
    }
}

impl fmt::Display for SwapOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "swap Q{},Q{}", self.phys_a, self.phys_b)
    }
}

/// Bijection between logical and physical qubits.
///
/// When the device has more sites than the program has qubits, the mapping
/// is padded with idle logical indices `num_logical..num_physical` so it
/// stays a permutation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mapping {
    log_to_phys: Vec<usize>,
    phys_to_log: Vec<usize>,
    num_logical: usize,
}

impl Mapping {
    pub fn identity(n: usize) -> Self {
        Mapping { log_to_phys: (0..n).collect(), phys_to_log: (0..n).collect(), num_logical: n }
    }

    /// Identity on the first `num_logical` qubits, padded up to `num_physical`.
    pub fn padded_identity(num_logical: usize, num_physical: usize) -> Result<Self, MappingError> {
        if num_logical > num_physical {
            return Err(MappingError::TooManyLogical { logical: num_logical, physical: num_physical });
        }
        let mut m = Mapping::identity(num_physical);
        m.num_logical = num_logical;
        Ok(m)
    }

    /// Builds a mapping from `placement[l] = physical site of logical l`.
    /// A short placement is padded with the unused sites in ascending order.
    pub fn from_placement(placement: &[usize], num_logical: usize, num_physical: usize) -> Result<Self, MappingError> {
        if placement.len() < num_logical || placement.len() > num_physical {
            return Err(MappingError::Length { expected: num_logical, got: placement.len() });
        }
        let mut used = vec![false; num_physical];
        for &p in placement {
            if p >= num_physical {
                return Err(MappingError::OutOfRange(p));
            }
            if used[p] {
                return Err(MappingError::Duplicate(p));
            }
            used[p] = true;
        }
        let mut log_to_phys = placement.to_vec();
        log_to_phys.extend((0..num_physical).filter(|&p| !used[p]));
        let mut phys_to_log = vec![0; num_physical];
        for (l, &p) in log_to_phys.iter().enumerate() {
            phys_to_log[p] = l;
        }
        Ok(Mapping { log_to_phys, phys_to_log, num_logical })
    }

    pub fn len(&self) -> usize {
        self.log_to_phys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_to_phys.is_empty()
    }

    /// Number of program qubits; indices at or above this are padding.
    pub fn num_logical(&self) -> usize {
        self.num_logical
    }

    pub fn phys(&self, logical: usize) -> usize {
        self.log_to_phys[logical]
    }

    pub fn logical(&self, physical: usize) -> usize {
        self.phys_to_log[physical]
    }

    /// True if no program qubit currently lives on `physical`.
    pub fn is_idle(&self, physical: usize) -> bool {
        self.phys_to_log[physical] >= self.num_logical
    }

    pub fn log_to_phys(&self) -> &[usize] {
        &self.log_to_phys
    }

    pub fn phys_to_log(&self) -> &[usize] {
        &self.phys_to_log
    }

    /// Placement of the program qubits only.
    pub fn placement(&self) -> &[usize] {
        &self.log_to_phys[..self.num_logical]
    }

    pub fn swap_in_place(&mut self, s: SwapOp) {
        let la = self.phys_to_log[s.phys_a];
        let lb = self.phys_to_log[s.phys_b];
        self.phys_to_log.swap(s.phys_a, s.phys_b);
        self.log_to_phys[la] = s.phys_b;
        self.log_to_phys[lb] = s.phys_a;
    }

    pub fn is_consistent(&self) -> bool {
        self.log_to_phys.len() == self.phys_to_log.len()
            && self.log_to_phys.iter().enumerate().all(|(l, &p)| p < self.phys_to_log.len() && self.phys_to_log[p] == l)
    }
}

pub fn identity_mapping(n: usize) -> Mapping {
    Mapping::identity(n)
}

/// Returns the mapping after exchanging the residents of the swap's two sites.
pub fn apply_swap(pi: &Mapping, s: SwapOp) -> Mapping {
    let mut next = pi.clone();
    next.swap_in_place(s);
    next
}
