use crate::error::{Error, Result};
use crate::linalg::{c, CMat, C64};

/// Single-qubit Pauli matrix by index: 0 = identity, 1 = x, 2 = y, 3 = z.
pub fn pauli(index: usize) -> CMat {
    let (o, l, i) = (c(0., 0.), c(1., 0.), c(0., 1.));
    match index {
        0 => CMat::from_row_slice(2, 2, &[l, o, o, l]),
        1 => CMat::from_row_slice(2, 2, &[o, l, l, o]),
        2 => CMat::from_row_slice(2, 2, &[o, -i, i, o]),
        3 => CMat::from_row_slice(2, 2, &[l, o, o, -l]),
        _ => panic!("pauli index {index} out of range"),
    }
}

const LETTERS: [char; 4] = ['I', 'X', 'Y', 'Z'];

/// Pauli strings on `n_qubits` qubits in lexicographic order over
/// (I, X, Y, Z), first qubit most significant, identity first.
#[derive(Debug, Clone)]
pub struct PauliBasis {
    n_qubits: usize,
    strings: Vec<CMat>,
}

impl PauliBasis {
    pub fn new(n_qubits: usize) -> Self {
        assert!(n_qubits >= 1, "need at least one qubit");
        let count = 4usize.pow(n_qubits as u32);
        let strings = (0..count)
            .map(|idx| {
                digits(idx, n_qubits)
                    .into_iter()
                    .map(pauli)
                    .reduce(|acc, p| acc.kronecker(&p))
                    .unwrap()
            })
            .collect();
        Self { n_qubits, strings }
    }

    /// Basis for a Hilbert space of dimension `dim`, which must be a power of two.
    pub fn for_dim(dim: usize) -> Result<Self> {
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "dimension {dim} is not a power of two"
            )));
        }
        Ok(Self::new(dim.trailing_zeros() as usize))
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Hilbert-space dimension d = 2^L.
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Number of strings, d².
    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }

    pub fn string(&self, j: usize) -> &CMat {
        &self.strings[j]
    }

    pub fn strings(&self) -> &[CMat] {
        &self.strings
    }

    /// Label such as `"IX"` for string `j`.
    pub fn label(&self, j: usize) -> String {
        digits(j, self.n_qubits)
            .into_iter()
            .map(|k| LETTERS[k])
            .collect()
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.len()).map(|j| self.label(j)).collect()
    }

    /// Index of a label, e.g. `"ZX"`.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        if label.chars().count() != self.n_qubits {
            return None;
        }
        label.chars().try_fold(0usize, |acc, ch| {
            LETTERS.iter().position(|&l| l == ch).map(|k| acc * 4 + k)
        })
    }

    /// Coefficients `Tr[F_j X]` of an arbitrary matrix.
    pub fn decompose(&self, x: &CMat) -> Vec<C64> {
        self.strings.iter().map(|f| trace_product(f, x)).collect()
    }

    /// Inverse of [`decompose`](Self::decompose): `X = (1/d) Σ c_j F_j`.
    pub fn compose(&self, coeffs: &[C64]) -> CMat {
        let d = self.dim();
        let mut out = CMat::zeros(d, d);
        for (f, &cj) in self.strings.iter().zip(coeffs) {
            if cj != C64::new(0.0, 0.0) {
                out += f * cj;
            }
        }
        out / C64::new(d as f64, 0.0)
    }
}

/// `Tr[A B]` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

fn digits(mut idx: usize, n: usize) -> Vec<usize> {
    let mut out = vec![0; n];
    for slot in out.iter_mut().rev() {
        *slot = idx % 4;
        idx /= 4;
    }
    out
}
