//! QUBO and Ising models.
//!
//! A [`QuboModel`] stores an upper-triangular coefficient table: the pair
//! `(i, j)` with `i <= j` multiplies `x_i * x_j`, and the diagonal `(i, i)`
//! is a linear term because `x * x == x` for binary `x`. The conversion to
//! [`IsingModel`] uses the substitution `sigma = 2x - 1`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuboError {
    #[error("variable index ({i}, {j}) out of range for a model with {num_vars} variables")]
    IndexOutOfRange { i: usize, j: usize, num_vars: usize },
    #[error("coefficient {0} is not finite")]
    NonFinite(f64),
    #[error("assignment has {got} entries but the model has {expected} variables")]
    LengthMismatch { expected: usize, got: usize },
    #[error("spin {index} has value {value}; spins must be -1 or +1")]
    InvalidSpin { index: usize, value: i8 },
    #[error("bit {index} has value {value}; bits must be 0 or 1")]
    InvalidBit { index: usize, value: u8 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Sum with Neumaier compensation. Integer-valued inputs stay exact while
/// partial sums are below 2^53.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Value kept as an unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`,
/// so repeated accumulation of large terms does not lose the small ones.
#[derive(Debug, Default, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Coef {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Coef {
    fn add(&mut self, v: f64) {
        let (s, e) = two_sum(self.hi, v);
        let (hi, lo) = two_sum(s, self.lo + e);
        self.hi = hi;
        self.lo = lo;
    }

    /// Adds the exact product `w * c`.
    fn add_product(&mut self, w: f64, c: f64) {
        let p = w * c;
        let e = w.mul_add(c, -p);
        self.add(p);
        self.add(e);
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }

    fn scaled(&self, k: f64) -> Coef {
        let mut out = Coef::default();
        out.add_product(self.hi, k);
        out.add_product(self.lo, k);
        out
    }
}

/// A binary vector `x`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BitAssignment(Vec<u8>);

impl BitAssignment {
    pub fn zeros(len: usize) -> Self {
        BitAssignment(vec![0; len])
    }

    pub fn from_bits(bits: Vec<u8>) -> Result<Self, QuboError> {
        if let Some((index, &value)) = bits.iter().enumerate().find(|(_, &b)| b > 1) {
            return Err(QuboError::InvalidBit { index, value });
        }
        Ok(BitAssignment(bits))
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        BitAssignment(bits.iter().map(|&b| b as u8).collect())
    }

    /// Bit `i` of `mask` becomes `x_i`.
    pub fn from_mask(mask: u64, len: usize) -> Self {
        BitAssignment((0..len).map(|i| ((mask >> i) & 1) as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i] == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.0[i] = value as u8;
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] ^= 1;
    }

    /// Spin view, `sigma_i = 2 x_i - 1`.
    pub fn to_spins(&self) -> Vec<i8> {
        self.0.iter().map(|&b| 2 * b as i8 - 1).collect()
    }
}

impl std::fmt::Display for BitAssignment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.0 {
            f.write_char(if b == 1 { '1' } else { '0' })?;
        }
        Ok(())
    }
}

/// Quadratic unconstrained binary optimization model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboModel {
    num_vars: usize,
    terms: BTreeMap<(usize, usize), Coef>,
    offset: Coef,
}

impl QuboModel {
    pub fn new(num_vars: usize) -> Self {
        QuboModel {
            num_vars,
            terms: BTreeMap::new(),
            offset: Coef::default(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn offset(&self) -> f64 {
        self.offset.value()
    }

    /// Number of stored (nonzero or explicitly added) coefficients.
    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Adds `c` to the coefficient of `x_i x_j`. The pair is normalized so
    /// that `(2, 1)` and `(1, 2)` address the same entry.
    pub fn add_term(&mut self, i: usize, j: usize, c: f64) -> Result<(), QuboError> {
        self.add_scaled_term(i, j, 1.0, c)
    }

    /// Adds `w * c` to the coefficient of `x_i x_j` without rounding the
    /// product.
    pub fn add_scaled_term(&mut self, i: usize, j: usize, w: f64, c: f64) -> Result<(), QuboError> {
        if i >= self.num_vars || j >= self.num_vars {
            return Err(QuboError::IndexOutOfRange {
                i,
                j,
                num_vars: self.num_vars,
            });
        }
        let p = w * c;
        if !p.is_finite() {
            return Err(QuboError::NonFinite(p));
        }
        let key = (i.min(j), i.max(j));
        let entry = self.terms.entry(key).or_default();
        let mut next = *entry;
        next.add_product(w, c);
        if !next.value().is_finite() {
            return Err(QuboError::NonFinite(next.value()));
        }
        *entry = next;
        Ok(())
    }

    pub fn add_offset(&mut self, c: f64) -> Result<(), QuboError> {
        self.add_scaled_offset(1.0, c)
    }

    /// Adds `w * c` to the offset without rounding the product.
    pub fn add_scaled_offset(&mut self, w: f64, c: f64) -> Result<(), QuboError> {
        let p = w * c;
        let mut next = self.offset;
        next.add_product(w, c);
        if !p.is_finite() || !next.value().is_finite() {
            return Err(QuboError::NonFinite(p));
        }
        self.offset = next;
        Ok(())
    }

    pub fn coefficient(&self, i: usize, j: usize) -> f64 {
        self.terms
            .get(&(i.min(j), i.max(j)))
            .map_or(0.0, Coef::value)
    }

    /// Terms in ascending `(i, j)` order.
    pub fn terms(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.terms.iter().map(|(&k, v)| (k, v.value()))
    }

    /// `offset + sum_{i <= j} q_ij x_i x_j`.
    pub fn energy(&self, x: &BitAssignment) -> Result<f64, QuboError> {
        self.energy_split(x).map(|(hi, lo)| hi + lo)
    }

    /// Energy as an unevaluated sum `hi + lo`. Keeps the low-order digits
    /// that a single `f64` loses when large penalty terms are present.
    pub fn energy_split(&self, x: &BitAssignment) -> Result<(f64, f64), QuboError> {
        if x.len() != self.num_vars {
            return Err(QuboError::LengthMismatch {
                expected: self.num_vars,
                got: x.len(),
            });
        }
        let bits = x.bits();
        let mut sum = CompensatedSum::default();
        sum.add(self.offset.hi);
        sum.add(self.offset.lo);
        for (&(i, j), q) in &self.terms {
            if bits[i] == 1 && bits[j] == 1 {
                sum.add(q.hi);
                sum.add(q.lo);
            }
        }
        Ok(two_sum(sum.sum, sum.carry))
    }

    /// Multiplies every coefficient and the offset by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        QuboModel {
            num_vars: self.num_vars,
            terms: self.terms.iter().map(|(&key, v)| (key, v.scaled(k))).collect(),
            offset: self.offset.scaled(k),
        }
    }

    /// Mean absolute coefficient over stored terms, 0 for an empty table.
    pub fn mean_abs_coefficient(&self) -> f64 {
        if self.terms.is_empty() {
            return 0.0;
        }
        self.terms.values().map(|v| v.value().abs()).sum::<f64>() / self.terms.len() as f64
    }

    /// Rewrites the model over spins with `x = (sigma + 1) / 2`.
    pub fn to_ising(&self) -> IsingModel {
        let mut ising = IsingModel::new(self.num_vars);
        let mut offset = CompensatedSum::default();
        offset.add(self.offset.value());
        for ((i, j), q) in self.terms() {
            if i == j {
                // q x = q/2 sigma + q/2
                ising.fields[i] -= q / 2.0;
                offset.add(q / 2.0);
            } else {
                // q x_i x_j = q/4 (sigma_i sigma_j + sigma_i + sigma_j + 1)
                *ising.couplings.entry((i, j)).or_insert(0.0) -= q / 4.0;
                ising.fields[i] -= q / 4.0;
                ising.fields[j] -= q / 4.0;
                offset.add(q / 4.0);
            }
        }
        ising.offset = offset.value();
        ising
    }

    /// Serializes to the line-oriented text format read by [`QuboModel::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "nvars {}", self.num_vars);
        if self.offset() != 0.0 {
            let _ = writeln!(out, "offset {}", self.offset());
        }
        for ((i, j), q) in self.terms() {
            let _ = writeln!(out, "{i} {j} {q}");
        }
        out
    }

    /// Parses the text format: `nvars <N>`, optional `offset <c>`, then
    /// `<i> <j> <coeff>` lines. `#` starts a comment. Repeated pairs
    /// accumulate.
    pub fn parse(text: &str) -> Result<Self, QuboError> {
        let mut model: Option<QuboModel> = None;
        for (index, raw) in text.lines().enumerate() {
            let line_no = index + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |message: String| QuboError::Parse {
                line: line_no,
                message,
            };
            match (&mut model, fields.as_slice()) {
                (None, ["nvars", n]) => {
                    let n = n
                        .parse::<usize>()
                        .map_err(|e| err(format!("invalid variable count {n:?}: {e}")))?;
                    model = Some(QuboModel::new(n));
                }
                (None, _) => return Err(err("expected `nvars <N>` header".into())),
                (Some(_), ["nvars", ..]) => return Err(err("duplicate nvars header".into())),
                (Some(m), ["offset", c]) => {
                    let c = parse_f64(c).map_err(err)?;
                    m.add_offset(c).map_err(|e| err(e.to_string()))?;
                }
                (Some(m), [i, j, c]) => {
                    let i = i
                        .parse::<usize>()
                        .map_err(|e| err(format!("invalid index {i:?}: {e}")))?;
                    let j = j
                        .parse::<usize>()
                        .map_err(|e| err(format!("invalid index {j:?}: {e}")))?;
                    let c = parse_f64(c).map_err(err)?;
                    m.add_term(i, j, c).map_err(|e| err(e.to_string()))?;
                }
                (Some(_), _) => return Err(err(format!("unrecognized line {line:?}"))),
            }
        }
        model.ok_or(QuboError::Parse {
            line: text.lines().count().max(1),
            message: "missing `nvars <N>` header".into(),
        })
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v = s
        .parse::<f64>()
        .map_err(|e| format!("invalid number {s:?}: {e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("coefficient {s:?} is not finite"))
    }
}

/// Ising model `H(sigma) = offset - sum_{i<j} J_ij sigma_i sigma_j - sum_i h_i sigma_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingModel {
    num_spins: usize,
    couplings: BTreeMap<(usize, usize), f64>,
    fields: Vec<f64>,
    offset: f64,
}

impl IsingModel {
    pub fn new(num_spins: usize) -> Self {
        IsingModel {
            num_spins,
            couplings: BTreeMap::new(),
            fields: vec![0.0; num_spins],
            offset: 0.0,
        }
    }

    pub fn num_spins(&self) -> usize {
        self.num_spins
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn field(&self, i: usize) -> f64 {
        self.fields[i]
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.couplings
            .get(&(i.min(j), i.max(j)))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn couplings(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.couplings.iter().map(|(&k, &v)| (k, v))
    }

    pub fn add_coupling(&mut self, i: usize, j: usize, value: f64) -> Result<(), QuboError> {
        if i >= self.num_spins || j >= self.num_spins || i == j {
            return Err(QuboError::IndexOutOfRange {
                i,
                j,
                num_vars: self.num_spins,
            });
        }
        if !value.is_finite() {
            return Err(QuboError::NonFinite(value));
        }
        *self.couplings.entry((i.min(j), i.max(j))).or_insert(0.0) += value;
        Ok(())
    }

    pub fn add_field(&mut self, i: usize, value: f64) -> Result<(), QuboError> {
        if i >= self.num_spins {
            return Err(QuboError::IndexOutOfRange {
                i,
                j: i,
                num_vars: self.num_spins,
            });
        }
        if !value.is_finite() {
            return Err(QuboError::NonFinite(value));
        }
        self.fields[i] += value;
        Ok(())
    }

    pub fn set_offset(&mut self, offset: f64) {
        self.offset = offset;
    }

    pub fn energy(&self, spins: &[i8]) -> Result<f64, QuboError> {
        if spins.len() != self.num_spins {
            return Err(QuboError::LengthMismatch {
                expected: self.num_spins,
                got: spins.len(),
            });
        }
        if let Some((index, &value)) = spins.iter().enumerate().find(|(_, &s)| s != 1 && s != -1) {
            return Err(QuboError::InvalidSpin { index, value });
        }
        let mut sum = CompensatedSum::default();
        sum.add(self.offset);
        for (&(i, j), &jij) in &self.couplings {
            sum.add(-jij * f64::from(spins[i] * spins[j]));
        }
        for (h, &s) in self.fields.iter().zip(spins) {
            sum.add(-h * f64::from(s));
        }
        Ok(sum.value())
    }

    /// Inverse of [`QuboModel::to_ising`], substituting `sigma = 2x - 1`.
    pub fn to_qubo(&self) -> QuboModel {
        let mut model = QuboModel::new(self.num_spins);
        let mut offset = CompensatedSum::default();
        offset.add(self.offset);
        for (&(i, j), &jij) in &self.couplings {
            // -J (2x_i - 1)(2x_j - 1) = -4J x_i x_j + 2J x_i + 2J x_j - J
            model.terms.entry((i, j)).or_default().add(-4.0 * jij);
            model.terms.entry((i, i)).or_default().add(2.0 * jij);
            model.terms.entry((j, j)).or_default().add(2.0 * jij);
            offset.add(-jij);
        }
        for (i, &h) in self.fields.iter().enumerate() {
            if h != 0.0 {
                // -h (2x - 1) = -2h x + h
                model.terms.entry((i, i)).or_default().add(-2.0 * h);
                offset.add(h);
            }
        }
        model.offset.add(offset.value());
        model
    }
}

/// Ising energy of a model at `sigma`.
pub fn ising_energy(ising: &IsingModel, spins: &[i8]) -> Result<f64, QuboError> {
    ising.energy(spins)
}
