//! Truncated multimode Fock space.
//!
//! Every mode carries its own inclusive photon-number cutoff. Basis states are
//! enumerated lexicographically over occupation tuples with the last mode
//! varying fastest, so the flat index of `(n_0, ..., n_{k-1})` is
//! `sum_i n_i * stride_i` with `stride_{k-1} = 1`. The same ordering is used
//! for Kronecker products and for serialized snapshots.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest tolerated anti-Hermitian part of a density operator.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Most negative tolerated eigenvalue of a density operator.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Slack allowed above unit trace / unit norm.
pub const NORM_SLACK: f64 = 1e-12;
/// Slack allowed outside [0, 1] before a fidelity is treated as broken.
pub const FIDELITY_SLACK: f64 = 1e-10;

/// Basis ordering note written into every snapshot.
pub const BASIS_ORDER: &str = "lexicographic over occupation tuples, last mode fastest";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRegister", into = "RawRegister")]
pub struct ModeRegister {
    labels: Vec<String>,
    cutoffs: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegister {
    labels: Vec<String>,
    cutoffs: Vec<usize>,
}

impl TryFrom<RawRegister> for ModeRegister {
    type Error = Error;

    fn try_from(raw: RawRegister) -> Result<Self> {
        if raw.labels.len() != raw.cutoffs.len() {
            return Err(Error::InvalidRegister(format!(
                "{} labels but {} cutoffs",
                raw.labels.len(),
                raw.cutoffs.len()
            )));
        }
        ModeRegister::new(raw.labels.into_iter().zip(raw.cutoffs))
    }
}

impl From<ModeRegister> for RawRegister {
    fn from(reg: ModeRegister) -> Self {
        RawRegister {
            labels: reg.labels,
            cutoffs: reg.cutoffs,
        }
    }
}

impl ModeRegister {
    pub fn new<S: Into<String>>(modes: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut labels = Vec::new();
        let mut cutoffs = Vec::new();
        for (label, cutoff) in modes {
            let label = label.into();
            if label.is_empty() {
                return Err(Error::InvalidRegister("empty mode label".into()));
            }
            if labels.contains(&label) {
                return Err(Error::InvalidRegister(format!("duplicate mode `{label}`")));
            }
            if cutoff < 1 {
                return Err(Error::InvalidRegister(format!(
                    "mode `{label}` has cutoff 0; at least 1 is required"
                )));
            }
            labels.push(label);
            cutoffs.push(cutoff);
        }
        Ok(Self { labels, cutoffs })
    }

    /// Register with no modes; its single basis state is the empty tuple.
    pub fn empty() -> Self {
        Self {
            labels: Vec::new(),
            cutoffs: Vec::new(),
        }
    }

    pub fn single(label: &str, cutoff: usize) -> Result<Self> {
        Self::new([(label, cutoff)])
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.cutoffs.iter().map(|c| c + 1).product()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownMode(label.to_string()))
    }

    pub fn cutoff(&self, label: &str) -> Result<usize> {
        Ok(self.cutoffs[self.position(label)?])
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.len()];
        for i in (0..self.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * (self.cutoffs[i + 1] + 1);
        }
        strides
    }

    /// Flat index of an occupation tuple, or `None` if any mode exceeds its cutoff.
    pub fn index_of(&self, occupations: &[usize]) -> Option<usize> {
        if occupations.len() != self.len() {
            return None;
        }
        let mut index = 0;
        for (i, &n) in occupations.iter().enumerate() {
            if n > self.cutoffs[i] {
                return None;
            }
            index = index * (self.cutoffs[i] + 1) + n;
        }
        Some(index)
    }

    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.len()];
        for i in (0..self.len()).rev() {
            let base = self.cutoffs[i] + 1;
            occ[i] = index % base;
            index /= base;
        }
        occ
    }

    /// All occupation tuples in basis order.
    pub fn basis(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.dim()).map(move |i| self.occupations(i))
    }

    /// Concatenation of two registers with disjoint labels.
    pub fn join(&self, other: &ModeRegister) -> Result<ModeRegister> {
        let overlap: Vec<&str> = self
            .labels
            .iter()
            .filter(|l| other.labels.contains(l))
            .map(String::as_str)
            .collect();
        if !overlap.is_empty() {
            return Err(Error::OverlappingModes(overlap.join(", ")));
        }
        Ok(ModeRegister {
            labels: self.labels.iter().chain(&other.labels).cloned().collect(),
            cutoffs: self.cutoffs.iter().chain(&other.cutoffs).copied().collect(),
        })
    }

    /// The listed modes, kept in this register's order.
    pub fn subset(&self, keep: &[&str]) -> Result<ModeRegister> {
        for label in keep {
            self.position(label)?;
        }
        let mut labels = Vec::new();
        let mut cutoffs = Vec::new();
        for (label, &cutoff) in self.labels.iter().zip(&self.cutoffs) {
            if keep.contains(&label.as_str()) {
                labels.push(label.clone());
                cutoffs.push(cutoff);
            }
        }
        Ok(ModeRegister { labels, cutoffs })
    }

    /// Same register with one mode's cutoff replaced.
    pub fn with_cutoff(&self, label: &str, cutoff: usize) -> Result<ModeRegister> {
        let pos = self.position(label)?;
        if cutoff < 1 {
            return Err(Error::InvalidRegister(format!("mode `{label}` cutoff 0")));
        }
        let mut reg = self.clone();
        reg.cutoffs[pos] = cutoff;
        Ok(reg)
    }

    /// Splits the flat basis into (kept, traced) index tables: `table[k][t]` is
    /// the global index whose kept modes have flat index `k` and traced modes `t`.
    pub(crate) fn split_table(&self, keep: &ModeRegister) -> (ModeRegister, Vec<Vec<usize>>) {
        let traced_labels: Vec<&str> = self
            .labels
            .iter()
            .filter(|l| !keep.labels.contains(l))
            .map(String::as_str)
            .collect();
        let traced = self
            .subset(&traced_labels)
            .expect("traced labels are drawn from the register");
        let keep_pos: Vec<usize> = keep
            .labels
            .iter()
            .map(|l| self.position(l).expect("kept label present"))
            .collect();
        let traced_pos: Vec<usize> = traced
            .labels
            .iter()
            .map(|l| self.position(l).expect("traced label present"))
            .collect();
        let strides = self.strides();
        let mut table = vec![vec![0; traced.dim()]; keep.dim()];
        for (k, row) in table.iter_mut().enumerate() {
            let kocc = keep.occupations(k);
            let kbase: usize = keep_pos
                .iter()
                .zip(&kocc)
                .map(|(&p, &n)| strides[p] * n)
                .sum();
            for (t, slot) in row.iter_mut().enumerate() {
                let tocc = traced.occupations(t);
                let tbase: usize = traced_pos
                    .iter()
                    .zip(&tocc)
                    .map(|(&p, &n)| strides[p] * n)
                    .sum();
                *slot = kbase + tbase;
            }
        }
        (traced, table)
    }

    /// Index map from `self` into `larger`, which must carry the same labels in
    /// the same order with cutoffs at least as large.
    pub(crate) fn embedding_into(&self, larger: &ModeRegister) -> Result<Vec<usize>> {
        if self.labels != larger.labels {
            return Err(Error::RegisterMismatch(format!(
                "cannot embed {:?} into {:?}",
                self.labels, larger.labels
            )));
        }
        if self.cutoffs.iter().zip(&larger.cutoffs).any(|(a, b)| a > b) {
            return Err(Error::RegisterMismatch(
                "embedding target has a smaller cutoff".into(),
            ));
        }
        Ok(self
            .basis()
            .map(|occ| larger.index_of(&occ).expect("cutoffs dominate"))
            .collect())
    }
}

fn check_same_register(a: &ModeRegister, b: &ModeRegister) -> Result<()> {
    if a != b {
        return Err(Error::RegisterMismatch(format!(
            "{:?}/{:?} vs {:?}/{:?}",
            a.labels, a.cutoffs, b.labels, b.cutoffs
        )));
    }
    Ok(())
}

/// Pure (possibly sub-normalized) state vector over a [`ModeRegister`].
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    register: ModeRegister,
    amplitudes: DVector<C64>,
}

impl FockVector {
    pub fn new(register: ModeRegister, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != register.dim() {
            return Err(Error::InvalidState(format!(
                "{} amplitudes for a register of dimension {}",
                amplitudes.len(),
                register.dim()
            )));
        }
        let norm = amplitudes.norm_squared();
        if !norm.is_finite() || norm > 1.0 + NORM_SLACK {
            return Err(Error::InvalidState(format!(
                "squared norm {norm} exceeds 1"
            )));
        }
        Ok(Self {
            register,
            amplitudes,
        })
    }

    pub(crate) fn from_parts_unchecked(register: ModeRegister, amplitudes: DVector<C64>) -> Self {
        debug_assert_eq!(register.dim(), amplitudes.len());
        Self {
            register,
            amplitudes,
        }
    }

    pub fn basis_state(register: ModeRegister, occupations: &[usize]) -> Result<Self> {
        let index = register.index_of(occupations).ok_or_else(|| {
            Error::InvalidState(format!("occupation {occupations:?} outside register"))
        })?;
        let mut amplitudes = DVector::zeros(register.dim());
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self {
            register,
            amplitudes,
        })
    }

    pub fn vacuum(register: ModeRegister) -> Self {
        let zeros = vec![0; register.len()];
        Self::basis_state(register, &zeros).expect("vacuum is always inside the register")
    }

    /// Superposition of basis kets; the result is normalized.
    pub fn from_terms(register: ModeRegister, terms: &[(&[usize], C64)]) -> Result<Self> {
        let mut amplitudes = DVector::zeros(register.dim());
        for (occ, amp) in terms {
            let index = register.index_of(occ).ok_or_else(|| {
                Error::InvalidState(format!("occupation {occ:?} outside register"))
            })?;
            amplitudes[index] += amp;
        }
        let norm = amplitudes.norm();
        if norm == 0.0 {
            return Err(Error::InvalidState("superposition has zero norm".into()));
        }
        amplitudes /= C64::new(norm, 0.0);
        Ok(Self {
            register,
            amplitudes,
        })
    }

    pub fn register(&self) -> &ModeRegister {
        &self.register
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, occupations: &[usize]) -> C64 {
        self.register
            .index_of(occupations)
            .map(|i| self.amplitudes[i])
            .unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    /// True when the squared norm falls measurably short of one.
    pub fn is_subnormalized(&self) -> bool {
        self.norm_sqr() < 1.0 - NORM_SLACK
    }

    pub fn normalized(&self) -> Result<Self> {
        let norm = self.amplitudes.norm();
        if norm == 0.0 {
            return Err(Error::InvalidState(
                "cannot normalize the zero vector".into(),
            ));
        }
        Ok(Self {
            register: self.register.clone(),
            amplitudes: &self.amplitudes / C64::new(norm, 0.0),
        })
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &FockVector) -> Result<C64> {
        check_same_register(&self.register, &other.register)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn tensor(&self, other: &FockVector) -> Result<FockVector> {
        let register = self.register.join(&other.register)?;
        let amplitudes = self.amplitudes.kronecker(&other.amplitudes);
        Ok(Self {
            register,
            amplitudes,
        })
    }

    /// Re-expresses the state in a register with the same modes and larger cutoffs.
    pub fn embed(&self, register: &ModeRegister) -> Result<FockVector> {
        let map = self.register.embedding_into(register)?;
        let mut amplitudes = DVector::zeros(register.dim());
        for (i, &j) in map.iter().enumerate() {
            amplitudes[j] = self.amplitudes[i];
        }
        Ok(Self {
            register: register.clone(),
            amplitudes,
        })
    }

    pub fn to_density(&self) -> DensityOperator {
        let matrix = &self.amplitudes * self.amplitudes.adjoint();
        DensityOperator {
            register: self.register.clone(),
            matrix,
        }
    }

    pub fn to_snapshot(&self) -> VectorSnapshot {
        VectorSnapshot {
            register: self.register.clone(),
            basis_order: BASIS_ORDER.to_string(),
            amplitudes: self.amplitudes.iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn from_snapshot(snapshot: VectorSnapshot) -> Result<Self> {
        let amplitudes = DVector::from_iterator(
            snapshot.amplitudes.len(),
            snapshot.amplitudes.iter().map(|&[re, im]| C64::new(re, im)),
        );
        Self::new(snapshot.register, amplitudes)
    }
}

/// Density operator over a [`ModeRegister`]; the trace may fall below one
/// for unnormalized post-selection results.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    register: ModeRegister,
    matrix: DMatrix<C64>,
}

impl DensityOperator {
    /// Validates Hermiticity, positivity and trace before accepting `matrix`.
    pub fn new(register: ModeRegister, matrix: DMatrix<C64>) -> Result<Self> {
        let dim = register.dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::InvalidState(format!(
                "{}x{} matrix for a register of dimension {dim}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let rho = Self { register, matrix };
        rho.check_invariants()?;
        Ok(rho)
    }

    pub(crate) fn from_parts_unchecked(register: ModeRegister, matrix: DMatrix<C64>) -> Self {
        debug_assert_eq!(register.dim(), matrix.nrows());
        Self { register, matrix }
    }

    pub fn register(&self) -> &ModeRegister {
        &self.register
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let diff = &self.matrix - self.matrix.adjoint();
        diff.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        let mut values: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        values.sort_by(f64::total_cmp);
        values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self
            .matrix
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Invariant(
                "density operator has non-finite entries".into(),
            ));
        }
        let herm = self.hermiticity_defect();
        if herm >= HERMITICITY_TOL {
            return Err(Error::Invariant(format!(
                "not Hermitian: defect {herm:.3e}"
            )));
        }
        let tr = self.trace();
        if !(0.0..=1.0 + NORM_SLACK).contains(&tr) {
            return Err(Error::Invariant(format!("trace {tr} outside [0, 1]")));
        }
        let min = self.min_eigenvalue();
        if min <= -POSITIVITY_TOL {
            return Err(Error::Invariant(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    pub fn normalized(&self) -> Result<DensityOperator> {
        let tr = self.trace();
        if tr <= 0.0 {
            return Err(Error::InvalidState(
                "cannot normalize a traceless operator".into(),
            ));
        }
        Ok(Self {
            register: self.register.clone(),
            matrix: &self.matrix / C64::new(tr, 0.0),
        })
    }

    /// Probability of each basis state, in basis order.
    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn population(&self, occupations: &[usize]) -> f64 {
        self.register
            .index_of(occupations)
            .map(|i| self.matrix[(i, i)].re)
            .unwrap_or(0.0)
    }

    pub fn tensor(&self, other: &DensityOperator) -> Result<DensityOperator> {
        let register = self.register.join(&other.register)?;
        Ok(Self {
            register,
            matrix: self.matrix.kronecker(&other.matrix),
        })
    }

    pub fn partial_trace(&self, keep: &[&str]) -> Result<DensityOperator> {
        let kept = self.register.subset(keep)?;
        let (_, table) = self.register.split_table(&kept);
        let dk = kept.dim();
        let mut out = DMatrix::zeros(dk, dk);
        for r in 0..dk {
            for s in 0..dk {
                out[(r, s)] = table[r]
                    .iter()
                    .zip(&table[s])
                    .map(|(&i, &j)| self.matrix[(i, j)])
                    .sum();
            }
        }
        Ok(Self {
            register: kept,
            matrix: out,
        })
    }

    pub fn embed(&self, register: &ModeRegister) -> Result<DensityOperator> {
        let map = self.register.embedding_into(register)?;
        let mut matrix = DMatrix::zeros(register.dim(), register.dim());
        for (i, &gi) in map.iter().enumerate() {
            for (j, &gj) in map.iter().enumerate() {
                matrix[(gi, gj)] = self.matrix[(i, j)];
            }
        }
        Ok(Self {
            register: register.clone(),
            matrix,
        })
    }

    /// `<target|rho|target>` for a normalized target.
    pub fn fidelity(&self, target: &FockVector) -> Result<f64> {
        check_same_register(&self.register, &target.register)?;
        let norm = target.norm_sqr();
        if (norm - 1.0).abs() > NORM_SLACK {
            return Err(Error::InvalidState(format!(
                "fidelity target has squared norm {norm}"
            )));
        }
        let value = (target.amplitudes.adjoint() * &self.matrix * &target.amplitudes)[(0, 0)].re;
        if !(-FIDELITY_SLACK..=1.0 + FIDELITY_SLACK).contains(&value) {
            return Err(Error::Invariant(format!("fidelity {value} outside [0, 1]")));
        }
        Ok(value.clamp(0.0, 1.0))
    }

    pub fn to_snapshot(&self) -> DensitySnapshot {
        DensitySnapshot {
            register: self.register.clone(),
            basis_order: BASIS_ORDER.to_string(),
            dim: self.register.dim(),
            matrix: self
                .matrix
                .transpose()
                .iter()
                .map(|z| [z.re, z.im])
                .collect(),
        }
    }

    pub fn from_snapshot(snapshot: DensitySnapshot) -> Result<Self> {
        let dim = snapshot.register.dim();
        if snapshot.dim != dim || snapshot.matrix.len() != dim * dim {
            return Err(Error::InvalidState(format!(
                "snapshot carries {} entries for dimension {dim}",
                snapshot.matrix.len()
            )));
        }
        let matrix = DMatrix::from_row_iterator(
            dim,
            dim,
            snapshot.matrix.iter().map(|&[re, im]| C64::new(re, im)),
        );
        Self::new(snapshot.register, matrix)
    }
}

/// Mixed state held as unnormalized pure branches, `rho = sum_i |psi_i><psi_i|`.
///
/// Channels and post-selection act branch by branch, which keeps large
/// registers tractable when the state has low rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    register: ModeRegister,
    branches: Vec<DVector<C64>>,
}

impl Ensemble {
    pub fn pure(state: &FockVector) -> Self {
        Self {
            register: state.register.clone(),
            branches: vec![state.amplitudes.clone()],
        }
    }

    pub(crate) fn from_branches(register: ModeRegister, branches: Vec<DVector<C64>>) -> Self {
        debug_assert!(branches.iter().all(|b| b.len() == register.dim()));
        Self { register, branches }
    }

    /// Spectral decomposition of `rho`; eigenvalues below `1e-15 * tr` are dropped.
    pub fn from_density(rho: &DensityOperator) -> Self {
        let herm = (&rho.matrix + rho.matrix.adjoint()) * C64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        let floor = 1e-15 * rho.trace().abs().max(f64::MIN_POSITIVE);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let branches = order
            .into_iter()
            .filter(|&i| eig.eigenvalues[i] > floor)
            .map(|i| eig.eigenvectors.column(i) * C64::new(eig.eigenvalues[i].sqrt(), 0.0))
            .collect();
        Self {
            register: rho.register.clone(),
            branches,
        }
    }

    pub fn register(&self) -> &ModeRegister {
        &self.register
    }

    pub fn branches(&self) -> &[DVector<C64>] {
        &self.branches
    }

    pub fn trace(&self) -> f64 {
        self.branches.iter().map(|b| b.norm_squared()).sum()
    }

    pub fn to_density(&self) -> DensityOperator {
        let dim = self.register.dim();
        let mut matrix = DMatrix::zeros(dim, dim);
        for b in &self.branches {
            matrix += b * b.adjoint();
        }
        DensityOperator {
            register: self.register.clone(),
            matrix,
        }
    }

    pub fn tensor_pure(&self, other: &FockVector) -> Result<Ensemble> {
        let register = self.register.join(&other.register)?;
        let branches = self
            .branches
            .iter()
            .map(|b| b.kronecker(&other.amplitudes))
            .collect();
        Ok(Self { register, branches })
    }

    pub fn tensor(&self, other: &Ensemble) -> Result<Ensemble> {
        let register = self.register.join(&other.register)?;
        let mut branches = Vec::with_capacity(self.branches.len() * other.branches.len());
        for a in &self.branches {
            for b in &other.branches {
                branches.push(a.kronecker(b));
            }
        }
        Ok(Self { register, branches })
    }

    pub fn embed(&self, register: &ModeRegister) -> Result<Ensemble> {
        let map = self.register.embedding_into(register)?;
        let branches = self
            .branches
            .iter()
            .map(|b| {
                let mut out = DVector::zeros(register.dim());
                for (i, &j) in map.iter().enumerate() {
                    out[j] = b[i];
                }
                out
            })
            .collect();
        Ok(Self {
            register: register.clone(),
            branches,
        })
    }

    /// Rewrites the branches as an orthogonal set of minimal size.
    pub fn compress(&self) -> Ensemble {
        let k = self.branches.len();
        if k <= 1 {
            return self.clone();
        }
        let gram = DMatrix::from_fn(k, k, |i, j| self.branches[i].dotc(&self.branches[j]));
        let eig = gram.symmetric_eigen();
        let floor = 1e-15 * self.trace().max(f64::MIN_POSITIVE);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let dim = self.register.dim();
        let branches = order
            .into_iter()
            .filter(|&i| eig.eigenvalues[i] > floor)
            .map(|i| {
                // A w has squared norm lambda, which is already the branch weight.
                let w = eig.eigenvectors.column(i);
                let mut v = DVector::zeros(dim);
                for (j, b) in self.branches.iter().enumerate() {
                    v += b * w[j];
                }
                v
            })
            .collect();
        Self {
            register: self.register.clone(),
            branches,
        }
    }
}

/// JSON layout of a serialized [`FockVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorSnapshot {
    pub register: ModeRegister,
    pub basis_order: String,
    pub amplitudes: Vec<[f64; 2]>,
}

/// JSON layout of a serialized [`DensityOperator`]; `matrix` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySnapshot {
    pub register: ModeRegister,
    pub basis_order: String,
    pub dim: usize,
    pub matrix: Vec<[f64; 2]>,
}

/// Coherent field `|gamma>` truncated at `cutoff` photons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoherentDrive {
    gamma: C64,
    cutoff: usize,
    tail_eps: f64,
}

impl CoherentDrive {
    pub const DEFAULT_TAIL_EPS: f64 = 1e-12;
    /// Hard ceiling used when the cutoff is chosen automatically.
    pub const MAX_AUTO_CUTOFF: usize = 80;

    /// Fixed cutoff; fails if the discarded tail is not below `tail_eps`.
    pub fn new(gamma: C64, cutoff: usize, tail_eps: f64) -> Result<Self> {
        Self::check_params(gamma, tail_eps)?;
        let tail = poisson_tail(gamma.norm_sqr(), cutoff);
        if tail >= tail_eps {
            let required = required_cutoff(gamma.norm_sqr(), tail_eps, usize::MAX);
            return Err(Error::TailUnattainable {
                tail,
                tail_eps,
                required,
                limit: cutoff,
            });
        }
        Ok(Self {
            gamma,
            cutoff,
            tail_eps,
        })
    }

    /// Smallest cutoff meeting `tail_eps`, raised no further than `max_cutoff`.
    pub fn auto(gamma: C64, tail_eps: f64, max_cutoff: usize) -> Result<Self> {
        Self::check_params(gamma, tail_eps)?;
        let x = gamma.norm_sqr();
        let required = required_cutoff(x, tail_eps, usize::MAX);
        if required > max_cutoff {
            return Err(Error::TailUnattainable {
                tail: poisson_tail(x, max_cutoff),
                tail_eps,
                required,
                limit: max_cutoff,
            });
        }
        // the drive needs at least the one-photon amplitude
        let cutoff = required.max(1);
        Ok(Self {
            gamma,
            cutoff,
            tail_eps,
        })
    }

    fn check_params(gamma: C64, tail_eps: f64) -> Result<()> {
        if !(gamma.re.is_finite() && gamma.im.is_finite()) {
            return Err(Error::InvalidState(
                "coherent amplitude is not finite".into(),
            ));
        }
        if !(tail_eps > 0.0 && tail_eps < 1.0) {
            return Err(Error::InvalidState(format!(
                "tail_eps {tail_eps} must lie in (0, 1)"
            )));
        }
        Ok(())
    }

    pub fn gamma(&self) -> C64 {
        self.gamma
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn tail_eps(&self) -> f64 {
        self.tail_eps
    }

    /// Discarded probability above the cutoff.
    pub fn truncation_error(&self) -> f64 {
        poisson_tail(self.gamma.norm_sqr(), self.cutoff)
    }

    /// Vacuum amplitude `gamma_0`.
    pub fn vacuum_amplitude(&self) -> C64 {
        C64::new((-self.gamma.norm_sqr() / 2.0).exp(), 0.0)
    }

    /// One-photon amplitude `gamma_1`.
    pub fn one_photon_amplitude(&self) -> C64 {
        self.vacuum_amplitude() * self.gamma
    }

    /// `|C|^2 = |gamma_0|^2 + |gamma_1|^2`.
    pub fn norm_c2(&self) -> f64 {
        self.vacuum_amplitude().norm_sqr() + self.one_photon_amplitude().norm_sqr()
    }

    /// `R = (|gamma_0| / |gamma_1|)^2`; infinite for the vacuum drive.
    pub fn ratio_r(&self) -> f64 {
        let x = self.gamma.norm_sqr();
        if x == 0.0 {
            f64::INFINITY
        } else {
            1.0 / x
        }
    }
}

/// `P(N > cutoff)` for a Poisson distribution of mean `mean`.
pub fn poisson_tail(mean: f64, cutoff: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let ln_mean = mean.ln();
    let mut ln_fact: f64 = (1..=cutoff + 1).map(|k| (k as f64).ln()).sum();
    let mut tail = 0.0;
    let mut n = cutoff + 1;
    loop {
        let term = (-mean + n as f64 * ln_mean - ln_fact).exp();
        tail += term;
        if (n as f64 > mean && term <= tail * 1e-17) || term == 0.0 && n as f64 > mean {
            break;
        }
        n += 1;
        ln_fact += (n as f64).ln();
    }
    tail
}

fn required_cutoff(mean: f64, tail_eps: f64, limit: usize) -> usize {
    let mut cutoff = 0;
    while cutoff < limit && poisson_tail(mean, cutoff) >= tail_eps {
        cutoff += 1;
    }
    cutoff
}

/// Single-mode truncated coherent amplitudes `e^{-|g|^2/2} g^n / sqrt(n!)`,
/// not renormalized after truncation.
pub fn coherent_amplitudes(drive: &CoherentDrive, label: &str) -> Result<FockVector> {
    let register = ModeRegister::single(label, drive.cutoff)?;
    let mut amplitudes = DVector::zeros(drive.cutoff + 1);
    let mut amp = drive.vacuum_amplitude();
    amplitudes[0] = amp;
    for n in 1..=drive.cutoff {
        amp = amp * drive.gamma / (n as f64).sqrt();
        amplitudes[n] = amp;
    }
    Ok(FockVector::from_parts_unchecked(register, amplitudes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn reg(modes: &[(&str, usize)]) -> ModeRegister {
        ModeRegister::new(modes.iter().copied()).unwrap()
    }

    #[test]
    fn register_rejects_bad_modes() {
        assert!(ModeRegister::new([("a", 1), ("a", 2)]).is_err());
        assert!(ModeRegister::new([("a", 0)]).is_err());
        assert!(ModeRegister::new([("", 1)]).is_err());
    }

    #[test]
    fn basis_order_is_lexicographic_last_mode_fastest() {
        let r = reg(&[("a", 1), ("b", 2)]);
        let basis: Vec<Vec<usize>> = r.basis().collect();
        assert_eq!(
            basis,
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![0, 2],
                vec![1, 0],
                vec![1, 1],
                vec![1, 2]
            ]
        );
        assert_eq!(r.index_of(&[1, 1]), Some(4));
        assert_eq!(r.index_of(&[0, 3]), None);
        assert_eq!(r.strides(), vec![3, 1]);
    }

    #[test]
    fn tensor_of_vacua() {
        let a = FockVector::vacuum(reg(&[("a", 1)]));
        let b = FockVector::vacuum(reg(&[("b", 1)]));
        let ab = a.tensor(&b).unwrap();
        assert_eq!(ab.register().labels(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ab.amplitude(&[0, 0]), c(1.0, 0.0));
        assert!(a.tensor(&a).is_err());
    }

    #[test]
    fn partial_trace_of_bell_state_is_maximally_mixed() {
        // (|01> - i|10>)/sqrt2 on (b, c)
        let r = reg(&[("b", 1), ("c", 1)]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi =
            FockVector::from_terms(r, &[(&[0, 1], c(s, 0.0)), (&[1, 0], c(0.0, -s))]).unwrap();
        let rho_b = psi.to_density().partial_trace(&["b"]).unwrap();
        let m = rho_b.matrix();
        assert!((m[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((m[(1, 1)] - c(0.5, 0.0)).norm() < 1e-15);
        assert!(m[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn partial_trace_keep_all_and_unknown_label() {
        let r = reg(&[("a", 2), ("b", 1)]);
        let psi =
            FockVector::from_terms(r, &[(&[2, 0], c(1.0, 0.0)), (&[1, 1], c(0.0, 2.0))]).unwrap();
        let rho = psi.to_density();
        assert_eq!(rho.partial_trace(&["a", "b"]).unwrap(), rho);
        assert!(matches!(
            rho.partial_trace(&["z"]),
            Err(Error::UnknownMode(_))
        ));
    }

    #[test]
    fn fidelity_examples() {
        let r = reg(&[("a", 1)]);
        let zero = FockVector::basis_state(r.clone(), &[0]).unwrap();
        let mixed = DensityOperator::new(r.clone(), DMatrix::identity(2, 2) * c(0.5, 0.0)).unwrap();
        assert!((mixed.fidelity(&zero).unwrap() - 0.5).abs() < 1e-15);
        assert!((zero.to_density().fidelity(&zero).unwrap() - 1.0).abs() < 1e-15);
        let other = FockVector::vacuum(reg(&[("b", 1)]));
        assert!(matches!(
            mixed.fidelity(&other),
            Err(Error::RegisterMismatch(_))
        ));
    }

    #[test]
    fn fidelity_flags_broken_state() {
        let r = reg(&[("a", 1)]);
        let bad =
            DensityOperator::from_parts_unchecked(r.clone(), DMatrix::identity(2, 2) * c(2.0, 0.0));
        let zero = FockVector::basis_state(r, &[0]).unwrap();
        assert!(matches!(bad.fidelity(&zero), Err(Error::Invariant(_))));
    }

    #[test]
    fn density_validation() {
        let r = reg(&[("a", 1)]);
        let non_herm =
            DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        assert!(DensityOperator::new(r.clone(), non_herm).is_err());
        let negative =
            DMatrix::from_row_slice(2, 2, &[c(1.2, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.2, 0.0)]);
        assert!(DensityOperator::new(r, negative).is_err());
    }

    #[test]
    fn coherent_vacuum_and_unit_amplitude() {
        let vac = CoherentDrive::auto(c(0.0, 0.0), 1e-12, 10).unwrap();
        let v = coherent_amplitudes(&vac, "e").unwrap();
        assert_eq!(v.amplitude(&[0]), c(1.0, 0.0));
        assert_eq!(v.amplitude(&[1]), c(0.0, 0.0));
        assert_eq!(vac.ratio_r(), f64::INFINITY);

        let one = CoherentDrive::new(c(1.0, 0.0), 10, 1e-7).unwrap();
        let v = coherent_amplitudes(&one, "e").unwrap();
        let g0 = (-0.5f64).exp();
        assert!((v.amplitude(&[0]).re - 0.6065306597126334).abs() < 1e-15);
        assert!((v.amplitude(&[1]).re - 0.6065306597126334).abs() < 1e-15);
        let mut fact = 1.0;
        for n in 0..=10usize {
            if n > 0 {
                fact *= n as f64;
            }
            assert!((v.amplitude(&[n]).re - g0 / fact.sqrt()).abs() < 1e-15);
        }
        assert_eq!(one.ratio_r(), 1.0);
    }

    #[test]
    fn coherent_tail_error_names_required_cutoff() {
        let err = CoherentDrive::new(c(1.0, 0.0), 10, 1e-12).unwrap_err();
        match err {
            Error::TailUnattainable {
                required, limit, ..
            } => {
                assert_eq!(limit, 10);
                assert!(poisson_tail(1.0, required) < 1e-12);
                assert!(poisson_tail(1.0, required - 1) >= 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            CoherentDrive::auto(c(3.0, 0.0), 1e-12, 5),
            Err(Error::TailUnattainable { .. })
        ));
    }

    #[test]
    fn poisson_tail_matches_complement() {
        // 1 - sum_{n<=2} e^{-1}/n! for mean 1
        let expected = 1.0 - (-1.0f64).exp() * 2.5;
        assert!((poisson_tail(1.0, 2) - expected).abs() < 1e-15);
    }

    #[test]
    fn ensemble_compress_preserves_density() {
        let r = reg(&[("a", 1), ("b", 1)]);
        let v1 = DVector::from_vec(vec![c(0.3, 0.0), c(0.0, 0.2), c(0.1, 0.0), c(0.0, 0.0)]);
        let v2 = &v1 * c(0.0, 0.5);
        let v3 = DVector::from_vec(vec![c(0.0, 0.0), c(0.4, 0.0), c(0.0, 0.0), c(0.1, 0.1)]);
        let ens = Ensemble::from_branches(r, vec![v1, v2, v3]);
        let compact = ens.compress();
        assert_eq!(compact.branches().len(), 2);
        let diff = ens.to_density().matrix() - compact.to_density().matrix();
        assert!(diff.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn ensemble_from_density_roundtrip() {
        let r = reg(&[("a", 2)]);
        let psi =
            FockVector::from_terms(r.clone(), &[(&[0], c(1.0, 0.0)), (&[2], c(0.0, 1.0))]).unwrap();
        let rho = DensityOperator::new(
            r,
            psi.to_density().matrix() * c(0.6, 0.0)
                + DMatrix::from_diagonal(&DVector::from_vec(vec![
                    c(0.0, 0.0),
                    c(0.4, 0.0),
                    c(0.0, 0.0),
                ])),
        )
        .unwrap();
        let back = Ensemble::from_density(&rho).to_density();
        let diff = rho.matrix() - back.matrix();
        assert!(diff.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn embed_pads_with_zeros() {
        let small = FockVector::basis_state(reg(&[("a", 1), ("b", 1)]), &[1, 1]).unwrap();
        let big = small.embed(&reg(&[("a", 3), ("b", 2)])).unwrap();
        assert_eq!(big.amplitude(&[1, 1]), c(1.0, 0.0));
        assert!((big.norm_sqr() - 1.0).abs() < 1e-15);
        assert!(small.embed(&reg(&[("a", 1), ("c", 1)])).is_err());
    }

    #[test]
    fn snapshot_rejects_unknown_keys() {
        let json = r#"{"register":{"labels":["a"],"cutoffs":[1]},"basis_order":"x","amplitudes":[[1,0],[0,0]],"extra":1}"#;
        assert!(serde_json::from_str::<VectorSnapshot>(json).is_err());
    }
}
