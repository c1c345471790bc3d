//! Optical elements as quantum operations.
//!
//! A beam splitter maps input creation operators onto outputs through the
//! scattering matrix `S = [[t, r], [r, t]]`. When `|t|^2 + |r|^2 < 1` the
//! missing norm goes into two environment modes; `dilate` embeds `S` in a
//! 4x4 unitary whose environment block reproduces the noise covariance
//! `N = I - S S^dagger = [[Gamma, -Omega], [-Omega, Gamma]]`. With the
//! environment starting in vacuum, tracing it out yields the lossy channel.
//!
//! All elements conserve total photon number, so Kraus operators are built
//! per photon-number block. For a mode pair with cutoffs `(ca, cb)` only the
//! blocks with `m + n <= min(ca, cb)` are retained; their images always fit
//! inside the register, so truncation never corrupts them.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{DensityOperator, Ensemble, ModeRegister, C64};

/// Numerical slack on the physicality conditions of a beam splitter.
pub const PHYSICALITY_TOL: f64 = 1e-12;
/// Input weight outside retained blocks that still counts as zero.
pub const OVERFLOW_TOL: f64 = 1e-12;
/// Below this post-selection probability an outcome is declared impossible.
pub const IMPOSSIBLE_PROBABILITY: f64 = 1e-300;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSplitterSpec {
    t: C64,
    r: C64,
}

impl BeamSplitterSpec {
    /// Rejects specs whose noise covariance is not positive semidefinite.
    pub fn new(t: C64, r: C64) -> Result<Self> {
        if ![t.re, t.im, r.re, r.im].iter().all(|x| x.is_finite()) {
            return Err(Error::Unphysical("non-finite coefficients".into()));
        }
        let spec = Self { t, r };
        let gamma = spec.gamma();
        let omega = spec.omega();
        if gamma < -PHYSICALITY_TOL {
            return Err(Error::Unphysical(format!(
                "damping {gamma:.6} is negative (|t|^2 + |r|^2 > 1)"
            )));
        }
        if gamma - omega.abs() < -PHYSICALITY_TOL {
            return Err(Error::Unphysical(format!(
                "noise covariance not positive: Gamma {gamma:.6} < |Omega| {:.6}",
                omega.abs()
            )));
        }
        Ok(spec)
    }

    /// Lossless symmetric splitter with real `t` and `r = i|r|`.
    pub fn ideal(transmission: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&transmission) {
            return Err(Error::Unphysical(format!(
                "transmission {transmission} outside [0, 1]"
            )));
        }
        Self::new(
            C64::new(transmission.sqrt(), 0.0),
            C64::new(0.0, (1.0 - transmission).sqrt()),
        )
    }

    /// Lossless 50/50 splitter, `t = 1/sqrt2`, `r = i/sqrt2`.
    pub fn balanced() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            t: C64::new(s, 0.0),
            r: C64::new(0.0, s),
        }
    }

    /// Lossy 50/50 splitter: `|t| = |r|` with `2|t|^2 = 1 - gamma`.
    pub fn lossy_balanced(gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Unphysical(format!("damping {gamma} outside [0, 1)")));
        }
        if gamma == 0.0 {
            return Ok(Self::balanced());
        }
        let amp = ((1.0 - gamma) / 2.0).sqrt();
        Self::new(C64::new(amp, 0.0), C64::new(0.0, amp))
    }

    /// Same magnitudes with the reflection phase rotated by `phase` radians.
    pub fn with_reflection_phase(&self, phase: f64) -> Result<Self> {
        Self::new(self.t, C64::from_polar(self.r.norm(), self.r.arg() + phase))
    }

    pub fn t(&self) -> C64 {
        self.t
    }

    pub fn r(&self) -> C64 {
        self.r
    }

    /// Damping constant `1 - |t|^2 - |r|^2`.
    pub fn gamma(&self) -> f64 {
        1.0 - self.t.norm_sqr() - self.r.norm_sqr()
    }

    /// Cross noise term `t r* + r t*`.
    pub fn omega(&self) -> f64 {
        (self.t * self.r.conj() + self.r * self.t.conj()).re
    }

    pub fn is_lossless(&self) -> bool {
        self.gamma().abs() <= PHYSICALITY_TOL
    }

    pub fn scattering(&self) -> Matrix2<C64> {
        Matrix2::new(self.t, self.r, self.r, self.t)
    }

    pub fn noise_covariance(&self) -> Matrix2<C64> {
        Matrix2::identity() - self.scattering() * self.scattering().adjoint()
    }
}

fn psd_sqrt(m: &Matrix2<C64>) -> Matrix2<C64> {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let mut out = Matrix2::zeros();
    for i in 0..2 {
        let lambda = eig.eigenvalues[i].max(0.0).sqrt();
        let v = eig.eigenvectors.column(i);
        out += v * v.adjoint() * C64::new(lambda, 0.0);
    }
    out
}

/// Unitary dilation of the scattering matrix.
///
/// Column `i` is the image of input creation operator `i` over the output
/// modes `(alpha, beta, env_0, env_1)`. The upper-left block is `S`; the
/// lower-left block `D` satisfies `D^dagger D = N`.
pub fn dilate(spec: &BeamSplitterSpec) -> Result<Matrix4<C64>> {
    let spec = BeamSplitterSpec::new(spec.t, spec.r)?;
    let s = spec.scattering();
    let mut v = Matrix4::zeros();
    v.fixed_view_mut::<2, 2>(0, 0).copy_from(&s);
    let n = spec.noise_covariance();
    if n.iter().all(|z| z.norm() <= 1e-15) {
        v.fixed_view_mut::<2, 2>(2, 2)
            .copy_from(&Matrix2::identity());
        return Ok(v);
    }
    let defect_in = psd_sqrt(&(Matrix2::identity() - s.adjoint() * s));
    let defect_out = psd_sqrt(&n);
    v.fixed_view_mut::<2, 2>(0, 2).copy_from(&defect_out);
    v.fixed_view_mut::<2, 2>(2, 0).copy_from(&defect_in);
    v.fixed_view_mut::<2, 2>(2, 2).copy_from(&(-s.adjoint()));
    Ok(v)
}

type Occ4 = [u8; 4];

fn create(state: &BTreeMap<Occ4, C64>, coeffs: [C64; 4]) -> BTreeMap<Occ4, C64> {
    let mut out = BTreeMap::new();
    for (occ, &amp) in state {
        for (k, &coef) in coeffs.iter().enumerate() {
            if coef == ZERO {
                continue;
            }
            let mut next = *occ;
            next[k] += 1;
            let factor = ((occ[k] as f64) + 1.0).sqrt();
            *out.entry(next).or_insert(ZERO) += amp * coef * factor;
        }
    }
    out
}

/// Sparse local matrix entry: `(row, col, value)`.
pub type SparseEntry = (usize, usize, C64);

/// Kraus representation of a beam splitter with vacuum environment.
///
/// Operator `(j, k)` is `<j, k|_env U(V) |0, 0>_env` restricted to the
/// retained photon-number blocks of the mode pair.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    spec: BeamSplitterSpec,
    cutoffs: (usize, usize),
    retained: usize,
    outcomes: Vec<(usize, usize)>,
    // per input local index: (kraus index, output local index, amplitude)
    columns: Vec<Vec<(usize, usize, C64)>>,
}

/// Builds the Kraus set of `spec` for a mode pair with the given cutoffs.
pub fn lossy_bs_kraus(spec: &BeamSplitterSpec, cutoffs: (usize, usize)) -> Result<KrausChannel> {
    let v = dilate(spec)?;
    let (ca, cb) = cutoffs;
    if ca < 1 || cb < 1 {
        return Err(Error::InvalidRegister(
            "beam splitter modes need cutoff >= 1".into(),
        ));
    }
    if ca.max(cb) > u8::MAX as usize / 2 {
        return Err(Error::InvalidRegister(format!(
            "cutoffs {cutoffs:?} too large"
        )));
    }
    let retained = ca.min(cb);
    let local = |m: usize, n: usize| m * (cb + 1) + n;
    let col = |i: usize| [v[(0, i)], v[(1, i)], v[(2, i)], v[(3, i)]];

    let mut outcome_index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut columns = vec![Vec::new(); (ca + 1) * (cb + 1)];

    // image(0, n) built by repeated creation on mode 1; image(m, n) from image(m-1, n)
    let mut row_start: BTreeMap<Occ4, C64> = BTreeMap::from([([0u8; 4], ONE)]);
    for n in 0..=retained {
        if n > 0 {
            row_start = create(&row_start, col(1));
            let norm = (n as f64).sqrt();
            row_start.values_mut().for_each(|a| *a /= norm);
        }
        let mut image = row_start.clone();
        for m in 0..=(retained - n) {
            if m > 0 {
                image = create(&image, col(0));
                let norm = (m as f64).sqrt();
                image.values_mut().for_each(|a| *a /= norm);
            }
            let entries = &mut columns[local(m, n)];
            for (occ, &amp) in &image {
                if amp == ZERO {
                    continue;
                }
                let env = (occ[2] as usize, occ[3] as usize);
                let next = outcome_index.len();
                let kraus = *outcome_index.entry(env).or_insert(next);
                entries.push((kraus, local(occ[0] as usize, occ[1] as usize), amp));
            }
        }
    }

    let mut outcomes = vec![(0, 0); outcome_index.len()];
    for (env, idx) in outcome_index {
        outcomes[idx] = env;
    }
    Ok(KrausChannel {
        spec: *spec,
        cutoffs,
        retained,
        outcomes,
        columns,
    })
}

impl KrausChannel {
    pub fn spec(&self) -> &BeamSplitterSpec {
        &self.spec
    }

    pub fn cutoffs(&self) -> (usize, usize) {
        self.cutoffs
    }

    /// Largest retained total photon number.
    pub fn retained_photons(&self) -> usize {
        self.retained
    }

    pub fn local_dim(&self) -> usize {
        (self.cutoffs.0 + 1) * (self.cutoffs.1 + 1)
    }

    fn local_occ(&self, index: usize) -> (usize, usize) {
        (index / (self.cutoffs.1 + 1), index % (self.cutoffs.1 + 1))
    }

    pub fn is_retained(&self, local_index: usize) -> bool {
        let (m, n) = self.local_occ(local_index);
        m + n <= self.retained
    }

    /// Environment photon numbers labelling each Kraus operator.
    pub fn outcomes(&self) -> &[(usize, usize)] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Sparse entries of every Kraus operator, in outcome order.
    pub fn sparse_operators(&self) -> Vec<Vec<SparseEntry>> {
        let mut ops = vec![Vec::new(); self.len()];
        for (input, entries) in self.columns.iter().enumerate() {
            for &(k, out, amp) in entries {
                ops[k].push((out, input, amp));
            }
        }
        ops
    }

    /// Dense Kraus operators on the local two-mode space.
    pub fn kraus_operators(&self) -> Vec<((usize, usize), DMatrix<C64>)> {
        let dim = self.local_dim();
        self.sparse_operators()
            .into_iter()
            .zip(&self.outcomes)
            .map(|(entries, &env)| {
                let mut m = DMatrix::zeros(dim, dim);
                for (r, c, a) in entries {
                    m[(r, c)] += a;
                }
                (env, m)
            })
            .collect()
    }

    /// Largest entry of `sum K^dagger K - I` on the retained blocks.
    pub fn completeness_defect(&self) -> f64 {
        let dim = self.local_dim();
        let mut acc = DMatrix::<C64>::zeros(dim, dim);
        for (_, k) in self.kraus_operators() {
            acc += k.adjoint() * &k;
        }
        let mut worst: f64 = 0.0;
        for i in (0..dim).filter(|&i| self.is_retained(i)) {
            for j in (0..dim).filter(|&j| self.is_retained(j)) {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((acc[(i, j)] - target).norm());
            }
        }
        worst
    }

    fn locate(&self, register: &ModeRegister, modes: (&str, &str)) -> Result<PairLayout> {
        let (pa, pb) = (register.position(modes.0)?, register.position(modes.1)?);
        if pa == pb {
            return Err(Error::OverlappingModes(modes.0.to_string()));
        }
        let cut = (register.cutoffs()[pa], register.cutoffs()[pb]);
        if cut != self.cutoffs {
            return Err(Error::RegisterMismatch(format!(
                "channel built for cutoffs {:?}, modes ({}, {}) have {cut:?}",
                self.cutoffs, modes.0, modes.1
            )));
        }
        let strides = register.strides();
        Ok(PairLayout {
            stride_a: strides[pa],
            stride_b: strides[pb],
            cutoffs: cut,
            dim: register.dim(),
        })
    }

    fn offset(&self, layout: &PairLayout, local_index: usize) -> usize {
        let (m, n) = self.local_occ(local_index);
        m * layout.stride_a + n * layout.stride_b
    }

    /// Sparse Kraus operators lifted to the full register.
    fn global_operators(&self, layout: &PairLayout) -> Vec<Vec<SparseEntry>> {
        let mut ops = vec![Vec::new(); self.len()];
        for g in 0..layout.dim {
            let (local, base) = layout.split(g);
            if local != 0 {
                continue;
            }
            for (input, entries) in self.columns.iter().enumerate() {
                let gin = base + self.offset(layout, input);
                for &(k, out, amp) in entries {
                    ops[k].push((base + self.offset(layout, out), gin, amp));
                }
            }
        }
        ops
    }

    fn overflow_weight(
        &self,
        layout: &PairLayout,
        weights: impl Iterator<Item = (usize, f64)>,
    ) -> f64 {
        weights
            .filter(|&(g, _)| !self.is_retained(layout.split(g).0))
            .map(|(_, w)| w)
            .sum()
    }

    /// `sum_k K_k rho K_k^dagger` on the named mode pair.
    pub fn apply(&self, rho: &DensityOperator, modes: (&str, &str)) -> Result<DensityOperator> {
        let layout = self.locate(rho.register(), modes)?;
        let m = rho.matrix();
        let overflow = self.overflow_weight(&layout, (0..layout.dim).map(|g| (g, m[(g, g)].re)));
        if overflow > OVERFLOW_TOL {
            return Err(Error::CutoffOverflow { weight: overflow });
        }
        let dim = layout.dim;
        let mut out = DMatrix::<C64>::zeros(dim, dim);
        for op in self.global_operators(&layout) {
            // T = K rho, then out += T K^dagger
            let mut t = DMatrix::<C64>::zeros(dim, dim);
            for &(r, c, a) in &op {
                for j in 0..dim {
                    t[(r, j)] += a * m[(c, j)];
                }
            }
            for &(r, c, a) in &op {
                let ac = a.conj();
                for i in 0..dim {
                    out[(i, r)] += t[(i, c)] * ac;
                }
            }
        }
        Ok(DensityOperator::from_parts_unchecked(
            rho.register().clone(),
            out,
        ))
    }

    /// Applies the channel branch by branch; one output branch per input
    /// branch and Kraus operator with nonzero image.
    pub fn apply_ensemble(&self, state: &Ensemble, modes: (&str, &str)) -> Result<Ensemble> {
        let layout = self.locate(state.register(), modes)?;
        let mut branches = Vec::new();
        for b in state.branches() {
            let overflow = self.overflow_weight(
                &layout,
                b.iter().enumerate().map(|(g, z)| (g, z.norm_sqr())),
            );
            if overflow > OVERFLOW_TOL {
                return Err(Error::CutoffOverflow { weight: overflow });
            }
            let mut outs: Vec<Option<DVector<C64>>> = vec![None; self.len()];
            for (g, &amp) in b.iter().enumerate() {
                if amp == ZERO {
                    continue;
                }
                let (input, base) = layout.split(g);
                for &(k, out, coef) in &self.columns[input] {
                    let target = outs[k].get_or_insert_with(|| DVector::zeros(layout.dim));
                    target[base + self.offset(&layout, out)] += coef * amp;
                }
            }
            branches.extend(outs.into_iter().flatten());
        }
        Ok(Ensemble::from_branches(state.register().clone(), branches))
    }
}

struct PairLayout {
    stride_a: usize,
    stride_b: usize,
    cutoffs: (usize, usize),
    dim: usize,
}

impl PairLayout {
    /// Splits a global index into (pair local index, index with the pair emptied).
    fn split(&self, g: usize) -> (usize, usize) {
        let m = (g / self.stride_a) % (self.cutoffs.0 + 1);
        let n = (g / self.stride_b) % (self.cutoffs.1 + 1);
        let base = g - m * self.stride_a - n * self.stride_b;
        (m * (self.cutoffs.1 + 1) + n, base)
    }
}

/// Exact unitary of a lossless beam splitter on `modes` of `register`,
/// built per photon-number block from the binomial expansion of
/// `(t a^dagger + r b^dagger)^m (r a^dagger + t b^dagger)^n |0,0>`.
///
/// Columns of non-retained blocks (`m + n` above the smaller cutoff) are zero.
pub fn ideal_bs_unitary(
    spec: &BeamSplitterSpec,
    register: &ModeRegister,
    modes: (&str, &str),
) -> Result<DMatrix<C64>> {
    if !spec.is_lossless() {
        return Err(Error::NotLossless {
            gamma: spec.gamma(),
        });
    }
    let cutoffs = (register.cutoff(modes.0)?, register.cutoff(modes.1)?);
    let channel = lossy_bs_kraus(spec, cutoffs)?;
    let layout = channel.locate(register, modes)?;
    let dim = register.dim();
    let mut u = DMatrix::zeros(dim, dim);
    for op in channel.global_operators(&layout) {
        for (r, c, a) in op {
            u[(r, c)] += a;
        }
    }
    Ok(u)
}

/// Photon counter of efficiency `eta`, no dark counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    eta: f64,
}

impl DetectorSpec {
    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Unphysical(format!(
                "efficiency {eta} outside [0, 1]"
            )));
        }
        Ok(Self { eta })
    }

    pub fn perfect() -> Self {
        Self { eta: 1.0 }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Diagonal of the POVM element for `clicks` counts:
/// `E_n = sum_{m >= n} C(m, n) eta^n (1 - eta)^(m - n) |m><m|`.
pub fn detector_povm(det: &DetectorSpec, clicks: usize, cutoff: usize) -> Result<Vec<f64>> {
    if clicks > cutoff {
        return Err(Error::ClicksExceedCutoff { clicks, cutoff });
    }
    let eta = det.eta;
    Ok((0..=cutoff)
        .map(|m| {
            if m < clicks {
                0.0
            } else {
                binomial(m, clicks)
                    * eta.powi(clicks as i32)
                    * (1.0 - eta).powi((m - clicks) as i32)
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickEvent {
    pub mode: String,
    pub detector: DetectorSpec,
    pub clicks: usize,
}

impl ClickEvent {
    pub fn new(mode: &str, detector: DetectorSpec, clicks: usize) -> Self {
        Self {
            mode: mode.to_string(),
            detector,
            clicks,
        }
    }
}

/// Outcome of conditioning on a click pattern.
#[derive(Debug, Clone, PartialEq)]
pub enum PostSelection {
    /// Normalized state of the unmeasured modes and the pattern's probability.
    Observed {
        state: DensityOperator,
        probability: f64,
    },
    Impossible {
        probability: f64,
    },
}

impl PostSelection {
    pub fn probability(&self) -> f64 {
        match self {
            PostSelection::Observed { probability, .. }
            | PostSelection::Impossible { probability } => *probability,
        }
    }

    pub fn into_result(self) -> Result<(DensityOperator, f64)> {
        match self {
            PostSelection::Observed { state, probability } => Ok((state, probability)),
            PostSelection::Impossible { probability } => {
                Err(Error::ImpossibleOutcome { probability })
            }
        }
    }
}

/// Unmeasured register, index table and measured-mode weights indexed by
/// the traced-register flat index.
struct Conditioning {
    keep: ModeRegister,
    table: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

fn event_weights(register: &ModeRegister, events: &[ClickEvent]) -> Result<Conditioning> {
    let mut measured: Vec<&str> = Vec::new();
    for ev in events {
        register.position(&ev.mode)?;
        if measured.contains(&ev.mode.as_str()) {
            return Err(Error::OverlappingModes(ev.mode.clone()));
        }
        measured.push(&ev.mode);
    }
    let keep_labels: Vec<String> = register
        .labels()
        .iter()
        .filter(|l| !measured.contains(&l.as_str()))
        .cloned()
        .collect();
    let keep_refs: Vec<&str> = keep_labels.iter().map(String::as_str).collect();
    let keep = register.subset(&keep_refs)?;
    let (traced, table) = register.split_table(&keep);

    let mut povms = Vec::with_capacity(traced.len());
    for label in traced.labels() {
        let ev = events
            .iter()
            .find(|e| &e.mode == label)
            .expect("event per traced mode");
        povms.push(detector_povm(
            &ev.detector,
            ev.clicks,
            register.cutoff(label)?,
        )?);
    }
    let weights = (0..traced.dim())
        .map(|t| {
            traced
                .occupations(t)
                .iter()
                .zip(&povms)
                .map(|(&n, e)| e[n])
                .product()
        })
        .collect();
    Ok(Conditioning {
        keep,
        table,
        weights,
    })
}

fn finish(keep: ModeRegister, matrix: DMatrix<C64>) -> PostSelection {
    let probability = matrix.trace().re;
    if probability.is_nan() || probability < IMPOSSIBLE_PROBABILITY {
        return PostSelection::Impossible {
            probability: probability.max(0.0),
        };
    }
    let state = DensityOperator::from_parts_unchecked(keep, matrix / C64::new(probability, 0.0));
    PostSelection::Observed { state, probability }
}

/// Conditions `rho` on every event; measured modes are traced out.
pub fn postselect(rho: &DensityOperator, events: &[ClickEvent]) -> Result<PostSelection> {
    let Conditioning {
        keep,
        table,
        weights,
    } = event_weights(rho.register(), events)?;
    let m = rho.matrix();
    let dk = keep.dim();
    let mut out = DMatrix::<C64>::zeros(dk, dk);
    for r in 0..dk {
        for s in 0..dk {
            out[(r, s)] = weights
                .iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(t, &w)| m[(table[r][t], table[s][t])] * w)
                .sum();
        }
    }
    Ok(finish(keep, out))
}

/// [`postselect`] for a branch ensemble.
pub fn postselect_ensemble(state: &Ensemble, events: &[ClickEvent]) -> Result<PostSelection> {
    let Conditioning {
        keep,
        table,
        weights,
    } = event_weights(state.register(), events)?;
    let dk = keep.dim();
    let active: Vec<(usize, f64)> = weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w != 0.0)
        .map(|(t, &w)| (t, w.sqrt()))
        .collect();
    let mut out = DMatrix::<C64>::zeros(dk, dk);
    for b in state.branches() {
        let x = DMatrix::from_fn(dk, active.len(), |r, j| {
            let (t, sw) = active[j];
            b[table[r][t]] * sw
        });
        out += &x * x.adjoint();
    }
    Ok(finish(keep, out))
}
