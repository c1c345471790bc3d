//! End-to-end pipelines of the double quantum-scissors machine.
//!
//! Mode names follow the optical layout. State engineering uses the output
//! mode `c`, the idler `d` and the coherent drive `e`, with detectors on `d`
//! and `e`. Teleportation uses Bob's mode `a`, Alice's channel mode `b` and
//! the input `c`, with detectors on `b` and `c`. In both stages the first
//! beam splitter receives a single photon in its first port and vacuum in
//! the second; the second splitter mixes the two detected modes.
//!
//! Environment modes are traced immediately after each lossy element.

use std::fmt;

use nalgebra::DVector;
use serde::Serialize;

use crate::channels::{
    ideal_bs_unitary, lossy_bs_kraus, postselect_ensemble, BeamSplitterSpec, ClickEvent,
    DetectorSpec, PostSelection,
};
use crate::error::{Error, Result};
use crate::fock::{
    coherent_amplitudes, CoherentDrive, DensityOperator, DensitySnapshot, Ensemble, FockVector,
    ModeRegister, VectorSnapshot, C64,
};

/// Default cutoff of the heralded output mode.
pub const DEFAULT_OUTPUT_CUTOFF: usize = 2;

/// Normalized zero/one-photon superposition `c0|0> + c1|1>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QubitAmplitudes {
    pub c0: C64,
    pub c1: C64,
}

impl QubitAmplitudes {
    pub fn new(c0: C64, c1: C64) -> Result<Self> {
        let norm = c0.norm_sqr() + c1.norm_sqr();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!(
                "qubit amplitudes have squared norm {norm}"
            )));
        }
        Ok(Self { c0, c1 })
    }

    pub fn normalized(c0: C64, c1: C64) -> Result<Self> {
        let norm = (c0.norm_sqr() + c1.norm_sqr()).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("qubit amplitudes vanish".into()));
        }
        Ok(Self {
            c0: c0 / norm,
            c1: c1 / norm,
        })
    }

    /// `(gamma_0|0> + gamma_1|1>)/C` of a coherent drive.
    pub fn from_drive(drive: &CoherentDrive) -> Self {
        Self::normalized(drive.vacuum_amplitude(), drive.one_photon_amplitude())
            .expect("vacuum amplitude of a coherent state is positive")
    }

    /// `c0|0> - c1|1>`.
    pub fn phase_flipped(&self) -> Self {
        Self {
            c0: self.c0,
            c1: -self.c1,
        }
    }

    /// `c1|0> + c0|1>`.
    pub fn bit_flipped(&self) -> Self {
        Self {
            c0: self.c1,
            c1: self.c0,
        }
    }

    pub fn to_vector(&self, label: &str, cutoff: usize) -> Result<FockVector> {
        let register = ModeRegister::single(label, cutoff)?;
        let mut amps = DVector::zeros(register.dim());
        amps[0] = self.c0;
        amps[1] = self.c1;
        FockVector::new(register, amps)
    }
}

/// Heralding pattern of the two detectors, in the order they are listed for
/// each stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClickPattern(pub usize, pub usize);

impl ClickPattern {
    pub const PRIMARY: ClickPattern = ClickPattern(1, 0);
    pub const SWAPPED: ClickPattern = ClickPattern(0, 1);

    /// Ideal heralded state in terms of the state being transferred: the
    /// primary pattern leaves it untouched, the swapped one flips the sign
    /// of the one-photon amplitude.
    pub fn expected(&self, source: &QubitAmplitudes) -> Result<QubitAmplitudes> {
        match *self {
            Self::PRIMARY => Ok(*source),
            Self::SWAPPED => Ok(source.phase_flipped()),
            other => Err(Error::InvalidState(format!(
                "click pattern ({}, {}) does not herald the transfer",
                other.0, other.1
            ))),
        }
    }
}

impl fmt::Display for ClickPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScissorsConfig {
    pub drive: CoherentDrive,
    pub bs1: BeamSplitterSpec,
    pub bs2: BeamSplitterSpec,
    /// Counters on `d` and `e`.
    pub detectors: [DetectorSpec; 2],
    pub clicks: ClickPattern,
    pub output_cutoff: usize,
}

impl ScissorsConfig {
    /// Homogeneous setup: both splitters lossy 50/50 with damping `gamma_bs`.
    pub fn balanced(drive: CoherentDrive, gamma_bs: f64, eta: f64) -> Result<Self> {
        let bs = BeamSplitterSpec::lossy_balanced(gamma_bs)?;
        Ok(Self {
            drive,
            bs1: bs,
            bs2: bs,
            detectors: [DetectorSpec::new(eta)?; 2],
            clicks: ClickPattern::PRIMARY,
            output_cutoff: DEFAULT_OUTPUT_CUTOFF,
        })
    }

    pub fn target(&self) -> Result<QubitAmplitudes> {
        self.clicks
            .expected(&QubitAmplitudes::from_drive(&self.drive))
    }
}

/// Optics of the teleportation stage, independent of its input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeleportStage {
    pub bs1: BeamSplitterSpec,
    pub bs2: BeamSplitterSpec,
    /// Counters on `b` and `c`.
    pub detectors: [DetectorSpec; 2],
    pub clicks: ClickPattern,
    pub output_cutoff: usize,
}

impl TeleportStage {
    pub fn balanced(gamma_bs: f64, eta: f64) -> Result<Self> {
        let bs = BeamSplitterSpec::lossy_balanced(gamma_bs)?;
        Ok(Self {
            bs1: bs,
            bs2: bs,
            detectors: [DetectorSpec::new(eta)?; 2],
            clicks: ClickPattern::PRIMARY,
            output_cutoff: DEFAULT_OUTPUT_CUTOFF,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeleportConfig {
    pub stage: TeleportStage,
    /// State of mode `c` entering the second splitter.
    pub input: DensityOperator,
    /// Qubit the input is meant to carry; fidelities are measured against it.
    pub reference: QubitAmplitudes,
}

impl TeleportConfig {
    pub fn from_qubit(stage: TeleportStage, qubit: QubitAmplitudes) -> Result<Self> {
        Ok(Self {
            stage,
            input: qubit.to_vector("c", 1)?.to_density(),
            reference: qubit,
        })
    }

    pub fn from_state(
        stage: TeleportStage,
        input: DensityOperator,
        reference: QubitAmplitudes,
    ) -> Result<Self> {
        if input.register().labels() != ["c".to_string()] {
            return Err(Error::RegisterMismatch(format!(
                "teleport input must live on mode c, got {:?}",
                input.register().labels()
            )));
        }
        Ok(Self {
            stage,
            input,
            reference,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Probability discarded by truncating the coherent drive.
    pub truncation_error: f64,
    /// `|tr(after channels) - tr(before channels)|`.
    pub trace_defect: f64,
    /// Population of the heralded mode above one photon.
    pub multiphoton_population: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub state: DensityOperator,
    pub probability: f64,
    pub fidelity: f64,
    pub target: FockVector,
    pub diagnostics: Diagnostics,
}

#[derive(Serialize)]
pub struct RunResultJson {
    pub probability: f64,
    pub fidelity: f64,
    pub state: DensitySnapshot,
    pub target: VectorSnapshot,
    pub diagnostics: Diagnostics,
}

impl RunResult {
    pub fn to_json(&self) -> RunResultJson {
        RunResultJson {
            probability: self.probability,
            fidelity: self.fidelity,
            state: self.state.to_snapshot(),
            target: self.target.to_snapshot(),
            diagnostics: self.diagnostics,
        }
    }
}

fn finish_run(
    post: PostSelection,
    target: FockVector,
    truncation_error: f64,
    trace_defect: f64,
) -> Result<RunResult> {
    let (state, probability) = post.into_result()?;
    state.check_invariants()?;
    if !(0.0..=1.0 + 1e-12).contains(&probability) {
        return Err(Error::Invariant(format!(
            "probability {probability} outside [0, 1]"
        )));
    }
    let fidelity = state.fidelity(&target)?;
    let multiphoton_population = state.populations().iter().skip(2).sum();
    Ok(RunResult {
        state,
        probability: probability.min(1.0),
        fidelity,
        target,
        diagnostics: Diagnostics {
            truncation_error,
            trace_defect,
            multiphoton_population,
        },
    })
}

/// Heralded single-photon source stage: one photon through the first
/// splitter, the idler mixed with the coherent drive on the second, and the
/// click pattern post-selected on `(d, e)`.
pub fn run_scissors(config: &ScissorsConfig) -> Result<RunResult> {
    let out_cut = config.output_cutoff.max(1);
    let big = config.drive.cutoff() + 1;

    let reg_cd = ModeRegister::new([("c", out_cut), ("d", big)])?;
    let photon = FockVector::basis_state(reg_cd, &[1, 0])?;
    let first = lossy_bs_kraus(&config.bs1, (out_cut, big))?;
    let state = first
        .apply_ensemble(&Ensemble::pure(&photon), ("c", "d"))?
        .compress();

    let drive = coherent_amplitudes(&config.drive, "e")?.embed(&ModeRegister::single("e", big)?)?;
    let state = state.tensor_pure(&drive)?;
    let trace_in = state.trace();

    let second = lossy_bs_kraus(&config.bs2, (big, big))?;
    let state = second.apply_ensemble(&state, ("d", "e"))?;
    let trace_defect = (state.trace() - trace_in).abs();

    let events = [
        ClickEvent::new("d", config.detectors[0], config.clicks.0),
        ClickEvent::new("e", config.detectors[1], config.clicks.1),
    ];
    let post = postselect_ensemble(&state, &events)?;
    let target = config.target()?.to_vector("c", out_cut)?;
    finish_run(post, target, config.drive.truncation_error(), trace_defect)
}

/// Teleportation stage: one photon through the first splitter builds the
/// channel on `(a, b)`; `b` and the input `c` meet on the second splitter and
/// the click pattern is post-selected on `(b, c)`.
pub fn run_teleport(config: &TeleportConfig) -> Result<RunResult> {
    let stage = &config.stage;
    let out_cut = stage.output_cutoff.max(1);
    let in_cut = config.input.register().cutoff("c")?;
    let big = in_cut + 1;

    let reg_ab = ModeRegister::new([("a", out_cut), ("b", big)])?;
    let photon = FockVector::basis_state(reg_ab, &[1, 0])?;
    let first = lossy_bs_kraus(&stage.bs1, (out_cut, big))?;
    let channel = first
        .apply_ensemble(&Ensemble::pure(&photon), ("a", "b"))?
        .compress();

    let input = config.input.embed(&ModeRegister::single("c", big)?)?;
    let state = channel.tensor(&Ensemble::from_density(&input))?;
    let trace_in = state.trace();

    let second = lossy_bs_kraus(&stage.bs2, (big, big))?;
    let state = second.apply_ensemble(&state, ("b", "c"))?;
    let trace_defect = (state.trace() - trace_in).abs();

    let events = [
        ClickEvent::new("b", stage.detectors[0], stage.clicks.0),
        ClickEvent::new("c", stage.detectors[1], stage.clicks.1),
    ];
    let post = postselect_ensemble(&state, &events)?;
    let target = stage
        .clicks
        .expected(&config.reference)?
        .to_vector("a", out_cut)?;
    finish_run(post, target, 0.0, trace_defect)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub scissors: RunResult,
    pub teleport: RunResult,
    /// Fidelity of Bob's mode against the engineered target state.
    pub end_to_end_fidelity: f64,
}

/// Engineers a state with the scissors stage and teleports it.
pub fn full_pipeline(
    scissors: &ScissorsConfig,
    teleport: &TeleportStage,
) -> Result<PipelineResult> {
    let prepared = run_scissors(scissors)?;
    let reference = scissors.target()?;
    let config = TeleportConfig::from_state(*teleport, prepared.state.clone(), reference)?;
    let teleported = run_teleport(&config)?;
    let end_to_end_fidelity = teleported.fidelity;
    Ok(PipelineResult {
        scissors: prepared,
        teleport: teleported,
        end_to_end_fidelity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BellLabel {
    PsiPlus,
    PsiMinus,
    PhiPlus,
    PhiMinus,
}

impl BellLabel {
    pub const ALL: [BellLabel; 4] = [
        BellLabel::PsiPlus,
        BellLabel::PsiMinus,
        BellLabel::PhiPlus,
        BellLabel::PhiMinus,
    ];
}

impl fmt::Display for BellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BellLabel::PsiPlus => "Psi+",
            BellLabel::PsiMinus => "Psi-",
            BellLabel::PhiPlus => "Phi+",
            BellLabel::PhiMinus => "Phi-",
        };
        f.write_str(s)
    }
}

/// Bell states on `(b, c)` with unit cutoffs:
/// `Psi(+/-) = (|01> +/- i|10>)/sqrt2`, `Phi(+/-) = (|00> +/- i|11>)/sqrt2`.
pub fn bell_states() -> Vec<(BellLabel, FockVector)> {
    let reg = ModeRegister::new([("b", 1), ("c", 1)]).expect("static register");
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let build = |a: [usize; 2], b: [usize; 2], sign: f64| {
        FockVector::from_terms(reg.clone(), &[(&a[..], one), (&b[..], i * sign)])
            .expect("static terms")
    };
    vec![
        (BellLabel::PsiPlus, build([0, 1], [1, 0], 1.0)),
        (BellLabel::PsiMinus, build([0, 1], [1, 0], -1.0)),
        (BellLabel::PhiPlus, build([0, 0], [1, 1], 1.0)),
        (BellLabel::PhiMinus, build([0, 0], [1, 1], -1.0)),
    ]
}

/// Pauli correction relating a branch of Bob's state to the input qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Correction {
    /// `c0|0> + c1|1>`
    Identity,
    /// `c1|0> + c0|1>`
    BitFlip,
    /// `c0|0> - c1|1>`
    PhaseFlip,
    /// `c1|0> - c0|1>`
    BitPhaseFlip,
}

impl Correction {
    pub fn apply(&self, q: &QubitAmplitudes) -> QubitAmplitudes {
        match self {
            Correction::Identity => *q,
            Correction::BitFlip => q.bit_flipped(),
            Correction::PhaseFlip => q.phase_flipped(),
            Correction::BitPhaseFlip => q.phase_flipped().bit_flipped(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellBranch {
    pub label: BellLabel,
    /// Unnormalized state of mode `a` after projecting `(b, c)` on the Bell state.
    pub amplitude: FockVector,
    pub weight: f64,
}

impl BellBranch {
    pub fn conditional(&self) -> Result<FockVector> {
        self.amplitude.normalized()
    }

    /// Correction whose image of `input` matches the branch up to a global phase.
    pub fn correction(&self, input: &QubitAmplitudes) -> Result<(Correction, f64)> {
        let cond = self.conditional()?;
        let mut best = (Correction::Identity, -1.0);
        for corr in [
            Correction::Identity,
            Correction::BitFlip,
            Correction::PhaseFlip,
            Correction::BitPhaseFlip,
        ] {
            let v = corr.apply(input).to_vector("a", 1)?;
            let overlap = v.inner(&cond)?.norm_sqr();
            if overlap > best.1 + 1e-12 {
                best = (corr, overlap);
            }
        }
        Ok(best)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellDecomposition {
    /// Channel `(|10> + i|01>)/sqrt2` on `(a, b)` times the input on `c`.
    pub joint: FockVector,
    pub branches: Vec<BellBranch>,
}

impl BellDecomposition {
    /// `sum_k |a-branch_k> |Bell_k>`, in the register of `joint`.
    pub fn reconstruct(&self) -> Result<FockVector> {
        let mut total = DVector::zeros(self.joint.register().dim());
        let bells = bell_states();
        for branch in &self.branches {
            let bell = &bells
                .iter()
                .find(|(l, _)| *l == branch.label)
                .expect("label")
                .1;
            let term = branch.amplitude.tensor(bell)?;
            total += term.amplitudes();
        }
        FockVector::new(self.joint.register().clone(), total)
    }
}

fn ideal_channel_state() -> Result<FockVector> {
    let reg = ModeRegister::new([("a", 1), ("b", 1)])?;
    let u = ideal_bs_unitary(&BeamSplitterSpec::balanced(), &reg, ("a", "b"))?;
    let photon = FockVector::basis_state(reg.clone(), &[1, 0])?;
    FockVector::new(reg, &u * photon.amplitudes())
}

/// Expands channel times input in the Bell basis of `(b, c)`.
pub fn bell_decompose(input: &QubitAmplitudes) -> Result<BellDecomposition> {
    let joint = ideal_channel_state()?.tensor(&input.to_vector("c", 1)?)?;
    let reg = joint.register().clone();
    let a_reg = ModeRegister::single("a", 1)?;
    let mut branches = Vec::new();
    for (label, bell) in bell_states() {
        let mut amps = DVector::zeros(2);
        for (na, slot) in amps.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for occ in bell.register().basis() {
                let idx = reg
                    .index_of(&[na, occ[0], occ[1]])
                    .expect("inside register");
                acc += bell.amplitude(&occ).conj() * joint.amplitudes()[idx];
            }
            *slot = acc;
        }
        let amplitude = FockVector::new(a_reg.clone(), amps)?;
        let weight = amplitude.norm_sqr();
        branches.push(BellBranch {
            label,
            amplitude,
            weight,
        });
    }
    Ok(BellDecomposition { joint, branches })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellImage {
    pub label: BellLabel,
    /// Image under the splitter on `(b, c)` with cutoff 2 per mode.
    pub image: FockVector,
    pub norm: f64,
    /// Basis ket when the image is a single ket up to phase.
    pub single_ket: Option<[usize; 2]>,
    /// Weight outside the expected support.
    pub leakage: f64,
    /// Overlap with the expected image, `|<expected|image>|^2`.
    pub match_fidelity: f64,
}

/// Action of an ideal balanced splitter on the four Bell states.
///
/// The `Psi` states must map to a single ket with one photon; the `Phi`
/// states must map to `|00> -/+ (|20> + |02>)/sqrt2` (up to normalization),
/// with no weight on one-photon kets.
pub fn bs_action_on_bell(bs: &BeamSplitterSpec) -> Result<Vec<BellImage>> {
    if !bs.is_lossless() {
        return Err(Error::NotLossless { gamma: bs.gamma() });
    }
    if (bs.t().norm() - bs.r().norm()).abs() > 1e-12 {
        return Err(Error::InvalidState(
            "Bell analysis requires |t| = |r|".into(),
        ));
    }
    let reg = ModeRegister::new([("b", 2), ("c", 2)])?;
    let u = ideal_bs_unitary(bs, &reg, ("b", "c"))?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::new();
    for (label, bell) in bell_states() {
        let embedded = bell.embed(&reg)?;
        let image = FockVector::new(reg.clone(), &u * embedded.amplitudes())?;
        let norm = image.norm_sqr().sqrt();
        let support: Vec<Vec<usize>> = reg
            .basis()
            .filter(|occ| image.amplitude(occ).norm() > 1e-12)
            .collect();
        let single_ket = match support.as_slice() {
            [occ] => Some([occ[0], occ[1]]),
            _ => None,
        };
        let (expected, allowed): (FockVector, Vec<[usize; 2]>) = match label {
            BellLabel::PsiPlus | BellLabel::PsiMinus => {
                let ket = single_ket.unwrap_or([1, 0]);
                (FockVector::basis_state(reg.clone(), &ket)?, vec![ket])
            }
            BellLabel::PhiPlus | BellLabel::PhiMinus => {
                let sign = if label == BellLabel::PhiPlus {
                    -1.0
                } else {
                    1.0
                };
                let v = FockVector::from_terms(
                    reg.clone(),
                    &[
                        (&[0, 0], C64::new(1.0, 0.0)),
                        (&[2, 0], C64::new(sign * s, 0.0)),
                        (&[0, 2], C64::new(sign * s, 0.0)),
                    ],
                )?;
                (v, vec![[0, 0], [2, 0], [0, 2]])
            }
        };
        let leakage = reg
            .basis()
            .filter(|occ| !allowed.iter().any(|k| k[..] == occ[..]))
            .map(|occ| image.amplitude(&occ).norm_sqr())
            .sum();
        let match_fidelity = expected.inner(&image)?.norm_sqr() / image.norm_sqr();
        out.push(BellImage {
            label,
            image,
            norm,
            single_ket,
            leakage,
            match_fidelity,
        });
    }
    Ok(out)
}
