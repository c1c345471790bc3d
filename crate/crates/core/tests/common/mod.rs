//! Independent reference models shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;
use qscissors::apparatus::QubitAmplitudes;
use qscissors::channels::{ideal_bs_unitary, BeamSplitterSpec};
use qscissors::fock::{DensityOperator, ModeRegister, C64};

/// Closed-form fidelity of the engineered state at splitter damping `g`,
/// detector efficiency `eta` and weight ratio `ratio`.
///
/// Obtained by eliminating the loss modes by hand; cross-checked against an
/// explicit amplitude-damping simulation written independently of the crate.
pub fn scissors_fidelity_reference(eta: f64, g: f64, ratio: f64) -> f64 {
    let a = (1.0 + g) / (1.0 - g) - eta * (1.0 - g);
    1.0 - a / ((1.0 + ratio) * (ratio + a + 1.0))
}

/// Closed-form end-to-end fidelity after engineering and teleportation.
pub fn teleport_fidelity_reference(eta: f64, g: f64, ratio: f64) -> f64 {
    let a = (3.0 + g) / (1.0 - g) - 3.0 * eta * (1.0 - g);
    1.0 - a / ((1.0 + ratio) * (ratio + a + 1.0))
}

/// `(eta, Gamma, |gamma|, P_scissors, P_teleport)` from the independent
/// amplitude-damping simulation.
pub const PROBABILITY_REFERENCES: [(f64, f64, f64, f64, f64); 4] = [
    (0.7, 0.02, 1.0, 0.199_306_390_4, 0.215_805_340_9),
    (0.5, 0.1, 0.5, 0.130_562_949_9, 0.124_442_974_0),
    (1.0, 0.1, 1.0, 0.191_189_382_5, 0.239_318_181_8),
    (0.7, 0.0, 0.5, 0.194_649_096_7, 0.194_811_320_8),
];

/// Counts click probabilities by routing the detected mode through an ideal
/// splitter of transmission `eta` into a vacuum ancilla, projecting the
/// detected mode on `clicks` photons and tracing the ancilla.
///
/// `rho` lives on `(s, m)`; the result is the unnormalized state of `s`.
pub fn ancilla_detector(rho: &DensityOperator, eta: f64, clicks: usize) -> DMatrix<C64> {
    let reg = rho.register();
    let (cs, cm) = (reg.cutoff("s").unwrap(), reg.cutoff("m").unwrap());
    let big = ModeRegister::new([("s", cs), ("m", cm), ("v", cm)]).unwrap();
    let spec = BeamSplitterSpec::ideal(eta).unwrap();
    let u = ideal_bs_unitary(&spec, &big, ("m", "v")).unwrap();

    let mut lifted = DMatrix::zeros(big.dim(), big.dim());
    for i in 0..reg.dim() {
        for j in 0..reg.dim() {
            let (oi, oj) = (reg.occupations(i), reg.occupations(j));
            let bi = big.index_of(&[oi[0], oi[1], 0]).unwrap();
            let bj = big.index_of(&[oj[0], oj[1], 0]).unwrap();
            lifted[(bi, bj)] = rho.matrix()[(i, j)];
        }
    }
    let evolved = &u * lifted * u.adjoint();

    let mut out = DMatrix::zeros(cs + 1, cs + 1);
    for s1 in 0..=cs {
        for s2 in 0..=cs {
            let mut acc = C64::new(0.0, 0.0);
            for v in 0..=cm {
                let i = big.index_of(&[s1, clicks, v]).unwrap();
                let j = big.index_of(&[s2, clicks, v]).unwrap();
                acc += evolved[(i, j)];
            }
            out[(s1, s2)] = acc;
        }
    }
    out
}

/// `<0| w |0>` for a word in `L` (`true`) and `L^dagger` (`false`) with
/// `[L, L^dagger] = d`, by repeated normal ordering.
pub fn vacuum_word(word: &[bool], d: Ratio<i64>) -> Ratio<i64> {
    if word.is_empty() {
        return Ratio::from_integer(1);
    }
    if *word.last().unwrap() || !word[0] {
        return Ratio::from_integer(0);
    }
    let i = word
        .windows(2)
        .position(|w| w[0] && !w[1])
        .expect("a word starting with L and ending with L^dagger has an L L^dagger pair");
    let mut swapped = word.to_vec();
    swapped.swap(i, i + 1);
    let mut contracted = word.to_vec();
    contracted.drain(i..i + 2);
    vacuum_word(&swapped, d) + d * vacuum_word(&contracted, d)
}

pub fn moment_word(n: usize, m: usize) -> Vec<bool> {
    let mut w = vec![true; n];
    w.extend(std::iter::repeat_n(false, m));
    w
}

/// Deterministic pseudo-random qubits from a 64-bit LCG.
pub fn qubit_stream(seed: u64, count: usize) -> Vec<QubitAmplitudes> {
    let mut state = seed;
    let mut next = move || {
        state = state
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    (0..count)
        .map(|_| {
            let c0 = C64::new(next(), next());
            let c1 = C64::new(next(), next());
            QubitAmplitudes::normalized(c0, c1).unwrap()
        })
        .collect()
}

/// Random density operator on `reg` mixing three pure states.
pub fn mixed_state(reg: &ModeRegister, seed: u64) -> DensityOperator {
    let mut state = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut rho = DMatrix::zeros(reg.dim(), reg.dim());
    let weights = [0.5, 0.3, 0.2];
    for w in weights {
        let v = DVector::from_fn(reg.dim(), |_, _| C64::new(next(), next()));
        let v = &v / C64::new(v.norm(), 0.0);
        rho += v.clone() * v.adjoint() * C64::new(w, 0.0);
    }
    DensityOperator::new(reg.clone(), rho).unwrap()
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
