//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the run
//! exits non-zero when any of them fails.

mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use num_rational::Ratio;
use qscissors::analytic::{teleport_fidelity, truncation_fidelity, wick_moment, NoiseParams};
use qscissors::apparatus::{
    bell_states, bs_action_on_bell, run_scissors, run_teleport, BellLabel, ClickPattern,
    ScissorsConfig, TeleportConfig, TeleportStage,
};
use qscissors::channels::{
    detector_povm, lossy_bs_kraus, postselect, BeamSplitterSpec, ClickEvent, DetectorSpec,
};
use qscissors::fock::{CoherentDrive, FockVector, ModeRegister, C64};
use qscissors::report::{csv_string, run_sweep, SweepGrid, CSV_COLUMNS};

fn verdict(id: u32, name: &str, failures: &[String]) -> bool {
    if failures.is_empty() {
        println!("PASS criterion {id}: {name}");
    } else {
        println!("FAIL criterion {id}: {name}");
        for f in failures {
            println!("    {f}");
        }
    }
    failures.is_empty()
}

fn drive(g: f64) -> CoherentDrive {
    CoherentDrive::auto(
        C64::new(g, 0.0),
        CoherentDrive::DEFAULT_TAIL_EPS,
        CoherentDrive::MAX_AUTO_CUTOFF,
    )
    .unwrap()
}

fn criterion_1_ideal_teleportation_identity() -> bool {
    let start = Instant::now();
    let mut failures = Vec::new();
    let stage = TeleportStage::balanced(0.0, 1.0).unwrap();
    let mut swapped_stage = stage;
    swapped_stage.clicks = ClickPattern::SWAPPED;
    for (i, q) in qubit_stream(0x5eed, 50).into_iter().enumerate() {
        let res = run_teleport(&TeleportConfig::from_qubit(stage, q).unwrap()).unwrap();
        if res.fidelity < 1.0 - 1e-10 || (res.probability - 0.25).abs() > 1e-10 {
            failures.push(format!(
                "qubit {i}: F={} P={}",
                res.fidelity, res.probability
            ));
        }
        let flipped = q.phase_flipped().to_vector("a", 2).unwrap();
        let res = run_teleport(&TeleportConfig::from_qubit(swapped_stage, q).unwrap()).unwrap();
        let f = res.state.fidelity(&flipped).unwrap();
        if f < 1.0 - 1e-10 || (res.probability - 0.25).abs() > 1e-10 {
            failures.push(format!("qubit {i} (0,1): F={f} P={}", res.probability));
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(5) {
        failures.push(format!("runtime {elapsed:?}"));
    }
    verdict(
        1,
        "ideal teleportation identity, 50 qubits, both click patterns",
        &failures,
    )
}

fn criterion_2_ideal_scissors_truncation() -> bool {
    let mut failures = Vec::new();
    for amp in [0.5, 1.0, 2.0] {
        let res = run_scissors(&ScissorsConfig::balanced(drive(amp), 0.0, 1.0).unwrap()).unwrap();
        if res.fidelity < 1.0 - 1e-10 {
            failures.push(format!("gamma {amp}: F={}", res.fidelity));
        }
        if res.diagnostics.multiphoton_population >= 1e-12 {
            failures.push(format!(
                "gamma {amp}: multiphoton {}",
                res.diagnostics.multiphoton_population
            ));
        }
    }
    verdict(2, "ideal scissors output equals truncated drive", &failures)
}

fn criterion_3_bell_basis() -> bool {
    let mut failures = Vec::new();
    let bells = bell_states();
    for (i, (li, x)) in bells.iter().enumerate() {
        for (j, (lj, y)) in bells.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            let got = x.inner(y).unwrap();
            if (got - C64::new(want, 0.0)).norm() > 1e-14 {
                failures.push(format!("<{li}|{lj}> = {got}"));
            }
        }
    }
    let images = bs_action_on_bell(&BeamSplitterSpec::balanced()).unwrap();
    for img in &images {
        if (img.norm - 1.0).abs() > 1e-12
            || img.leakage > 1e-12
            || (img.match_fidelity - 1.0).abs() > 1e-12
        {
            failures.push(format!(
                "{}: norm {} leakage {} match {}",
                img.label, img.norm, img.leakage, img.match_fidelity
            ));
        }
        match img.label {
            BellLabel::PsiPlus | BellLabel::PsiMinus => {
                if img.single_ket.is_none() {
                    failures.push(format!("{} is not a single click pattern", img.label));
                }
            }
            _ => {
                if img.single_ket.is_some() {
                    failures.push(format!("{} unexpectedly maps to one ket", img.label));
                }
            }
        }
        println!(
            "    {} -> {}",
            img.label,
            img.single_ket
                .map(|k| format!("|{}{}>", k[0], k[1]))
                .unwrap_or_else(|| "|00> -/+ (|20> + |02>)/sqrt2".into())
        );
    }
    let plus = images
        .iter()
        .find(|i| i.label == BellLabel::PsiPlus)
        .unwrap();
    let minus = images
        .iter()
        .find(|i| i.label == BellLabel::PsiMinus)
        .unwrap();
    if plus.single_ket == minus.single_ket {
        failures.push("Psi assignment unresolved".into());
    }
    verdict(
        3,
        "Bell states orthonormal, splitter action and Psi assignment",
        &failures,
    )
}

fn criterion_4_detector_model_equivalence() -> bool {
    let mut failures = Vec::new();
    let reg = ModeRegister::new([("s", 1), ("m", 4)]).unwrap();
    for eta in [0.3, 0.7, 1.0] {
        let det = DetectorSpec::new(eta).unwrap();
        for photons in 0..=4 {
            let rho = FockVector::basis_state(reg.clone(), &[0, photons])
                .unwrap()
                .to_density();
            for clicks in 0..=4 {
                let povm = detector_povm(&det, clicks, 4).unwrap()[photons];
                let post = postselect(&rho, &[ClickEvent::new("m", det, clicks)]).unwrap();
                let alt = ancilla_detector(&rho, eta, clicks).trace().re;
                let worst = (povm - alt).abs().max((post.probability() - alt).abs());
                if worst > 1e-12 {
                    failures.push(format!("eta {eta} |{photons}> n={clicks}: {worst:e}"));
                }
            }
        }
    }
    verdict(
        4,
        "detector POVM equals lossy-splitter-plus-projection model",
        &failures,
    )
}

fn random_specs(count: usize) -> Vec<BeamSplitterSpec> {
    let mut state = 0x0123_4567_89ab_cdefu64;
    let mut next = move || {
        state = state
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    (0..count)
        .map(|_| {
            let total = next().sqrt();
            let split = next();
            let (a, b) = (total * split.sqrt(), total * (1.0 - split).sqrt());
            let bound = if a * b > 0.0 {
                ((1.0 - a * a - b * b) / (2.0 * a * b)).min(1.0)
            } else {
                1.0
            };
            let delta = ((2.0 * next() - 1.0) * bound).acos();
            let phase = std::f64::consts::TAU * next();
            BeamSplitterSpec::new(C64::from_polar(a, phase), C64::from_polar(b, phase - delta))
                .unwrap()
        })
        .collect()
}

fn criterion_5_kraus_completeness_and_loss() -> bool {
    let mut failures = Vec::new();
    let reg = ModeRegister::new([("a", 1), ("b", 1)]).unwrap();
    for (i, spec) in random_specs(20).iter().enumerate() {
        let ch = lossy_bs_kraus(spec, (3, 3)).unwrap();
        let defect = ch.completeness_defect();
        if defect > 1e-10 {
            failures.push(format!("spec {i}: completeness {defect:e}"));
        }
        let small = lossy_bs_kraus(spec, (1, 1)).unwrap();
        for occ in [[1, 0], [0, 1]] {
            let rho = FockVector::basis_state(reg.clone(), &occ)
                .unwrap()
                .to_density();
            let out = small.apply(&rho, ("a", "b")).unwrap();
            let err = (out.population(&[0, 0]) - spec.gamma()).abs();
            if err > 1e-12 {
                failures.push(format!("spec {i} input {occ:?}: P(00) off by {err:e}"));
            }
        }
    }
    verdict(
        5,
        "Kraus completeness and single-photon loss, 20 specs",
        &failures,
    )
}

fn criterion_6_wick_oracle() -> bool {
    let mut failures = Vec::new();
    for d in [
        Ratio::new(0, 1),
        Ratio::new(1, 4),
        Ratio::new(1, 2),
        Ratio::new(1, 1),
    ] {
        let df = *d.numer() as f64 / *d.denom() as f64;
        for n in 0..=4usize {
            let exact = vacuum_word(&moment_word(n, n), d);
            let want = *exact.numer() as f64 / *exact.denom() as f64;
            let got = wick_moment(n as u32, n as u32, df);
            if got != want {
                failures.push(format!("n={n} d={d}: {got} vs {exact}"));
            }
        }
    }
    verdict(
        6,
        "Wick moments equal brute-force normal ordering",
        &failures,
    )
}

fn criterion_7_verbatim_formulas() -> bool {
    let mut failures = Vec::new();
    for ratio in [0.25, 1.0, 4.0] {
        let p = NoiseParams::from_ratio(1.0, 0.0, ratio).unwrap();
        let fs = truncation_fidelity(&p).unwrap().value;
        let ft = teleport_fidelity(&p).unwrap().value;
        if fs != 1.0 || ft != 1.0 {
            failures.push(format!("ideal at R={ratio}: {fs}, {ft}"));
        }
    }
    let v = teleport_fidelity(&NoiseParams::from_ratio(0.7, 0.02, 1.0).unwrap())
        .unwrap()
        .value;
    if (v - 0.830_728).abs() > 1e-6 {
        failures.push(format!("teleport(0.7, 0.02, 1) = {v}"));
    }
    let grid = SweepGrid::default();
    let ratios: Vec<f64> = {
        let mut r: Vec<f64> = grid.drives.iter().map(|g| 1.0 / g.norm_sqr()).collect();
        r.sort_by(f64::total_cmp);
        r
    };
    for &eta in &grid.etas {
        for &g in &grid.gammas {
            let f = |r: f64| {
                teleport_fidelity(&NoiseParams::from_ratio(eta, g, r).unwrap())
                    .unwrap()
                    .value
            };
            let vals: Vec<f64> = ratios.iter().map(|&r| f(r)).collect();
            if vals.windows(2).any(|w| w[1] < w[0]) {
                failures.push(format!("not monotone at eta {eta} gamma {g}: {vals:?}"));
            }
            let far = f(1e6);
            if (1.0 - far).abs() > 1e-5 {
                failures.push(format!("eta {eta} gamma {g}: F(1e6) = {far}"));
            }
        }
    }
    verdict(
        7,
        "closed-form fidelities reproduce their stated values",
        &failures,
    )
}

fn criterion_8_numeric_versus_closed_form_sweep() -> bool {
    let mut failures = Vec::new();
    let grid = SweepGrid::default();
    let start = Instant::now();
    let rows = run_sweep(&grid);
    let csv = csv_string(&rows).unwrap();
    let elapsed = start.elapsed();

    if csv.lines().count() != rows.len() + 1 || rows.len() != 27 {
        failures.push(format!(
            "CSV has {} lines for {} rows",
            csv.lines().count(),
            rows.len()
        ));
    }
    let diff_cols: Vec<usize> = CSV_COLUMNS
        .iter()
        .enumerate()
        .filter(|(_, c)| c.starts_with("abs_diff"))
        .map(|(i, _)| i)
        .collect();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if diff_cols.iter().any(|&i| fields[i].is_empty()) {
            failures.push(format!("empty abs_diff in row {line}"));
        }
    }
    for row in &rows {
        let tag = format!("eta {} gamma {} R {}", row.eta, row.gamma, row.ratio_r);
        if row.gamma == 0.0 {
            let d = row.abs_diff_scissors.unwrap_or(f64::INFINITY);
            if d > 1e-6 {
                failures.push(format!(
                    "{tag}: scissors numeric {:.9} vs closed form {:.9} (diff {d:.3e})",
                    row.fid_scissors_numeric.unwrap_or(f64::NAN),
                    row.fid_scissors_oracle.unwrap_or(f64::NAN)
                ));
            }
        }
        let oob = row
            .fid_scissors_oracle
            .is_some_and(|v| !(0.0..=1.0).contains(&v));
        if oob != row.oob_fid_scissors {
            failures.push(format!("{tag}: out-of-range flag mismatch"));
        }
        if row.eta == 1.0 && row.gamma == 0.1 && !row.oob_fid_scissors {
            failures.push(format!("{tag}: expected out-of-range flag"));
        }
    }
    if elapsed >= Duration::from_secs(60) {
        failures.push(format!("sweep runtime {elapsed:?}"));
    }
    verdict(
        8,
        "numeric versus closed-form sweep over the default grid",
        &failures,
    )
}

fn criterion_9_pipeline_csv_is_deterministic() -> bool {
    let run = || {
        let out = Command::new(env!("CARGO_BIN_EXE_qscissors"))
            .args([
                "pipeline", "--eta", "0.7", "--gamma", "0.02", "--drive", "1.0",
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
        out.stdout
    };
    let first = run();
    let mut failures = Vec::new();
    for i in 0..3 {
        if run() != first {
            failures.push(format!("repeat {i} differs"));
        }
    }
    verdict(
        9,
        "repeated pipeline runs give byte-identical CSV",
        &failures,
    )
}

fn main() -> std::process::ExitCode {
    let criteria: [(u32, fn() -> bool); 9] = [
        (1, criterion_1_ideal_teleportation_identity),
        (2, criterion_2_ideal_scissors_truncation),
        (3, criterion_3_bell_basis),
        (4, criterion_4_detector_model_equivalence),
        (5, criterion_5_kraus_completeness_and_loss),
        (6, criterion_6_wick_oracle),
        (7, criterion_7_verbatim_formulas),
        (8, criterion_8_numeric_versus_closed_form_sweep),
        (9, criterion_9_pipeline_csv_is_deterministic),
    ];
    let mut failed = Vec::new();
    for (id, run) in criteria {
        let ok = std::panic::catch_unwind(run).unwrap_or_else(|_| {
            println!("FAIL criterion {id}: panicked");
            false
        });
        if !ok {
            failed.push(id);
        }
    }
    println!(
        "acceptance: {} passed, {} failed {:?}",
        criteria.len() - failed.len(),
        failed.len(),
        failed
    );
    if failed.is_empty() {
        std::process::ExitCode::SUCCESS
    } else {
        std::process::ExitCode::FAILURE
    }
}
