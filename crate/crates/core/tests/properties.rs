use num_complex::Complex64;

use cqed_teleport::analytic::{self, AnalyticTimes, SubspaceAmplitudes};
use cqed_teleport::calibrate;
use cqed_teleport::experiment::{run_trajectories, sample_input_state};
use cqed_teleport::hilbert::{JointBasis, QubitState, SiteBasis, StateVector};
use cqed_teleport::model::{self, LaserSetting, ModelKind, PhysicalParams};
use cqed_teleport::protocol::{ProtocolKind, ProtocolRunner};
use cqed_teleport::trajectory::{
    no_jump_propagator, run_segment, CompiledSegment, DetectorModel, RngStream, SegmentSpec,
};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

const SETTINGS: [LaserSetting; 4] = [
    LaserSetting::OFF,
    LaserSetting::BOTH,
    LaserSetting::ALICE,
    LaserSetting::BOB,
];

#[test]
fn channel_completeness_to_1e12() {
    let basis = JointBasis::default();
    let mut p = PhysicalParams::from_mhz(100.0, 10.0, 10.0, 1.0, 0.2, 0.05).unwrap();
    for r in [0.0, 0.5, 1.0] {
        p.branching_to_0 = r;
        for model in [ModelKind::Full, ModelKind::Effective] {
            let ops = model::collapse_ops(&p, &basis, model).unwrap();
            for lasers in SETTINGS {
                let h = model::joint_hamiltonian(&p, &basis, lasers, model).unwrap();
                let res = model::channel_completeness_residual(&h, &ops);
                assert!(res < 1e-12, "{model} {lasers:?} r={r}: {res}");
            }
        }
    }
}

#[test]
fn closed_form_matches_matrix_exponential() {
    let sb = SiteBasis::default();
    for kappa in [0.0, 0.1, 0.265, 0.5] {
        let p = PhysicalParams::reference(0.0, kappa).unwrap();
        for on in [true, false] {
            let h = model::site_hamiltonian(&p, &sb, on, ModelKind::Effective).unwrap();
            for t in [0.0, 0.013, 0.25, 0.5, 2.0] {
                let u = no_jump_propagator(&h, t);
                let inits = [
                    SubspaceAmplitudes::ground(),
                    SubspaceAmplitudes::excited_atom(),
                    SubspaceAmplitudes::photon(),
                    SubspaceAmplitudes::new(c(0.6, 0.0), c(0.0, 0.48), c(-0.64, 0.0)),
                ];
                for init in inits {
                    let num = u.apply(&init.to_site_vector(&sb)).unwrap();
                    let exact = analytic::propagate_closed_form(init, t, on, &p)
                        .unwrap()
                        .to_site_vector(&sb);
                    for (a, b) in num.as_slice().iter().zip(exact.as_slice()) {
                        assert!((a - b).norm() < 1e-9, "kappa {kappa} t {t} on {on}");
                    }
                }
            }
        }
    }
}

#[test]
fn optimizer_recovers_closed_form_times() {
    for kappa in [0.05, 0.12, 0.16] {
        let p = PhysicalParams::reference(0.0, kappa).unwrap();
        let seeds = AnalyticTimes::compute(&p, 0).unwrap();
        let r = calibrate::calibrate(ProtocolKind::Modified, &p, ModelKind::Effective, 0, 10.0).unwrap();
        let s = r.schedule;
        assert!((s.t_a - seeds.t_a).abs() < 1e-6, "t_A at {kappa}");
        assert!((s.t_b - seeds.t_b).abs() < 1e-6, "t_B at {kappa}");
        assert!((s.t_d - seeds.t_d).abs() < 1e-6, "t_d at {kappa}");
        assert!((s.t_c - seeds.t_c.unwrap()).abs() < 1e-6, "t_c at {kappa}");
        assert!(r.flags.is_empty(), "{:?}", r.flags);
    }
}

fn quiet_fraction(seg: &CompiledSegment, psi: &StateVector, seed: u64, n: u64) -> f64 {
    let quiet = (0..n)
        .filter(|&i| {
            let out = run_segment(psi, seg, &DetectorModel::PERFECT, &mut RngStream::new(seed, i)).unwrap();
            assert!(out.record.is_well_formed(seg.duration()));
            out.record.is_empty()
        })
        .count();
    quiet as f64 / n as f64
}

#[test]
fn preparation_no_click_frequencies() {
    let p = PhysicalParams::reference(0.0, 0.265).unwrap();
    let basis = JointBasis::default();
    let n = 10_000;
    let check = |frac: f64, expect: f64| {
        let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((frac - expect).abs() < 3.0 * sigma, "{frac} vs {expect} (σ = {sigma})");
    };

    let q = QubitState::normalize(c(0.6, 0.0), c(0.0, 0.8)).unwrap();
    let ta = analytic::t_map(&p).unwrap();
    let spec = SegmentSpec::from_params(&p, &basis, LaserSetting::ALICE, ModelKind::Effective, ta).unwrap();
    let mut psi = StateVector::zeros(basis.dim());
    psi.as_slice_mut()[basis.ket_index((0, 0), (0, 0))] = q.alpha;
    psi.as_slice_mut()[basis.ket_index((1, 0), (0, 0))] = q.beta;
    check(
        quiet_fraction(&CompiledSegment::new(&spec), &psi, 5, n),
        analytic::prob_prep_alice(&q, &p).unwrap(),
    );

    let tb = analytic::t_entangle(&p).unwrap();
    let spec = SegmentSpec::from_params(&p, &basis, LaserSetting::BOB, ModelKind::Effective, tb).unwrap();
    let psi = StateVector::basis_state(basis.dim(), basis.ket_index((0, 0), (1, 0)));
    check(
        quiet_fraction(&CompiledSegment::new(&spec), &psi, 6, n),
        analytic::prob_prep_bob(&p).unwrap(),
    );
}

#[test]
fn reproducible_across_worker_counts() {
    let p = PhysicalParams::reference(1.0, 0.265).unwrap();
    let det = DetectorModel::new(0.88, 1.0, 0.02).unwrap();
    let r = calibrate::calibrate(ProtocolKind::Modified, &p, ModelKind::Full, 0, 10.0).unwrap();
    let runner = ProtocolRunner::new(ProtocolKind::Modified, &p, r.schedule, ModelKind::Full).unwrap();
    let one = run_trajectories(&runner, &det, 77, 400, Some(1)).unwrap();
    let three = run_trajectories(&runner, &det, 77, 400, Some(3)).unwrap();
    let default = run_trajectories(&runner, &det, 77, 400, None).unwrap();
    assert_eq!(one, three);
    assert_eq!(one, default);
    for (k, t) in one.iter().enumerate() {
        assert_eq!(t.index, k as u64);
        let bits = |x: Option<f64>| x.map(f64::to_bits);
        assert_eq!(bits(t.fidelity), bits(three[k].fidelity));
    }
    // the same stream reproduces the same input and record
    let mut a = RngStream::new(77, 5);
    let mut b = RngStream::new(77, 5);
    let qa = sample_input_state(&mut a);
    let qb = sample_input_state(&mut b);
    assert_eq!(qa, qb);
    assert_eq!(
        runner.run(&qa, &det, &mut a).unwrap(),
        runner.run(&qb, &det, &mut b).unwrap()
    );
}

#[test]
fn calibration_is_bit_identical() {
    let p = PhysicalParams::reference(1.0, 0.265).unwrap();
    let a = calibrate::calibrate(ProtocolKind::Modified, &p, ModelKind::Full, 0, 10.0).unwrap();
    let b = calibrate::calibrate(ProtocolKind::Modified, &p, ModelKind::Full, 0, 10.0).unwrap();
    assert_eq!(a, b);
}
