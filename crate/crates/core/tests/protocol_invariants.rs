use num_complex::Complex64;

use cqed_teleport::analytic;
use cqed_teleport::calibrate;
use cqed_teleport::experiment::{run_campaign, run_trajectories, sample_input_state, CampaignConfig};
use cqed_teleport::hilbert::QubitState;
use cqed_teleport::model::{ModelKind, PhysicalParams};
use cqed_teleport::protocol::{ProtocolKind, ProtocolRunner, StageSchedule};
use cqed_teleport::trajectory::{DetectorModel, RngStream};

fn ideal() -> PhysicalParams {
    PhysicalParams::reference(0.0, 0.12).unwrap()
}

fn runner(kind: ProtocolKind, p: &PhysicalParams, model: ModelKind, t_big: f64) -> ProtocolRunner {
    let sched = StageSchedule::analytic(kind, p, 0, t_big).unwrap();
    ProtocolRunner::new(kind, p, sched, model).unwrap()
}

#[test]
fn ideal_modified_runs_are_near_perfect() {
    let p = ideal();
    let r = runner(ProtocolKind::Modified, &p, ModelKind::Effective, 10.0);
    let out = run_trajectories(&r, &DetectorModel::PERFECT, 11, 3000, None).unwrap();
    let accepted: Vec<_> = out.iter().filter(|t| t.accepted).collect();
    assert!(accepted.len() > 300);
    for t in accepted {
        let f = t.fidelity.unwrap();
        assert!(f >= 0.999, "trajectory {} fidelity {f}", t.index);
    }
}

#[test]
fn ideal_original_matches_damped_state() {
    let p = ideal();
    let r = runner(ProtocolKind::Original, &p, ModelKind::Effective, 30.0);
    let damp = (-p.kappa() * analytic::t_map(&p).unwrap() / 2.0).exp();
    let mut checked = 0;
    for i in 0..1500 {
        let mut rng = RngStream::new(12, i);
        let q = sample_input_state(&mut rng);
        let o = r.run(&q, &DetectorModel::PERFECT, &mut rng).unwrap();
        if let Some(f) = o.fidelity {
            let (a2, b2) = (q.alpha.norm_sqr(), q.beta.norm_sqr());
            let expect = (a2 + damp * b2).powi(2) / (a2 + damp * damp * b2);
            assert!((f - expect).abs() < 1e-6, "{f} vs {expect}");
            checked += 1;
        }
    }
    assert!(checked > 300);
}

#[test]
fn ground_input_is_teleported_by_bobs_photon() {
    let p = ideal();
    let r = runner(ProtocolKind::Modified, &p, ModelKind::Effective, 10.0);
    let mut accepted = 0;
    for i in 0..1000 {
        let mut rng = RngStream::new(13, i);
        let o = r.run(&QubitState::zero(), &DetectorModel::PERFECT, &mut rng).unwrap();
        if o.accepted {
            accepted += 1;
            assert!(o.fidelity.unwrap() > 0.999);
            // only Bob's photon can click
            let clicks: usize = o.records.iter().map(|(_, rec)| rec.observed_count()).sum();
            assert_eq!(clicks, 1);
        }
    }
    assert!(accepted > 0);
}

#[test]
fn epsilon_symmetry() {
    let p = PhysicalParams::reference(1.0, 0.265).unwrap();
    let cal = calibrate::calibrate(ProtocolKind::Modified, &p, ModelKind::Full, 0, 10.0).unwrap();
    let r = ProtocolRunner::new(ProtocolKind::Modified, &p, cal.schedule, ModelKind::Full).unwrap();
    let out = run_trajectories(&r, &DetectorModel::PERFECT, 14, 8000, None).unwrap();
    let split = |eps: i8| -> Vec<f64> {
        out.iter()
            .filter(|t| t.epsilon == Some(eps))
            .map(|t| t.fidelity.unwrap())
            .collect()
    };
    let (plus, minus) = (split(1), split(-1));
    let n = (plus.len() + minus.len()) as f64;
    let diff = plus.len() as f64 - minus.len() as f64;
    assert!(diff.abs() < 3.0 * n.sqrt(), "{} vs {}", plus.len(), minus.len());
    let stats = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        (m, v / xs.len() as f64)
    };
    let ((mp, vp), (mm, vm)) = (stats(&plus), stats(&minus));
    assert!((mp - mm).abs() < 3.0 * (vp + vm).sqrt(), "{mp} vs {mm}");
}

#[test]
fn global_phase_invariance() {
    let p = PhysicalParams::reference(1.0, 0.265).unwrap();
    let det = DetectorModel::new(0.88, 1.0, 0.02).unwrap();
    let cal = calibrate::calibrate(ProtocolKind::Modified, &p, ModelKind::Full, 0, 10.0).unwrap();
    let r = ProtocolRunner::new(ProtocolKind::Modified, &p, cal.schedule, ModelKind::Full).unwrap();
    let phase = Complex64::from_polar(1.0, 1.234);
    for i in 0..400 {
        let q = sample_input_state(&mut RngStream::new(15, 1_000_000 + i));
        let shifted = QubitState::new(q.alpha * phase, q.beta * phase).unwrap();
        let a = r.run(&q, &det, &mut RngStream::new(15, i)).unwrap();
        let b = r.run(&shifted, &det, &mut RngStream::new(15, i)).unwrap();
        assert_eq!(a.accepted, b.accepted);
        assert_eq!(a.epsilon, b.epsilon);
        assert_eq!(a.reject_reason, b.reject_reason);
        match (a.fidelity, b.fidelity) {
            (Some(x), Some(y)) => assert!((x - y).abs() < 1e-12),
            (None, None) => {}
            _ => panic!("fidelity presence differs"),
        }
    }
}

#[test]
fn modified_accepts_less_often_than_original() {
    let p = PhysicalParams::reference(0.0, 0.2).unwrap();
    let mut probs = Vec::new();
    for kind in [ProtocolKind::Original, ProtocolKind::Modified] {
        let c = CampaignConfig::new(p, kind, ModelKind::Full, 4000, 16);
        let s = run_campaign(&c).unwrap();
        let pt = &s.points[0];
        probs.push((pt.success_prob, pt.stderr_success));
    }
    let ((po, so), (pm, sm)) = (probs[0], probs[1]);
    assert!(pm <= po + 3.0 * (so * so + sm * sm).sqrt(), "{pm} vs {po}");
}

#[test]
fn fidelity_present_iff_accepted() {
    let p = PhysicalParams::reference(1.0, 0.265).unwrap();
    let det = DetectorModel::new(0.88, 1.0, 0.05).unwrap();
    for kind in [ProtocolKind::Original, ProtocolKind::Modified] {
        let r = runner(kind, &p, ModelKind::Full, 10.0);
        for i in 0..300 {
            let mut rng = RngStream::new(17, i);
            let q = sample_input_state(&mut rng);
            let o = r.run(&q, &det, &mut rng).unwrap();
            assert_eq!(o.accepted, o.fidelity.is_some());
            assert_eq!(o.accepted, o.epsilon.is_some());
            assert_eq!(o.accepted, o.reject_reason.is_none());
            for (stage, rec) in &o.records {
                assert!(rec.events.windows(2).all(|w| w[0].time <= w[1].time), "{stage:?}");
            }
        }
    }
}
