use std::fs;

use cqed_teleport::analytic::{self, SubspaceAmplitudes};
use cqed_teleport::experiment::{
    read_trajectory_log, run_campaign, summarize_results, sweep_inefficiency, sweep_kappa, CampaignConfig, CSV_HEADER,
};
use cqed_teleport::model::{ModelKind, PhysicalParams};
use cqed_teleport::protocol::ProtocolKind;
use cqed_teleport::trajectory::DetectorModel;

fn small(kind: ProtocolKind, n: u64) -> CampaignConfig {
    CampaignConfig::new(
        PhysicalParams::reference(1.0, 0.265).unwrap(),
        kind,
        ModelKind::Full,
        n,
        21,
    )
}

#[test]
fn success_probability_is_exact_ratio() {
    let s = run_campaign(&small(ProtocolKind::Modified, 777)).unwrap();
    let pt = &s.points[0];
    assert_eq!(pt.n_traj, 777);
    assert_eq!(pt.success_prob, pt.n_accepted as f64 / 777.0);
    assert!(pt.stderr_fidelity > 0.0 && pt.stderr_success > 0.0);
}

#[test]
fn single_trajectory_campaign() {
    for seed in 0..6 {
        let mut c = small(ProtocolKind::Original, 1);
        c.base_seed = seed;
        let pt = run_campaign(&c).unwrap().points.remove(0);
        assert!(pt.success_prob == 0.0 || pt.success_prob == 1.0);
    }
}

#[test]
fn log_reaggregation_matches_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(ProtocolKind::Modified, 500);
    c.detector = DetectorModel::new(0.88, 1.0, 0.02).unwrap();
    c.output = Some(dir.path().join("out/summary.csv"));
    c.trajectory_log = Some(dir.path().join("log.csv"));
    let s = sweep_kappa(&c, &[0.15, 0.265]).unwrap();
    let log = read_trajectory_log(&fs::read_to_string(dir.path().join("log.csv")).unwrap()).unwrap();
    assert_eq!(log.len(), 1000);
    for pt in &s.points {
        let rows: Vec<_> = log
            .iter()
            .filter(|(v, _)| *v == pt.sweep_value)
            .map(|(_, r)| *r)
            .collect();
        let (n_acc, succ, fid, se_f, se_s) = summarize_results(&rows);
        assert_eq!(n_acc, pt.n_accepted);
        assert_eq!(succ, pt.success_prob);
        assert_eq!(fid, pt.avg_fidelity);
        assert_eq!(se_f, pt.stderr_fidelity);
        assert_eq!(se_s, pt.stderr_success);
    }
    let csv = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    let fields: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(fields[0], "kappa_t_mhz");
    assert_eq!(fields[1].parse::<f64>().unwrap(), 0.265);
    assert_eq!(fields[7].parse::<f64>().unwrap(), s.points[1].avg_fidelity);
    assert_eq!(
        fields[14].parse::<f64>().unwrap(),
        s.points[1].schedule.unwrap().t_big_d
    );
}

#[test]
fn campaign_is_reproducible_across_workers() {
    let mut a = small(ProtocolKind::Original, 300);
    a.workers = Some(1);
    let mut b = a.clone();
    b.workers = Some(4);
    assert_eq!(run_campaign(&a).unwrap(), run_campaign(&b).unwrap());
}

#[test]
fn failed_points_do_not_stop_a_sweep() {
    // κ/2π = 5 MHz is overdamped for δ/2π = 1 MHz
    let c = small(ProtocolKind::Modified, 50);
    let s = sweep_kappa(&c, &[0.2, 5.0, 0.25]).unwrap();
    assert_eq!(s.points.len(), 3);
    assert!(s.points[0].error.is_none());
    assert!(s.points[1].error.is_some());
    assert!(s.points[1].avg_fidelity.is_nan());
    assert!(s.points[2].error.is_none());
}

#[test]
fn inefficiency_sweep_applies_overall_efficiency() {
    let mut c = small(ProtocolKind::Original, 200);
    c.detector = DetectorModel::new(0.88, 1.0, 0.0).unwrap();
    let s = sweep_inefficiency(&c, &[0.12, 1.0]).unwrap();
    assert_eq!(s.points[0].sweep_var, "inefficiency");
    // no photon is ever seen and there are no dark counts
    assert_eq!(s.points[1].n_accepted, 0);
    assert!(s.plateau_edge.is_none());
    assert!(sweep_inefficiency(&c, &[1.5]).is_err());
}

#[test]
fn ideal_success_probability_matches_oracle() {
    // Original protocol, effective model, perfect detectors: acceptance
    // needs exactly one photon in total, so for Haar inputs
    // P = (|b01|² + e^{-κ t_A} |b10|²) / 2 with Bob's unnormalized
    // post-preparation amplitudes b10, b01.
    let p = PhysicalParams::reference(0.0, 0.12).unwrap();
    let tb = analytic::t_entangle(&p).unwrap();
    let ta = analytic::t_map(&p).unwrap();
    let b = analytic::propagate_closed_form(SubspaceAmplitudes::excited_atom(), tb, true, &p).unwrap();
    let oracle = 0.5 * (b.c01.norm_sqr() + (-p.kappa() * ta).exp() * b.c10.norm_sqr());
    let n = 20_000;
    let c = CampaignConfig::new(p, ProtocolKind::Original, ModelKind::Effective, n, 22);
    let pt = run_campaign(&c).unwrap().points.remove(0);
    let sigma = (oracle * (1.0 - oracle) / n as f64).sqrt();
    assert!(
        (pt.success_prob - oracle).abs() < 3.0 * sigma,
        "{} vs {oracle}",
        pt.success_prob
    );
}
