//! Browser bindings: closed-form vs numerical dynamics, the detection-time
//! limit and a small campaign. Arrays are returned flat, row-major.

use wasm_bindgen::prelude::*;

use cqed_teleport::analytic::{self, SubspaceAmplitudes};
use cqed_teleport::experiment::{run_campaign, CampaignConfig};
use cqed_teleport::hilbert::SiteBasis;
use cqed_teleport::model::{self, ModelKind, PhysicalParams};
use cqed_teleport::protocol::ProtocolKind;
use cqed_teleport::trajectory::{no_jump_propagator, DetectorModel};
use cqed_teleport::Result;

/// Columns of [`closed_form_curve`].
pub const CURVE_COLUMNS: usize = 4;

/// Rows `(t, closed form, effective numeric, full numeric)` of the `|10>`
/// population of one site started in `|10>`, for `n` times in `[0, t_max]`.
pub fn excited_population_curve(kappa_mhz: f64, laser_on: bool, t_max: f64, n: usize) -> Result<Vec<f64>> {
    let p = PhysicalParams::reference(0.0, kappa_mhz)?;
    let sb = SiteBasis::default();
    let start = SubspaceAmplitudes::excited_atom().to_site_vector(&sb);
    let h_eff = model::site_hamiltonian(&p, &sb, laser_on, ModelKind::Effective)?;
    let h_full = model::site_hamiltonian(&p, &sb, laser_on, ModelKind::Full)?;
    let idx = sb.index(1, 0);
    let n = n.max(2);
    let mut out = Vec::with_capacity(n * CURVE_COLUMNS);
    for k in 0..n {
        let t = t_max * k as f64 / (n - 1) as f64;
        let exact = analytic::propagate_closed_form(SubspaceAmplitudes::excited_atom(), t, laser_on, &p)?;
        let eff = no_jump_propagator(&h_eff, t).apply(&start)?;
        let full = no_jump_propagator(&h_full, t).apply(&start)?;
        out.extend([
            t,
            exact.c10.norm_sqr(),
            eff.get(idx).norm_sqr(),
            full.get(idx).norm_sqr(),
        ]);
    }
    Ok(out)
}

/// Rows `(κ/2π, t_d,max, t_d)` with NaN where compensation is impossible.
pub fn detection_limit_curve(kappa_lo: f64, kappa_hi: f64, n: usize) -> Result<Vec<f64>> {
    let n = n.max(2);
    let mut out = Vec::with_capacity(n * 3);
    for k in 0..n {
        let kappa = kappa_lo + (kappa_hi - kappa_lo) * k as f64 / (n - 1) as f64;
        let p = PhysicalParams::reference(0.0, kappa)?;
        let limit = analytic::t_detect_max(&p).unwrap_or(f64::NAN);
        out.extend([kappa, limit, analytic::t_detect_choice(&p, 0)]);
    }
    Ok(out)
}

/// `(success probability, mean fidelity, stderr F, stderr P, accepted)`.
#[allow(clippy::too_many_arguments)]
pub fn campaign_point(
    protocol: &str,
    kappa_mhz: f64,
    gamma_mhz: f64,
    eta: f64,
    dark_khz: f64,
    n_traj: u32,
    seed: u32,
) -> Result<Vec<f64>> {
    let p = PhysicalParams::reference(gamma_mhz, kappa_mhz)?;
    let mut cfg = CampaignConfig::new(
        p,
        protocol.parse::<ProtocolKind>()?,
        ModelKind::Full,
        n_traj.into(),
        seed.into(),
    );
    cfg.detector = DetectorModel::new(eta, 1.0, dark_khz * 1e-3)?;
    let pt = run_campaign(&cfg)?.points.remove(0);
    Ok(vec![
        pt.success_prob,
        pt.avg_fidelity,
        pt.stderr_fidelity,
        pt.stderr_success,
        pt.n_accepted as f64,
    ])
}

fn js<T>(r: Result<T>) -> std::result::Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn closed_form_curve(
    kappa_mhz: f64,
    laser_on: bool,
    t_max: f64,
    n: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    js(excited_population_curve(kappa_mhz, laser_on, t_max, n))
}

#[wasm_bindgen]
pub fn t_detect_max_curve(kappa_lo: f64, kappa_hi: f64, n: usize) -> std::result::Result<Vec<f64>, JsError> {
    js(detection_limit_curve(kappa_lo, kappa_hi, n))
}

#[wasm_bindgen]
pub fn small_campaign(
    protocol: &str,
    kappa_mhz: f64,
    gamma_mhz: f64,
    eta: f64,
    dark_khz: f64,
    n_traj: u32,
    seed: u32,
) -> std::result::Result<Vec<f64>, JsError> {
    js(campaign_point(
        protocol, kappa_mhz, gamma_mhz, eta, dark_khz, n_traj, seed,
    ))
}

#[wasm_bindgen]
pub fn compensation_threshold_mhz() -> std::result::Result<f64, JsError> {
    let p = js(PhysicalParams::reference(0.0, 0.1))?;
    js(analytic::max_kappa_for_compensation(&p, 0)).map(|k| k / std::f64::consts::TAU)
}
