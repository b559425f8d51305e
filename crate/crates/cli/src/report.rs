//! Certificate evaluation for a resolved scenario.

use platoon_core::certify::{
    alpha_tilde, gamma_tilde, select_mitigation_topology, theorem1_certificate, theorem2_certificate, theorem2_params,
    Certificate, GammaSource, LyapunovTrace, Mitigation, Theorem2Params,
};
use platoon_core::gain::{closed_loop_spectral_radius, schur_window, Gain};
use platoon_core::sim::{self, Metrics, Trace};
use platoon_core::trigger::{compute_s_constants, TriggerScheme};
use platoon_core::{PlatoonError, Resolved, Result};

pub struct CertifyReport {
    pub alpha_tilde: std::result::Result<f64, String>,
    pub gamma_tilde: std::result::Result<(f64, GammaSource), String>,
    pub theorem2: Option<Theorem2Params<f64>>,
    pub delta_star: f64,
    /// `None` when the scenario has no attack budget or the rates are invalid.
    pub theorem1: Option<Certificate<f64>>,
    pub theorem2_cert: Option<Certificate<f64>>,
    pub attacked_gain: Gain<f64>,
    pub nominal_radius: f64,
    pub attacked_radius: f64,
    pub window_upper: f64,
    pub mitigation: Option<(String, Mitigation<f64>)>,
}

/// Runs the scenario once and evaluates every certificate on it.
pub fn certify(r: &Resolved) -> Result<(CertifyReport, Trace, Metrics)> {
    let sc = &r.scenario;
    let trace = sim::run(sc)?;
    let metrics = sim::metrics(&trace, sc);
    let report = certify_with(r, &trace, &metrics)?;
    Ok((report, trace, metrics))
}

pub fn certify_with(r: &Resolved, trace: &Trace, metrics: &Metrics) -> Result<CertifyReport> {
    let sc = &r.scenario;
    let sp = sc.static_params;
    let h = sc.topology.h_matrix::<f64>();
    let spectrum = sc.topology.h_spectrum::<f64>()?;
    let lambda_n = spectrum.max();
    let w2 = sc.w.scale(1.0 - sp.w1_fraction);
    let alpha = alpha_tilde(sp.s_constants(), sp.beta, sp.partial, &w2, lambda_n, &sc.p).map_err(|e| e.to_string());

    let attacked_gain = Gain::new(sc.gain.kp, sc.gain.kv + sc.attack.g_tilde_v());
    let w1 = sc.w.scale(sp.w1_fraction);
    let s_att = compute_s_constants(&h, &sc.p, &sc.plant.a(), &sc.plant.b(), attacked_gain, &w1)?;
    let values: Vec<f64> = trace.rows.iter().map(|row| row.lyapunov).collect();
    let attacked: Vec<bool> = trace.rows.iter().map(|row| row.attacked.iter().any(|&a| a)).collect();
    let fallback = LyapunovTrace { values: &values, attacked: &attacked };
    let gamma =
        gamma_tilde(s_att, sp.beta, sp.partial, &w2, lambda_n, &sc.p, Some(fallback)).map_err(|e| e.to_string());

    let delta_star = metrics.delta_star();
    let theorem2 = match (sc.scheme, &alpha) {
        (TriggerScheme::Dynamic(dp), Ok(a)) => Some(theorem2_params(&sp, &dp, *a)),
        _ => None,
    };
    let (mut theorem1, mut theorem2_cert) = (None, None);
    if let (Some(b), Ok(a), Ok((g, _))) = (r.budget, &alpha, &gamma) {
        theorem1 = Some(certificate_or_trivial(
            theorem1_certificate(b.tau0, delta_star, b.f0, *a, *g),
            b.tau0 + delta_star * b.f0,
        ));
        if let Some(t2) = &theorem2 {
            theorem2_cert = match theorem2_certificate(b.tau0, delta_star, b.f0, t2.big_gamma_tilde, *g) {
                Err(PlatoonError::CertificateInvalid(_)) => None,
                c => Some(certificate_or_trivial(c, b.tau0 + delta_star * b.f0)),
            };
        }
    }

    let t = sc.plant.sample_time();
    let mitigation = select_mitigation_topology(&r.candidates, t, sc.gain.kp, attacked_gain.kv)?
        .map(|m| (r.candidates[m.index].to_string(), m));
    Ok(CertifyReport {
        alpha_tilde: alpha,
        gamma_tilde: gamma,
        theorem2,
        delta_star,
        theorem1,
        theorem2_cert,
        attacked_gain,
        nominal_radius: closed_loop_spectral_radius(t, sc.gain, &spectrum),
        attacked_radius: closed_loop_spectral_radius(t, attacked_gain, &spectrum),
        window_upper: schur_window(t, sc.gain.kp, lambda_n).upper,
        mitigation,
    })
}

/// A non-positive `α̃+γ̃` means the attacked mode decays too; the bound then
/// holds for every budget and the margin is reported as infinite.
fn certificate_or_trivial(c: Result<Certificate<f64>>, lhs: f64) -> Certificate<f64> {
    c.unwrap_or(Certificate { holds: true, lhs, rhs: f64::INFINITY, margin: f64::INFINITY })
}

impl CertifyReport {
    /// Margin of the certificate matching the scheme.
    pub fn margin(&self) -> Option<f64> {
        match self.theorem2 {
            Some(_) => self.theorem2_cert.map(|c| c.margin),
            None => self.theorem1.map(|c| c.margin),
        }
    }

    /// A dynamic scheme whose `Γ̃` is not positive cannot be certified at all.
    fn theorem2_text(&self, s: String) -> String {
        match (&self.theorem2, &self.theorem2_cert) {
            (Some(t2), None) if t2.big_gamma_tilde <= 0.0 => "infeasible".into(),
            _ => s,
        }
    }

    pub fn margin_text(&self) -> String {
        match self.margin() {
            Some(m) => m.to_string(),
            None => self.theorem2_text("n/a".into()),
        }
    }

    /// `(key, value)` pairs in display order.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        let num = |v: f64| v.to_string();
        let res =
            |v: &std::result::Result<f64, String>| v.as_ref().map_or_else(|e| format!("invalid ({e})"), |x| num(*x));
        let cert = |c: &Option<Certificate<f64>>| c.map_or("n/a".to_string(), |c| c.holds.to_string());
        let margin = |c: &Option<Certificate<f64>>| c.map_or("n/a".to_string(), |c| num(c.margin));
        let mut f = vec![
            ("alpha_tilde", res(&self.alpha_tilde)),
            (
                "gamma_tilde",
                match &self.gamma_tilde {
                    Ok((g, _)) => num(*g),
                    Err(e) => format!("invalid ({e})"),
                },
            ),
            (
                "gamma_source",
                match &self.gamma_tilde {
                    Ok((_, GammaSource::Formula)) => "formula".into(),
                    Ok((_, GammaSource::Empirical)) => "trace".into(),
                    Err(_) => "n/a".into(),
                },
            ),
        ];
        match &self.theorem2 {
            Some(t2) => f.extend([
                ("alpha1", num(t2.alpha1)),
                ("Gamma_tilde", num(t2.big_gamma_tilde)),
                ("eq61", t2.eq61.to_string()),
                ("eq62_printed", t2.eq62_printed.to_string()),
                ("eq62_reversed", t2.eq62_reversed.to_string()),
                ("theorem2_feasible", t2.feasible.to_string()),
            ]),
            None => f.extend([("alpha1", "n/a".into()), ("Gamma_tilde", "n/a".into())]),
        }
        f.extend([
            ("delta_star", num(self.delta_star)),
            ("theorem1_holds", cert(&self.theorem1)),
            ("theorem1_margin", margin(&self.theorem1)),
            ("theorem2_holds", self.theorem2_text(cert(&self.theorem2_cert))),
            ("theorem2_margin", self.theorem2_text(margin(&self.theorem2_cert))),
            ("attacked_kv", num(self.attacked_gain.kv)),
            ("window_upper", num(self.window_upper)),
            ("spectral_radius", num(self.nominal_radius)),
            ("attacked_spectral_radius", num(self.attacked_radius)),
        ]);
        match &self.mitigation {
            Some((name, m)) => f.extend([
                ("mitigation", name.clone()),
                ("mitigation_lambda_max", num(m.lambda_max)),
                ("mitigation_window_upper", num(m.window.upper)),
            ]),
            None => f.push(("mitigation", "none".into())),
        }
        f
    }
}

pub fn metrics_fields(m: &Metrics) -> Vec<(String, String)> {
    let opt = |v: Option<f64>| v.map_or("not-reached".to_string(), |x| x.to_string());
    let mut f = vec![
        ("consensus_time".to_string(), opt(m.consensus_time)),
        ("total_triggers".to_string(), m.total_triggers.to_string()),
        ("horizon_triggers".to_string(), m.horizon_triggers.to_string()),
        ("triggering_rate".to_string(), opt(m.triggering_rate)),
        ("delta_star".to_string(), m.delta_star().to_string()),
        ("max_velocity_error".to_string(), m.max_velocity_error.to_string()),
        ("max_spacing_error".to_string(), m.max_spacing_error.to_string()),
        ("diverged".to_string(), m.diverged.to_string()),
    ];
    for (i, q) in m.trigger_counts.iter().enumerate() {
        f.push((format!("triggers_{}", i + 1), q.to_string()));
    }
    f
}
