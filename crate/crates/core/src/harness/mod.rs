//! Experiment orchestration: radius sweeps, λ-slope fits, α-averages.

pub mod config;
pub mod record;

pub use config::{AlphaSpec, Experiment, ExperimentConfig, FamilyName, LabelledAlpha, MethodName, Thresholds};
pub use record::{emit_results, log_log_fit, to_csv, to_json_lines, ConvergenceRecord, Fit, Format, Row, Status, Verdict};

use crate::bloch::{matrix_oracle, QuasiMomentum};
use crate::boltzmann::{l2_pairing, ShellQuadrature, GAIN_TIME_ORDER};
use crate::duhamel::{assemble_q, assemble_q_in, duhamel_window, eval_i00, Method};
use crate::error::{BoltzError, Result};
use crate::phasespace::{hs_pairing, wavepacket_overlap, wavepacket_symbol, PairTransforms, ScalingParams};
use crate::theta::{horocycle_mean, theta_limit, theta_limit_family, HorocycleExperiment, TestKind, ThetaTestFunction};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::time::Instant;

/// Run the configured experiment on a pool of `cfg.threads` workers (the
/// global pool when unset) and return its record with verdicts filled in.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ConvergenceRecord> {
    cfg.validate()?;
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| BoltzError::Config(format!("thread pool: {e}")))?
            .install(|| dispatch(cfg)),
        None => dispatch(cfg),
    }
}

fn dispatch(cfg: &ExperimentConfig) -> Result<ConvergenceRecord> {
    let mut rec = match cfg.experiment {
        Experiment::Zeroth => zeroth(cfg)?,
        Experiment::FirstCancel => first_cancel(cfg)?,
        Experiment::ThetaMean => {
            let alphas = cfg.alphas()?;
            if let Some(reason) = rational_alpha(cfg, &alphas)? {
                return Ok(ConvergenceRecord::excluded(cfg.experiment, reason));
            }
            let mut rec = ConvergenceRecord::empty(cfg.experiment);
            theta_mean_rows(cfg, &alphas, &mut rec)?;
            rec
        }
        Experiment::ThetaMeanFamily => theta_mean_family(cfg)?,
        Experiment::SecondOrder => second_order(cfg)?,
        Experiment::DuhamelVsOracle => duhamel_vs_oracle(cfg)?,
        Experiment::AlphaAverage => alpha_average(cfg)?,
        Experiment::Wavepacket => wavepacket(cfg)?,
    };
    rec.sort_rows();
    apply_thresholds(&mut rec, cfg);
    rec.settle();
    Ok(rec)
}

struct Clock {
    start: Instant,
    on: bool,
}

impl Clock {
    fn start(cfg: &ExperimentConfig) -> Self {
        Self {
            start: Instant::now(),
            on: cfg.timings,
        }
    }

    fn seconds(&self) -> f64 {
        if self.on {
            self.start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }
}

fn params(cfg: &ExperimentConfig, r: f64) -> Result<ScalingParams> {
    ScalingParams::new(cfg.d, r, 0.0, cfg.t)
}

fn coords(r: f64, alpha: &LabelledAlpha) -> String {
    format!("r = {r}, alpha = {} {:?}", alpha.id, alpha.alpha.alpha())
}

fn zeroth(cfg: &ExperimentConfig) -> Result<ConvergenceRecord> {
    let mut rec = ConvergenceRecord::empty(cfg.experiment);
    let pair = cfg.pair()?;
    let s = cfg.duhamel_settings();
    let limit = hs_pairing(&pair.a, &pair.b)?;
    let tr = PairTransforms::new(&pair, 0.0)?;
    for alpha in cfg.alphas()? {
        for &r in &cfg.r {
            let clock = Clock::start(cfg);
            let run = || -> Result<_> {
                let p = params(cfg, r)?;
                let win = duhamel_window(&tr, &p, s.eps_trunc)?;
                eval_i00(&pair, &alpha.alpha, &p, &win, &s)
            };
            let v = run().map_err(|e| e.at(coords(r, &alpha)))?;
            rec.rows.push(Row::new(cfg.experiment, cfg.d, r, &alpha.id, v.value, limit, None, v.tail, clock.seconds()));
        }
    }
    Ok(rec)
}

fn first_cancel(cfg: &ExperimentConfig) -> Result<ConvergenceRecord> {
    let mut rec = ConvergenceRecord::empty(cfg.experiment);
    let pair = cfg.pair()?;
    let s = cfg.duhamel_settings();
    let zero = Complex64::new(0.0, 0.0);
    for alpha in cfg.alphas()? {
        for &r in &cfg.r {
            let clock = Clock::start(cfg);
            let run = || -> Result<_> {
                let p = params(cfg, r)?;
                let q0 = assemble_q(0, &pair, &alpha.alpha, &p, Method::Direct, &s)?;
                let q1 = assemble_q(1, &pair, &alpha.alpha, &p, Method::Direct, &s)?;
                Ok((q0, q1))
            };
            let (q0, q1) = run().map_err(|e| e.at(coords(r, &alpha)))?;
            rec.rows.push(Row::new(
                cfg.experiment,
                cfg.d,
                r,
                &alpha.id,
                q1.value,
                zero,
                Some(q0.value.norm()),
                q1.tail,
                clock.seconds(),
            ));
        }
    }
    Ok(rec)
}

fn shell_rule(d: usize) -> Result<ShellQuadrature> {
    ShellQuadrature::default_for(d)
}

fn horocycle(cfg: &ExperimentConfig, alpha: &QuasiMomentum, r: f64, support: (f64, f64)) -> Result<HorocycleExperiment> {
    let y: Vec<f64> = alpha.alpha().iter().map(|a| -a).collect();
    let mut exp = HorocycleExperiment::new(y, r, cfg.d as f64 - 2.0, support)?;
    exp.panel_in_v = cfg.numerics.theta_panel_in_v;
    exp.max_panel = cfg.numerics.theta_max_panel;
    exp.order = cfg.numerics.theta_order;
    Ok(exp)
}

/// Horocycle mean of `|Θ|²` with test function `a(y₁, y₂)` and the
/// weight `χ_{[−w, w]}`, together with its limit.
fn theta_mean_rows(cfg: &ExperimentConfig, alphas: &[LabelledAlpha], rec: &mut ConvergenceRecord) -> Result<()> {
    let f = cfg.pair()?.a;
    let w = cfg.numerics.weight_half_width;
    let limit = theta_limit(std::slice::from_ref(&f), 1.0, 2.0 * w, &shell_rule(cfg.d)?)?.value();
    for alpha in alphas {
        for &r in &cfg.r {
            let clock = Clock::start(cfg);
            let run = || -> Result<_> {
                let exp = horocycle(cfg, &alpha.alpha, r, (-w, w))?;
                horocycle_mean(&exp, |_| Ok(vec![f.clone()]))
            };
            let m = run().map_err(|e| e.at(coords(r, alpha)))?;
            rec.rows.push(Row::new(cfg.experiment, cfg.d, r, &alpha.id, m.value, limit, None, m.tail, clock.seconds()));
        }
    }
    Ok(())
}

/// Screen every α for rational relations; `None` means all passed.
fn rational_alpha(cfg: &ExperimentConfig, alphas: &[LabelledAlpha]) -> Result<Option<String>> {
    for a in alphas {
        let est = a.alpha.clone().estimated(cfg.numerics.diophantine_q_max)?;
        if est.independent() == Some(false) {
            let rel = est.estimate().and_then(|e| e.relation.clone()).unwrap_or_default();
            return Ok(Some(format!(
                "alpha {} = {:?} satisfies the integer relation {rel:?}",
                a.id,
                a.alpha.alpha()
            )));
        }
    }
    Ok(None)
}

fn theta_mean_family(cfg: &ExperimentConfig) -> Result<ConvergenceRecord> {
    let mut rec = ConvergenceRecord::empty(cfg.experiment);
    let pair = cfg.pair()?;
    let t = cfg.t;
    let tr = PairTransforms::new(&pair, t)?;
    let kind = match cfg.numerics.family {
        FamilyName::Light => TestKind::Light,
        FamilyName::Light2 => TestKind::Light2,
    };
    let test = ThetaTestFunction::order2(kind, &tr, &cfg.potential(), t, cfg.numerics.light2_inner_order)?;
    let limit = theta_limit_family(&test, |_| 1.0, (-t, t), &shell_rule(cfg.d)?)?.value();
    for alpha in cfg.alphas()? {
        for &r in &cfg.r {
            let clock = Clock::start(cfg);
            let run = || -> Result<_> {
                let exp = horocycle(cfg, &alpha.alpha, r, (-t, t))?;
                horocycle_mean(&exp, |u| test.profile(u, r))
            };
            let m = run().map_err(|e| e.at(coords(r, &alpha)))?;
            rec.rows.push(Row::new(cfg.experiment, cfg.d, r, &alpha.id, m.value, limit, None, m.tail, clock.seconds()));
        }
    }
    Ok(rec)
}

fn second_order(cfg: &ExperimentConfig) -> Result<ConvergenceRecord> {
    let mut rec = ConvergenceRecord::empty(cfg.experiment);
    let pair = cfg.pair()?;
    let s = cfg.duhamel_settings();
    let limit = l2_pairing(cfg.t, &pair, &s.potential, &shell_rule(cfg.d)?, GAIN_TIME_ORDER)?.value();
    let method: Method = cfg.numerics.method.into();
    let alphas = cfg.alphas()?;
    for alpha in &alphas {
        for &r in &cfg.r {
            let clock = Clock::start(cfg);
            let q2 = params(cfg, r)
                .and_then(|p| assemble_q(2, &pair, &alpha.alpha, &p, method, &s))
                .map_err(|e| e.at(coords(r, alpha)))?;
            rec.rows.push(Row::new(cfg.experiment, cfg.d, r, &alpha.id, q2.value, limit, None, q2.tail, clock.seconds()));
        }
    }
    if let (Some(r), Some(tol)) = (cfg.thresholds.cross_check_r, cfg.thresholds.cross_check_rel) {
        for alpha in &alphas {
            let run = || -> Result<_> {
                let p = params(cfg, r)?;
                let direct = assemble_q(2, &pair, &alpha.alpha, &p, Method::Direct, &s)?;
                let theta = assemble_q(2, &pair, &alpha.alpha, &p, Method::Theta, &s)?;
                Ok((direct.value - theta.value).norm() / direct.value.norm())
            };
            let rel = run().map_err(|e| e.at(coords(r, alpha)))?;
            rec.verdicts.push(Verdict::at_most(format!("direct-vs-theta[r={r},{}]", alpha.id), rel, tol));
        }
    }
    Ok(rec)
}

fn duhamel_vs_oracle(cfg: &ExperimentConfig) -> Result<ConvergenceRecord> {
    let mut rec = ConvergenceRecord::empty(cfg.experiment);
    let pair = cfg.pair()?;
    let s = cfg.duhamel_settings();
    let method: Method = cfg.numerics.method.into();
    for alpha in cfg.alphas()? {
        for &r in &cfg.r {
            let clock = Clock::start(cfg);
            let run = || -> Result<_> {
                let p = params(cfg, r)?;
                let tr = PairTransforms::new(&pair, cfg.t)?;
                let win = duhamel_window(&tr, &p, s.eps_trunc)?;
                let mut q = Vec::with_capacity(3);
                for n in 0..3 {
                    q.push(assemble_q_in(n, &tr, &alpha.alpha, &p, &win, method, &s)?);
                }
                let owin = win.with_radius(cfg.numerics.oracle_radius);
                let z = matrix_oracle(&alpha.alpha, &p, &cfg.lambda, &pair.a, &pair.b, &s.potential, &owin, &cfg.oracle_settings())?;
                Ok((q, z))
            };
            let (q, z) = run().map_err(|e| e.at(coords(r, &alpha)))?;
            let seconds = clock.seconds();
            let mut pts = Vec::new();
            for (&l, z) in cfg.lambda.iter().zip(&z) {
                let series = q[0].value + q[1].value * l + q[2].value * (l * l);
                let tail = q[0].tail + l * q[1].tail + l * l * q[2].tail + z.boundary_mass;
                let mut row = Row::new(cfg.experiment, cfg.d, r, &alpha.id, z.value, series, None, tail, seconds);
                row.lambda = Some(l);
                pts.push((l, row.abs_dev));
                rec.rows.push(row);
            }
            rec.fits.push(log_log_fit(&format!("remainder-vs-lambda[r={r},{}]", alpha.id), &pts));
        }
    }
    Ok(rec)
}

fn alpha_average(cfg: &ExperimentConfig) -> Result<ConvergenceRecord> {
    let mut rec = ConvergenceRecord::empty(cfg.experiment);
    let preset = cfg.preset_alpha()?;
    let mut alphas = vec![preset];
    alphas.extend(cfg.alphas()?);
    theta_mean_rows(cfg, &alphas, &mut rec)?;
    let k = cfg.thresholds.max_standard_errors;
    for &r in &cfg.r {
        let at_r: Vec<&Row> = rec.rows.iter().filter(|row| row.r == r).collect();
        let signed = |row: &Row| (row.value() - row.limit()).re;
        let Some(preset_dev) = at_r.iter().find(|row| row.alpha_id == "preset").map(|row| signed(row)) else {
            continue;
        };
        let devs: Vec<f64> = at_r.iter().filter(|row| row.alpha_id != "preset").map(|row| signed(row)).collect();
        let n = devs.len() as f64;
        let mean = devs.iter().sum::<f64>() / n;
        let var = devs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        rec.fits.push(Fit {
            name: format!("alpha-mean-deviation[r={r}]"),
            slope: mean,
            intercept: se,
        });
        if let Some(k) = k {
            rec.verdicts.push(Verdict::at_most(
                format!("mean-vs-preset-in-se[r={r}]"),
                (mean - preset_dev).abs() / se,
                k,
            ));
        }
    }
    Ok(rec)
}

fn wavepacket(cfg: &ExperimentConfig) -> Result<ConvergenceRecord> {
    let mut rec = ConvergenceRecord::empty(cfg.experiment);
    let spec = cfg.wavepacket()?;
    let b = cfg.pair()?.b;
    let limit = hs_pairing(&wavepacket_symbol(&spec)?, &b)?;
    let mut pts = Vec::new();
    for &r in &cfg.r {
        let clock = Clock::start(cfg);
        let v = params(cfg, r)
            .and_then(|p| wavepacket_overlap(&spec, &b, &p))
            .map_err(|e| e.at(format!("r = {r}")))?;
        let row = Row::new(cfg.experiment, cfg.d, r, "none", v, limit, None, 0.0, clock.seconds());
        pts.push((r, row.abs_dev));
        rec.rows.push(row);
    }
    if pts.len() >= 2 && pts.iter().all(|p| p.1 > 0.0) {
        rec.fits.push(log_log_fit("deviation-vs-r", &pts));
    }
    Ok(rec)
}

fn fmt_r(r: f64) -> String {
    format!("r={r}")
}

/// Turn the thresholds of `cfg` into verdicts on the sorted rows.
fn apply_thresholds(rec: &mut ConvergenceRecord, cfg: &ExperimentConfig) {
    let th = &cfg.thresholds;
    let index_of = |r: f64| cfg.r.iter().position(|x| *x == r);
    let mut verdicts = Vec::new();
    for row in &rec.rows {
        let Some(i) = index_of(row.r) else { continue };
        let tag = match row.lambda {
            Some(l) => format!("{},{},lambda={l}", fmt_r(row.r), row.alpha_id),
            None => format!("{},{}", fmt_r(row.r), row.alpha_id),
        };
        if let Some(v) = &th.max_abs_dev {
            verdicts.push(Verdict::at_most(format!("abs_dev[{tag}]"), row.abs_dev, v[i]));
        }
        if let Some(v) = &th.max_rel_dev {
            verdicts.push(Verdict::at_most(format!("rel_dev[{tag}]"), row.rel_dev, v[i]));
        }
    }
    // sweeps, grouped by α
    let mut groups: BTreeMap<&str, Vec<&Row>> = BTreeMap::new();
    for row in rec.rows.iter().filter(|r| r.lambda.is_none()) {
        groups.entry(row.alpha_id.as_str()).or_default().push(row);
    }
    let is_mc = |id: &str| id.starts_with("mc");
    for (id, rows) in &groups {
        if rec.experiment == Experiment::AlphaAverage && is_mc(id) {
            continue;
        }
        if th.monotone && rows.len() >= 2 {
            let worst = rows
                .windows(2)
                .map(|w| w[1].rel_dev / w[0].rel_dev)
                .fold(0.0f64, f64::max);
            verdicts.push(Verdict::at_most(format!("monotone-decrease[{id}]"), worst, 1.0 - f64::EPSILON));
        }
        if let (Some(limit), Some(last)) = (th.final_rel_dev, rows.last()) {
            verdicts.push(Verdict::at_most(format!("final-rel-dev[{},{id}]", fmt_r(last.r)), last.rel_dev, limit));
        }
    }
    for fit in &rec.fits {
        if fit.name.starts_with("alpha-mean") {
            continue;
        }
        if let (Some(target), Some(tol)) = (th.slope_target, th.slope_tol) {
            verdicts.push(Verdict::at_most(format!("slope-offset[{}]", fit.name), (fit.slope - target).abs(), tol));
        }
        if let Some(min) = th.slope_min {
            verdicts.push(Verdict::at_least(format!("slope-min[{}]", fit.name), fit.slope, min));
        }
    }
    rec.verdicts.extend(verdicts);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(text).unwrap()
    }

    #[test]
    fn zeroth_passes_at_stated_tolerances() {
        let c = cfg(r#"
experiment = "zeroth"
d = 2
r = [0.1, 0.2]
timings = false
[thresholds]
max_abs_dev = [1e-8, 1e-6]
"#);
        let rec = run_experiment(&c).unwrap();
        assert_eq!(rec.rows.len(), 2);
        assert!(rec.rows[0].r > rec.rows[1].r);
        assert_eq!(rec.verdicts.len(), 2);
        assert!(rec.passed(), "{:?}", rec.verdicts);
    }

    #[test]
    fn rational_alpha_is_excluded() {
        let c = cfg(r#"
experiment = "theta-mean"
d = 2
r = [0.5]
[alpha]
kind = "explicit"
value = [0.5, 0.25]
[thresholds]
final_rel_dev = 0.5
"#);
        let rec = run_experiment(&c).unwrap();
        assert!(matches!(rec.status, Status::Excluded(_)), "{:?}", rec.status);
        assert!(rec.rows.is_empty() && rec.verdicts.is_empty());
    }

    #[test]
    fn theta_mean_runs_at_coarse_radius() {
        let c = cfg(r#"
experiment = "theta-mean"
d = 2
r = [0.5, 0.3]
timings = false
[thresholds]
final_rel_dev = 1.0
"#);
        let rec = run_experiment(&c).unwrap();
        let lim = rec.rows[0].limit();
        assert!((lim.re - (std::f64::consts::PI + 1.0)).abs() < 1e-8, "{lim}");
        assert!(rec.rows.iter().all(|r| r.value().is_finite()));
        assert!(rec.passed());
    }

    #[test]
    fn wavepacket_deviation_decays() {
        let mut c = ExperimentConfig::new(Experiment::Wavepacket, 2, vec![0.4, 0.2, 0.1]);
        c.symbols.momentum = vec![0.3, -0.2];
        c.symbols.window_width = 0.9;
        c.symbols.b_center = vec![0.2, 0.0, 0.4, 0.1];
        c.thresholds.slope_min = Some(1.8);
        c.thresholds.max_rel_dev = Some(vec![1.0, 1.0, 0.05]);
        let rec = run_experiment(&c).unwrap();
        assert!(rec.passed(), "{:?}", rec.verdicts);
        assert_eq!(rec.fits.len(), 1);
    }
}
