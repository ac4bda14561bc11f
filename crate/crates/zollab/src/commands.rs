//! One runner per subcommand. Each writes its artifacts through [`Output`]
//! and returns a status plus a short human-readable summary.
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use zollab_core::anosov_katok::{
    resume_scheme, torus_orbit_certificate, ConjugationState, SchemeConfig, StageReport,
};
use zollab_core::capacities::{
    ech_capacities_ellipsoid, ech_capacities_polydisk, ehgh_table, polydisk_ehgh_table, Exact,
};
use zollab_core::counterexamples::CounterexampleConfig;
use zollab_core::domains::{ellipsoid_amplitude_exact, Ellipsoid, Polydisk};
use zollab_core::lift::{characteristic_from_periodic_point, lifted_volume, BumpProfile, Radial, TimePeriodicHamiltonian};
use zollab_core::numerics::{IntegratorConfig, SphereGrid};
use zollab_core::reeb::{systolic_ratio, SystoleSearch};
use zollab_core::spectral::{bm_distance_near_zoll, spectral_c0_c1_exact, NEAR_ZOLL};

use crate::config::Settings;
use crate::output::{exact_row, num, Output};
use crate::suite;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Inconclusive,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Inconclusive => "inconclusive",
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Inconclusive => 2,
        }
    }
}

pub struct Outcome {
    pub status: Status,
    pub summary: Vec<String>,
}

fn ok(summary: Vec<String>) -> Result<Outcome> {
    Ok(Outcome { status: Status::Ok, summary })
}

/// Whether an error from the core means "could not decide" rather than failure.
pub fn is_inconclusive(e: &anyhow::Error) -> bool {
    matches!(
        e.downcast_ref::<zollab_core::Error>(),
        Some(zollab_core::Error::Inconclusive(_)) | Some(zollab_core::Error::StageBudget { .. })
    )
}

/// Runs the command of `settings`, writing artifacts and the manifest to `dir`.
pub fn run(settings: &Settings, dir: &Path) -> Result<Outcome> {
    let mut out = Output::create(dir)?;
    let mut timings = BTreeMap::new();
    let start = Instant::now();
    let res = dispatch(settings, &mut out);
    timings.insert("total".to_string(), start.elapsed().as_millis());
    let status = match &res {
        Ok(o) => o.status.as_str(),
        Err(e) if is_inconclusive(e) => "inconclusive",
        Err(_) => "error",
    };
    out.write_manifest(settings.command, status, settings.pairs(), &timings)?;
    res
}

fn dispatch(s: &Settings, out: &mut Output) -> Result<Outcome> {
    match s.command {
        "capacities" => capacities(s, out),
        "volume" => volume(s, out),
        "reeb" => reeb(s, out),
        "lift" => lift(s, out),
        "genfun" => genfun(s, out),
        "counterexample" => counterexample(s, out),
        "spectral" => spectral(s, out),
        "bm" => bm(s, out),
        "anosov-katok" => anosov_katok(s, out),
        "selftest" => selftest(s, out),
        other => bail!("unknown command '{other}'"),
    }
}

fn usize_key(s: &Settings, k: &str, d: i64) -> Result<usize> {
    Ok(s.int_or(k, d)? as usize)
}

fn pair(s: &Settings, k: &str) -> Result<Option<(Exact, Exact)>> {
    match s.exacts(k)? {
        None => Ok(None),
        Some(v) if v.len() == 2 => Ok(Some((v[0], v[1]))),
        Some(v) => bail!("key '{k}': expected 2 values, got {}", v.len()),
    }
}

fn capacities(s: &Settings, out: &mut Output) -> Result<Outcome> {
    let k_max = usize_key(s, "k_max", 6)?;
    let ech = match s.raw("kind") {
        Some("ech") => true,
        Some("ehgh") | None => false,
        Some(o) => bail!("key 'kind': expected ehgh or ech, got '{o}'"),
    };
    let mut summary = Vec::new();
    let ell = s.exacts("ellipsoid")?;
    let poly = pair(s, "polydisk")?;
    if ell.is_none() && poly.is_none() {
        bail!("key 'ellipsoid' or 'polydisk' is required");
    }
    if let Some(a) = ell {
        let table = if ech {
            if a.len() != 2 {
                bail!("key 'ellipsoid': ECH capacities need 2 parameters");
            }
            let mut t = ech_capacities_ellipsoid(a[0], a[1], k_max)?;
            t.values.retain(|(k, _)| *k >= 1);
            t
        } else {
            ehgh_table(&Ellipsoid::new(a).map_err(|e| anyhow!("key 'ellipsoid': {e}"))?, k_max)?
        };
        out.write_table("capacities_ellipsoid.csv", &table)?;
        let vals: Vec<String> = table.values.iter().map(|v| v.1.to_string()).collect();
        summary.push(format!("{} {:?}: {}", table.domain, table.kind, vals.join(", ")));
    }
    if let Some((a, b)) = poly {
        let table = if ech {
            let mut t = ech_capacities_polydisk(a, b, k_max)?;
            t.values.retain(|(k, _)| *k >= 1);
            t
        } else {
            polydisk_ehgh_table(&Polydisk::new(a, b).map_err(|e| anyhow!("key 'polydisk': {e}"))?, k_max)?
        };
        out.write_table("capacities_polydisk.csv", &table)?;
        let vals: Vec<String> = table.values.iter().map(|v| v.1.to_string()).collect();
        summary.push(format!("{} {:?}: {}", table.domain, table.kind, vals.join(", ")));
    }
    ok(summary)
}

fn sphere_grid(s: &Settings, d: i64) -> Result<SphereGrid> {
    let n = usize_key(s, "grid", d)?;
    Ok(SphereGrid::new(n, (6 * n).div_ceil(5), (6 * n).div_ceil(5)))
}

fn volume(s: &Settings, out: &mut Output) -> Result<Outcome> {
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    if let Some(a) = s.exacts("ellipsoid")? {
        let e = Ellipsoid::new(a).map_err(|e| anyhow!("key 'ellipsoid': {e}"))?;
        let v = e.volume_exact();
        summary.push(format!("vol {e} = {v}"));
        rows.push(vec![e.to_string(), v.value.numer().to_string(), v.value.denom().to_string(), v.pi_power.to_string(), num(v.to_f64())]);
    }
    if let Some((a, b)) = pair(s, "polydisk")? {
        let p = Polydisk::new(a, b).map_err(|e| anyhow!("key 'polydisk': {e}"))?;
        let v = p.volume_exact();
        summary.push(format!("vol {p} = {v}"));
        rows.push(vec![p.to_string(), v.value.numer().to_string(), v.value.denom().to_string(), v.pi_power.to_string(), num(v.to_f64())]);
    }
    if !rows.is_empty() {
        out.write_csv("volume.csv", &["domain", "value_numerator", "value_denominator", "pi_power", "value"], &rows)?;
    }
    if let Some(n) = s.int("bumps")? {
        let mut rng = ChaCha8Rng::seed_from_u64(s.int_or("seed", 7)? as u64);
        let mut hs = Vec::new();
        for _ in 0..n {
            hs.push(suite::random_admissible(&mut rng));
        }
        let grid = sphere_grid(s, 40)?;
        let samples: Vec<suite::VolumeSample> = hs
            .iter()
            .map(|h| suite::lifted_volume_sample(h.clone(), grid.clone()))
            .collect::<Result<_>>()?;
        let rows: Vec<Vec<String>> = samples
            .iter()
            .enumerate()
            .map(|(i, v)| vec![i.to_string(), num(v.calabi), num(v.formula), num(v.quadrature), num(v.relative_error)])
            .collect();
        out.write_csv("lifted_volume.csv", &["instance", "calabi", "formula", "quadrature", "relative_error"], &rows)?;
        out.write_json("hamiltonians.json", &hs)?;
        let worst = samples.iter().map(|v| v.relative_error).fold(0.0, f64::max);
        summary.push(format!("{n} lifted domains: worst relative volume error {worst:.2e}"));
    }
    if summary.is_empty() {
        bail!("key 'ellipsoid', 'polydisk' or 'bumps' is required");
    }
    ok(summary)
}

fn reeb(s: &Settings, out: &mut Output) -> Result<Outcome> {
    let (a, b) = pair(s, "ellipsoid")?.ok_or_else(|| anyhow!("key 'ellipsoid' is required"))?;
    let amp = ellipsoid_amplitude_exact(a, b)?;
    let search = SystoleSearch { integrator: IntegratorConfig::adaptive(s.float("tol")?), ..Default::default() };
    let rep = systolic_ratio(&amp, &search)?;
    out.write_json("reeb.json", &rep)?;
    ok(vec![format!("epsilon_{{{a},{b}}}: systole {:.12}, volume {:.12}, ratio {:.12}", rep.systole, rep.contact_volume, rep.ratio)])
}

#[derive(Serialize)]
struct LiftReport {
    height: f64,
    rho_support: f64,
    action_formula: f64,
    action_integrated: f64,
    calabi: f64,
    volume_formula: f64,
    volume_quadrature: f64,
}

fn lift(s: &Settings, out: &mut Output) -> Result<Outcome> {
    let (height, rho) = (s.float("height")?, s.float("rho_support")?);
    if rho >= 1.0 {
        bail!("key 'rho_support': must be below 1");
    }
    let h: Arc<dyn TimePeriodicHamiltonian> = Arc::new(Radial(BumpProfile { height, rho_support: rho }));
    let c = characteristic_from_periodic_point(h.clone(), &[0.0, 0.0], 1, &IntegratorConfig::adaptive(s.float("tol")?))?;
    let v = lifted_volume(h, sphere_grid(s, 32)?)?;
    let rep = LiftReport {
        height,
        rho_support: rho,
        action_formula: c.action_formula,
        action_integrated: c.action_integrated,
        calabi: v.calabi,
        volume_formula: v.formula_value,
        volume_quadrature: v.quadrature_value,
    };
    out.write_json("lift.json", &rep)?;
    ok(vec![
        format!("characteristic through 0: formula {:.10}, integrated {:.10}", rep.action_formula, rep.action_integrated),
        format!("volume: pi^2/2 + Cal = {:.10}, quadrature {:.10}", rep.volume_formula, rep.volume_quadrature),
    ])
}

fn genfun(s: &Settings, out: &mut Output) -> Result<Outcome> {
    let r = suite::genfun_report(s.float("theta")?, usize_key(s, "grid", 36)?, s.float("radius")?, s.float("flatten_eps")?)?;
    out.write_json("genfun.json", &r)?;
    let status = if r.flatten.passed { Status::Ok } else { Status::Inconclusive };
    Ok(Outcome {
        status,
        summary: vec![
            format!("rotation residual {:.2e} on {} points", r.rotation_residual, r.grid_points),
            format!("Hamilton-Jacobi residual {:.2e}", r.hj_residual),
            format!("flattening checks passed: {}", r.flatten.passed),
        ],
    })
}

fn counterexample(s: &Settings, out: &mut Output) -> Result<Outcome> {
    let cfg = CounterexampleConfig {
        rho_supp: s.float("rho_supp")?,
        u_radius: s.float("u_radius")?,
        census_grid: usize_key(s, "census_grid", 120)?,
        census_k_max: usize_key(s, "k_max", 8)?,
        lambdas: s.range("lambda_grid")?,
        ..Default::default()
    };
    let run = suite::counterexample_run(&cfg).map_err(|e| anyhow!("key 'lambda_grid' or Hamiltonian settings: {e}"))?;
    let rows: Vec<Vec<String>> = run
        .rows
        .iter()
        .map(|r| {
            vec![
                num(r.report.lambda),
                num(r.report.systole),
                num(r.integrated_systole),
                num(r.report.calabi),
                num(r.report.volume),
                num(r.report.ball_capacity_bound),
                r.report.strict.to_string(),
            ]
        })
        .collect();
    out.write_csv(
        "counterexample.csv",
        &["lambda", "systole", "systole_integrated", "calabi", "volume", "ball_capacity_bound", "strict"],
        &rows,
    )?;
    out.write_json("counterexample.json", &serde_json::json!({
        "cal_h": run.cal_h,
        "lambda_max": run.lambda_max,
        "census_min_action": run.census_min_action,
        "rows": run.rows,
    }))?;
    let all = run.rows.iter().all(|r| r.report.strict);
    let mut summary = vec![format!("Cal(H) = {:.6}, validated lambda range (0, {:.6}]", run.cal_h, run.lambda_max)];
    for r in &run.rows {
        summary.push(format!(
            "lambda {:.4}: systole {:.10}, sqrt(2 vol) {:.10}, strict {}",
            r.report.lambda, r.report.systole, r.report.ball_capacity_bound, r.report.strict
        ));
    }
    Ok(Outcome { status: if all { Status::Ok } else { Status::Inconclusive }, summary })
}

fn spectral(s: &Settings, out: &mut Output) -> Result<Outcome> {
    let (a, b) = pair(s, "ellipsoid")?.ok_or_else(|| anyhow!("key 'ellipsoid' is required"))?;
    let (c0, c1) = spectral_c0_c1_exact(&a, &b, NEAR_ZOLL)?;
    out.write_csv(
        "spectral.csv",
        &["k", "value_numerator", "value_denominator", "pi_power"],
        &[exact_row(0, &c0), exact_row(1, &c1)],
    )?;
    ok(vec![format!("c_0 = {c0}, c_1 = {c1}")])
}

fn bm(s: &Settings, out: &mut Output) -> Result<Outcome> {
    let (a, b) = pair(s, "ellipsoid")?.ok_or_else(|| anyhow!("key 'ellipsoid' is required"))?;
    let amp = ellipsoid_amplitude_exact(a, b)?;
    let search = SystoleSearch::default();
    let rep = bm_distance_near_zoll(&amp, &search, usize_key(s, "steps", 4)?)?;
    out.write_json("bm.json", &serde_json::json!({
        "t_min": rep.t_min,
        "t_max": rep.t_max,
        "distance": rep.distance,
        "oscillation": rep.oscillation,
        "geodesic_length": rep.geodesic.length(),
    }))?;
    let mut rows = Vec::new();
    for (j, t) in rep.geodesic.times.iter().enumerate() {
        for (node, g) in rep.geodesic.amplitudes(j).iter().enumerate() {
            rows.push(vec![j.to_string(), num(*t), node.to_string(), num(*g)]);
        }
    }
    out.write_csv("geodesic.csv", &["step", "t", "node", "amplitude"], &rows)?;
    ok(vec![format!("d = log({:.12}/{:.12}) = {:.12}", rep.t_max, rep.t_min, rep.distance)])
}

#[derive(Serialize)]
struct SchemeSummary<'a> {
    stages: &'a [StageReport],
    certificate_max_gap: f64,
    certificate_passed: bool,
    uncovered_centers: usize,
}

fn anosov_katok(s: &Settings, out: &mut Output) -> Result<Outcome> {
    let stages = usize_key(s, "stages", 3)?;
    let eps = s.float("eps")?;
    let cfg = SchemeConfig { centers: usize_key(s, "centers", 500)?, ..Default::default() };
    let state = match s.raw("checkpoint") {
        Some(p) => load_checkpoint(Path::new(p)).map_err(|e| anyhow!("key 'checkpoint': {e:#}"))?,
        None => ConjugationState::initial(),
    };
    let (state, reports) = resume_scheme(state, stages, eps, &cfg)?;
    out.write_json("state.json", &state)?;
    let cert = torus_orbit_certificate(&state, &cfg, eps)?;
    let uncovered = cert.covered.iter().filter(|c| !**c).count();
    out.write_json("anosov_katok.json", &SchemeSummary {
        stages: &reports,
        certificate_max_gap: cert.max_gap,
        certificate_passed: cert.passed(),
        uncovered_centers: uncovered,
    })?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let ratio = r.params.0.try_div(&r.params.1).map(|q| q.value).unwrap_or_default();
            vec![
                r.stage.to_string(),
                ratio.numer().to_string(),
                ratio.denom().to_string(),
                r.multiplier.to_string(),
                num(r.form_deviation),
                num(r.conformal_deviation),
                num(r.c0_distance),
                num(r.budget),
                num(r.torus_gap),
                num(r.density_max_gap),
            ]
        })
        .collect();
    out.write_csv(
        "stages.csv",
        &["stage", "ratio_numerator", "ratio_denominator", "multiplier", "form_deviation", "conformal_deviation", "c0_distance", "budget", "torus_gap", "density_gap"],
        &rows,
    )?;
    let mut summary: Vec<String> = reports
        .iter()
        .map(|r| format!("stage {}: a/b = {}, C0 distance {:.2e} <= {}, density gap {:.4}", r.stage, r.params.0.try_div(&r.params.1).map(|q| q.to_string()).unwrap_or_default(), r.c0_distance, r.budget, r.density_max_gap))
        .collect();
    summary.push(format!("certificate: {} of {} centers covered at eps = {eps}", cert.covered.len() - uncovered, cert.covered.len()));
    Ok(Outcome { status: if cert.passed() { Status::Ok } else { Status::Inconclusive }, summary })
}

pub fn load_checkpoint(path: &Path) -> Result<ConjugationState> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn selftest(s: &Settings, out: &mut Output) -> Result<Outcome> {
    let seed = s.int_or("seed", 7)? as u64;
    let results = suite::run_all(seed);
    let rows: Vec<Vec<String>> = results.iter().map(|c| vec![c.id.to_string(), c.name.to_string(), c.passed.to_string(), c.detail.clone()]).collect();
    out.write_csv("selftest.csv", &["criterion", "name", "passed", "detail"], &rows)?;
    let all = results.iter().all(|c| c.passed);
    Ok(Outcome { status: if all { Status::Ok } else { Status::Inconclusive }, summary: results.iter().map(|c| c.line()).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(cmd: &str, v: &[(&str, &str)]) -> Settings {
        let p: Vec<(String, String)> = v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        Settings::new(cmd, &p).unwrap()
    }

    #[test]
    fn capacities_csv() {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&settings("capacities", &[("ellipsoid", "1,2"), ("k_max", "6")]), dir.path()).unwrap();
        assert_eq!(o.status, Status::Ok);
        let text = fs::read_to_string(dir.path().join("capacities_ellipsoid.csv")).unwrap();
        let vals: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
        assert_eq!(vals, ["1", "2", "2", "3", "4", "4"]);
    }

    #[test]
    fn spectral_and_volume() {
        let dir = tempfile::tempdir().unwrap();
        run(&settings("spectral", &[("ellipsoid", "1.02pi,0.98pi")]), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("spectral.csv")).unwrap();
        assert_eq!(text, "k,value_numerator,value_denominator,pi_power\n0,49,50,1\n1,51,50,1\n");
        run(&settings("volume", &[("ellipsoid", "1,2")]), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("volume.csv")).unwrap();
        assert!(text.contains("\"E(1,2)\",1,1,0,1.0"), "{text}");
    }

    #[test]
    fn missing_domain_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let e = run(&settings("capacities", &[]), dir.path()).err().unwrap();
        assert!(!is_inconclusive(&e));
        assert!(e.to_string().contains("'ellipsoid'"));
        let m = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert!(m.contains("\"status\": \"error\""));
    }

    #[test]
    fn inconclusive_errors_are_recognised() {
        let e: anyhow::Error = zollab_core::Error::Inconclusive("x".into()).into();
        assert!(is_inconclusive(&e));
        let e: anyhow::Error = zollab_core::Error::Singular.into();
        assert!(!is_inconclusive(&e));
    }
}
