//! Runners for the single-model scenarios.

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;
use serde::Serialize;

use super::config::{InitialCondition, RunConfig};
use super::output::{write_json, CsvSink, Gate, Provenance, RunSummary};
use super::presets::{bump, planar, preset_axis, preset_velocities, stratified_positions, total_mass};
use crate::error::Result;
use crate::gci::{galerkin_chi, gci_residual, solve_chi, solve_chi_converged, ChiProfile, ChiSolution};
use crate::kinetic::{derive_seed, moments, step_with, CellDecomposition, ParticleEnsemble, StepScheme};
use crate::soh::{linear_wave_speeds, soh_step, SohCoefficients, SohState};
use crate::spherefp::{evolve_observed, stable_dt, stationary_l, AngularDensity};
use crate::spherequad::{cached_theta_rule, sphere_grid};
use crate::vmf::{lambda_of_l, lower_bracket, mu_of_l, solve_concentration, ModelParams};

/// Order parameter by direct quadrature of the VMF density.
fn quadrature_order(l: f64, d: usize) -> Result<f64> {
    let rule = cached_theta_rule(d, 200)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (c, w) in rule.iter() {
        let e = (l * (c - 1.0)).exp() * w;
        num += c * e;
        den += e;
    }
    Ok(num / den)
}

pub fn run_coeffs(cfg: &RunConfig) -> Result<RunSummary> {
    let prov = Provenance::new(cfg);
    let m = &cfg.model;
    let d = m.d;
    let mut gates = Vec::new();
    let mut csv = CsvSink::create(
        &cfg.output,
        "coeffs.csv",
        &prov,
        &["sigma_over_r2", "l_star", "lambda_l_star", "order_parameter", "mean_speed", "k_d"],
    )?;
    let mut worst_fp: f64 = 0.0;
    let mut below_bracket = 0usize;
    for &s in &cfg.sweep {
        let params = ModelParams::new(d, m.r, m.beta, s * m.r * m.r, m.epsilons[0])?;
        let l = solve_concentration(&params)?;
        let lam = lambda_of_l(l, d)?;
        let kd = if l > 0.0 {
            Some(solve_chi_converged(d, l, params.sigma, m.r, 1e-10)?.kd())
        } else {
            None
        };
        if l > 0.0 {
            worst_fp = worst_fp.max((lam - s * l).abs());
            if l < lower_bracket(&params) {
                below_bracket += 1;
            }
        }
        csv.raw_row(&[
            fmt(s),
            fmt(l),
            fmt(lam),
            fmt(quadrature_order(l, d)?),
            fmt(m.r * lam),
            kd.map(fmt).unwrap_or_default(),
        ])?;
    }
    let mut files = vec![csv.finish()?];
    gates.push(Gate::at_most("fixed_point_residual", worst_fp, 1e-10));
    gates.push(Gate::at_most("l_star_below_mu_bracket", below_bracket as f64, 0.0));

    let s0 = m.sigma / (m.r * m.r);
    let mut curve = CsvSink::create(&cfg.output, "lambda_curve.csv", &prov, &["l", "lambda", "mu", "chord"])?;
    for i in 0..=400 {
        let l = 0.05 * i as f64;
        curve.row(&[l, lambda_of_l(l, d)?, mu_of_l(l, d), s0 * l])?;
    }
    files.push(curve.finish()?);
    Ok(RunSummary { scenario: "coeffs".into(), gates, files })
}

fn fmt(v: f64) -> String {
    super::output::fmt_f64(v)
}

#[derive(Serialize)]
struct GciReport {
    l_star: f64,
    k_d: f64,
    resolution: usize,
    weak_residual: f64,
    residual: Option<f64>,
    #[serde(rename = "J_value")]
    j_value: f64,
}

pub fn run_gci(cfg: &RunConfig) -> Result<RunSummary> {
    let prov = Provenance::new(cfg);
    let p = cfg.model.primary()?;
    let l = solve_concentration(&p)?;
    let res = cfg.discretization.resolution;
    let sol: ChiSolution = match res {
        0 => solve_chi_converged(p.d, l, p.sigma, p.r, 1e-10)?,
        n if p.d == 2 => solve_chi(p.d, l, p.sigma, p.r, n)?,
        n => galerkin_chi(p.d, l, p.sigma, p.r, n)?,
    };
    let residual = match p.d {
        2 => Some(gci_residual(&sol, &sphere_grid(2, p.r, 64)?)?),
        3 => Some(gci_residual(&sol, &sphere_grid(3, p.r, 32)?)?),
        _ => None,
    };
    let mut csv = CsvSink::create(&cfg.output, "chi.csv", &prov, &["c", "chi"])?;
    for i in 0..=400 {
        let c = -1.0 + i as f64 / 200.0;
        csv.row(&[c, sol.chi(c)])?;
    }
    let mut files = vec![csv.finish()?];
    let report = GciReport {
        l_star: l,
        k_d: sol.kd(),
        resolution: sol.resolution(),
        weak_residual: sol.weak_residual(),
        residual,
        j_value: sol.j_value(),
    };
    files.push(write_json(&cfg.output, "gci.json", &prov, &report)?);
    let mut gates = vec![Gate::at_most("weak_residual", sol.weak_residual(), 1e-8)];
    if let Some(r) = residual {
        gates.push(Gate::at_most("gci_pde_residual", r, 1e-6));
    }
    Ok(RunSummary { scenario: "gci".into(), gates, files })
}

pub fn run_kinetic(cfg: &RunConfig) -> Result<RunSummary> {
    let prov = Provenance::new(cfg);
    let m = &cfg.model;
    let disc = &cfg.discretization;
    let params = m.primary()?;
    let (d, dx, n) = (m.d, disc.spatial_dim, disc.particles);
    let length = disc.length;
    let l_star = solve_concentration(&params)?;
    let mut rng = Pcg64Mcg::seed_from_u64(derive_seed(cfg.seed, 0));

    let (positions, velocities, mass) = match &cfg.initial {
        InitialCondition::GaussianBump { .. } if dx >= 1 => {
            let rho = |x: f64| bump(&cfg.initial, length, x).0;
            let xs = stratified_positions(rho, length, n, &mut rng);
            let sampler = crate::vmf::CosineSampler::new(l_star, d)?;
            let mut pos = Vec::with_capacity(n * dx);
            let mut vel = Vec::with_capacity(n * d);
            for &x in &xs {
                pos.push(x);
                if dx == 2 {
                    pos.push(rand::Rng::random::<f64>(&mut rng) * length);
                }
                vel.extend(sampler.sample(&mut rng, &planar(d, bump(&cfg.initial, length, x).1), m.r));
            }
            let mass = total_mass(rho, length) * length.powi(dx as i32 - 1);
            (pos, vel, mass)
        }
        init => {
            let pos: Vec<f64> = (0..n * dx).map(|_| rand::Rng::random::<f64>(&mut rng) * length).collect();
            let vel = preset_velocities(init, d, m.r, l_star, n, &mut rng)?;
            (pos, vel, if dx == 0 { 1.0 } else { length.powi(dx as i32) })
        }
    };
    let mut ens = ParticleEnsemble::new(d, dx, length, positions, velocities, mass, derive_seed(cfg.seed, 1))?;
    let mut cells = if dx == 0 {
        CellDecomposition::new(0, length, 1)?
    } else {
        CellDecomposition::for_ensemble(&ens, disc.cells)?
    };
    let dt = disc.dt.unwrap();
    let steps = (disc.t_final / dt).ceil() as usize;

    let mut header: Vec<String> = vec!["t".into(), "cell".into()];
    header.extend((0..dx).map(|a| format!("x{a}")));
    header.push("rho".into());
    header.extend((0..d).map(|i| format!("u{i}")));
    header.extend((0..d).map(|i| format!("omega{i}")));
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut mom_csv = CsvSink::create(&cfg.output, "kinetic_moments.csv", &prov, &hdr)?;
    let mut hist_csv = CsvSink::create(
        &cfg.output,
        "speed_hist.csv",
        &prov,
        &["t", "speed_lo", "speed_hi", "count", "speed_std"],
    )?;
    let bins = disc.histogram_bins;
    let mut worst_mass: f64 = 0.0;
    let mut emit = |t: f64, ens: &ParticleEnsemble, cells: &mut CellDecomposition| -> Result<()> {
        cells.assign(ens);
        let mom = moments(ens, cells, m.r, bins);
        let total: f64 = mom.iter().map(|c| c.rho).sum::<f64>() * cells.cell_volume();
        worst_mass = worst_mass.max((total - ens.total_mass()).abs() / ens.total_mass());
        for (k, c) in mom.iter().enumerate() {
            let mut row = vec![t, k as f64];
            row.extend(cells.center(k));
            row.push(c.rho);
            row.extend(&c.u);
            row.extend(&c.omega);
            mom_csv.row(&row)?;
        }
        let speeds = ens.speeds();
        let std = (speeds.iter().map(|s| (s - m.r).powi(2)).sum::<f64>() / speeds.len() as f64).sqrt();
        let width = 2.0 * m.r / bins as f64;
        for b in 0..bins {
            let count: u64 = mom.iter().map(|c| c.speed_hist[b]).sum();
            hist_csv.row(&[t, b as f64 * width, (b + 1) as f64 * width, count as f64, std])?;
        }
        Ok(())
    };
    emit(0.0, &ens, &mut cells)?;
    for i in 1..=steps {
        step_with(&mut ens, &params, dt, &mut cells, StepScheme { noise: disc.noise, coupling: disc.coupling })?;
        if i % disc.output_every == 0 || i == steps {
            emit(i as f64 * dt, &ens, &mut cells)?;
        }
    }
    let files = vec![mom_csv.finish()?, hist_csv.finish()?];
    let finite = ens.velocities().iter().chain(ens.positions()).all(|x| x.is_finite());
    Ok(RunSummary {
        scenario: "kinetic".into(),
        gates: vec![Gate::at_most("relative_mass_error", worst_mass, 1e-12), Gate::flag("finite_state", finite)],
        files,
    })
}

pub fn run_spherefp(cfg: &RunConfig) -> Result<RunSummary> {
    let prov = Provenance::new(cfg);
    let p = cfg.model.primary()?;
    let disc = &cfg.discretization;
    let (d, r, k) = (p.d, p.r, disc.modes);
    let l_star = solve_concentration(&p)?;
    let f0 = match &cfg.initial {
        InitialCondition::Vmf { l, .. } => {
            let axis = preset_axis(&cfg.initial, d);
            let theta0 = if d == 2 { axis[1].atan2(axis[0]) } else { 0.0 };
            AngularDensity::vmf(d, r, k, l.unwrap_or(l_star), theta0, 1.0)?
        }
        InitialCondition::BiasedAngular { bias } => {
            let b = *bias;
            let f = if d == 2 {
                AngularDensity::from_function(d, r, k, |t| 1.0 + b * t.cos())?
            } else {
                AngularDensity::from_function(d, r, k, |c| 1.0 + b * c)?
            };
            let scale = 1.0 / f.mass();
            AngularDensity::from_function(d, r, k, |x| scale * (1.0 + b * if d == 2 { x.cos() } else { x }))?
        }
        _ => AngularDensity::uniform(d, r, k, 1.0)?,
    };
    let dt = disc.dt.unwrap();
    let steps = (disc.t_final / dt).ceil() as usize;
    let mut series = CsvSink::create(&cfg.output, "spherefp_series.csv", &prov, &["t", "order_parameter", "l_hat"])?;
    let mut err = None;
    let fin = evolve_observed(&f0, &p, dt, steps, disc.output_every, |t, f| {
        if err.is_none() {
            if let Err(e) = series.row(&[t, f.order_parameter(), stationary_l(f, &p)]) {
                err = Some(e);
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    if steps % disc.output_every != 0 {
        series.row(&[steps as f64 * dt, fin.order_parameter(), stationary_l(&fin, &p)])?;
    }
    let mut files = vec![series.finish()?];
    let mut fcsv = CsvSink::create(
        &cfg.output,
        "spherefp_final.csv",
        &prov,
        &[if d == 2 { "theta" } else { "c" }, "f"],
    )?;
    for (x, v) in fin.samples(256) {
        fcsv.row(&[x, v])?;
    }
    files.push(fcsv.finish()?);

    let peak = fin.samples(4 * (k + 1)).iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let mut gates = vec![
        Gate::at_most("relative_mass_drift", ((fin.mass() - f0.mass()) / f0.mass()).abs(), 1e-10),
        Gate::at_most("negativity", (-fin.min_value()).max(0.0) / peak, 1e-10),
        Gate::flag("step_within_bound", dt <= stable_dt(&fin, &p)),
    ];
    if let Some(tol) = cfg.gates.order_parameter_tol {
        let target = if l_star > 0.0 { lambda_of_l(l_star, d)? } else { 0.0 };
        gates.push(Gate::at_most("order_parameter_error", (fin.order_parameter() - target).abs(), tol));
    }
    Ok(RunSummary { scenario: "spherefp".into(), gates, files })
}

pub fn run_soh(cfg: &RunConfig) -> Result<RunSummary> {
    let prov = Provenance::new(cfg);
    let p = cfg.model.primary()?;
    let disc = &cfg.discretization;
    let coeffs = SohCoefficients::from_model(&p)?;
    let (d, dx, length) = (p.d, disc.spatial_dim, disc.length);
    let axis = preset_axis(&cfg.initial, d);
    let s0 = SohState::from_fn(coeffs, dx, disc.cells, length, |x| match &cfg.initial {
        InitialCondition::GaussianBump { .. } => {
            let (r, a) = bump(&cfg.initial, length, x[0]);
            (r, planar(d, a))
        }
        _ => (1.0, axis.clone()),
    })?;
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((0..dx).map(|a| format!("x{a}")));
    header.push("rho".into());
    header.extend((0..d).map(|i| format!("omega{i}")));
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = CsvSink::create(&cfg.output, "soh_fields.csv", &prov, &hdr)?;
    let mut emit = |s: &SohState| -> Result<()> {
        for k in 0..s.cell_count() {
            let mut row = vec![s.time()];
            row.extend(s.center(k));
            row.push(s.rho()[k]);
            row.extend(s.omega(k));
            csv.row(&row)?;
        }
        Ok(())
    };
    emit(&s0)?;
    let dt = s0.stable_dt(disc.cfl);
    let mut s = s0.clone();
    let mut worst_norm = s.orientation_defect();
    let mut i = 0;
    while s.time() < disc.t_final * (1.0 - 1e-14) {
        s = soh_step(&s, dt.min(disc.t_final - s.time()))?;
        worst_norm = worst_norm.max(s.orientation_defect());
        i += 1;
        if i % disc.output_every == 0 || s.time() >= disc.t_final * (1.0 - 1e-14) {
            emit(&s)?;
        }
    }
    let mut files = vec![csv.finish()?];
    let mut waves = CsvSink::create(&cfg.output, "wave_speeds.csv", &prov, &["phi0", "re", "im", "is_real"])?;
    for j in 0..=32 {
        let phi = std::f64::consts::PI * j as f64 / 32.0;
        for w in linear_wave_speeds(1.0, &planar(d, phi), &coeffs)? {
            waves.row(&[phi, w.re, w.im, w.is_real as u8 as f64])?;
        }
    }
    files.push(waves.finish()?);
    Ok(RunSummary {
        scenario: "soh".into(),
        gates: vec![
            Gate::at_most("relative_mass_drift", ((s.mass() - s0.mass()) / s0.mass()).abs(), 1e-12),
            Gate::at_most("orientation_norm_defect", worst_norm, 1e-12),
        ],
        files,
    })
}
