use std::sync::Arc;

use anyhow::{anyhow, Result};
use pesin_lab::dynamics::system_file::{resolve_system, LoadedSystem};
use pesin_lab::dynamics::{flow, log_det, tangent_flow, Domain, VectorField, BUILTIN_NAMES};
use pesin_lab::entropy::{
    flow_entropy, pesin_report, refined_entropy, suspension_entropy, BaseMapSystem,
    EntropyEstimate, PartitionGrid, SuspensionMap,
};
use pesin_lab::hamiltonian::{integrated_level_entropy, LevelConfig};
use pesin_lab::lyapunov::{
    finite_n_estimator, integrated_exponent, pairing_check, pairing_residual, spectrum,
};
use pesin_lab::poincare::domination_check;
use pesin_lab::sampling::{derive_seed, substream};
use pesin_lab::suspension::{
    base_from_name, expansivity_probe, lift_measure_sample, suspend, BaseMap, Ceiling,
};
use pesin_lab::Error;
use serde_json::{json, Value};

use crate::config::{parse_levels, ExperimentConfig};
use crate::output::{num, nums, Report, Table};
use crate::UsageError;

// seed tags, so that each command's random draws are independent
const TAG_START: u64 = 1;
const TAG_LIFT: u64 = 2;
const TAG_ENTROPY: u64 = 3;
const TAG_PROBE: u64 = 4;
const TAG_FINITE_N: u64 = 100;

fn load(cfg: &ExperimentConfig) -> Result<LoadedSystem> {
    let name = cfg
        .system
        .as_deref()
        .ok_or_else(|| anyhow!(UsageError("--system is required".into())))?;
    Ok(resolve_system(name)?)
}

fn start_point(
    cfg: &ExperimentConfig,
    field: &dyn VectorField,
    given: &Option<Vec<f64>>,
) -> Result<Vec<f64>> {
    match given {
        Some(x) if x.len() != field.dim() => Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: x.len(),
        }
        .into()),
        Some(x) => Ok(x.clone()),
        None => Ok(field
            .domain()
            .sample_uniform(&mut substream(derive_seed(cfg.seed, TAG_START), 0))),
    }
}

fn domain_json(d: &Domain) -> Value {
    serde_json::to_value(d).expect("domain serializes")
}

fn diagnostics_table(name: &str, e: &EntropyEstimate) -> Table {
    let mut t = Table::new(name, &["n", "H_n", "H_n/n", "occupied_cells", "samples"]);
    for d in &e.diagnostics {
        t.push([
            d.n.to_string(),
            num(d.h_block),
            num(d.h_per_symbol),
            d.occupied_cells.to_string(),
            d.samples.to_string(),
        ]);
    }
    t
}

/// Grid used when none is configured: 16 cells along the fibres of a
/// mapping torus and `ceil(1 / tau)` along its time axis, 4 cells per
/// axis otherwise.
pub fn default_resolution(domain: &Domain, tau: f64) -> Vec<usize> {
    match &domain.glue {
        Some(g) => (0..domain.dim())
            .map(|i| {
                if i == g.axis {
                    ((domain.upper[i] - domain.lower[i]) / tau).ceil().max(1.0) as usize
                } else {
                    16
                }
            })
            .collect(),
        None => vec![4; domain.dim()],
    }
}

pub fn list_systems() -> Result<Report> {
    let systems: Vec<Value> = BUILTIN_NAMES
        .iter()
        .map(|name| {
            let sys = LoadedSystem::builtin(name).expect("built-ins resolve");
            json!({
                "name": name,
                "dim": sys.field.dim(),
                "divergence_free": sys.field.divergence_free(),
                "hamiltonian": sys.hamiltonian.is_some(),
                "domain": domain_json(sys.field.domain()),
            })
        })
        .collect();
    let mut t = Table::new(
        "systems",
        &["name", "dim", "divergence_free", "hamiltonian"],
    );
    for s in &systems {
        t.push([
            s["name"].as_str().unwrap_or_default().to_string(),
            s["dim"].to_string(),
            s["divergence_free"].to_string(),
            s["hamiltonian"].to_string(),
        ]);
    }
    let mut r = Report::new(json!({
        "systems": systems,
        "bases": ["cat", "identity", "rotation", "rotation:a,b"],
        "ceilings": ["const:c", "cosine:a,b"],
    }));
    r.tables.push(t);
    Ok(r)
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Report> {
    let sys = load(cfg)?;
    let f = sys.field.as_ref();
    let c = &cfg.simulate;
    let x0 = start_point(cfg, f, &c.point)?;
    let x0 = f.domain().canonical(&x0);
    let steps = c.record.max(1);
    let dt = c.t / steps as f64;
    let mut t = Table::new("trajectory", &[]);
    t.headers = std::iter::once("t".to_string())
        .chain((0..f.dim()).map(|i| format!("x{i}")))
        .collect();
    let mut x = x0.clone();
    t.push(std::iter::once(num(0.0)).chain(nums(&x)));
    for k in 1..=steps {
        x = flow(f, &x, dt, &cfg.integrator)?.position;
        t.push(std::iter::once(num(dt * k as f64)).chain(nums(&x)));
    }
    let seg = tangent_flow(f, &x0, c.t, &cfg.integrator)?;
    let (ld, _) = log_det(f, &x0, c.t, &cfg.integrator)?;
    let det = ld.exp();
    let expected = if f.divergence_free() {
        1.0
    } else {
        seg.divergence_integral.exp()
    };
    let moved = &seg.matrix * f.eval(&x0);
    let invariance = (moved - f.eval(&seg.end)).norm();
    let mut summary = json!({
        "system": f.name(),
        "dim": f.dim(),
        "start": x0,
        "end": x,
        "t": c.t,
        "det": det,
        "liouville_residual": (det - expected).abs(),
        "divergence_integral": seg.divergence_integral,
        "flow_direction_residual": invariance,
    });
    if let Some(h) = &sys.hamiltonian {
        summary["energy_start"] = json!(h.energy(&x0));
        summary["energy_drift"] = json!((h.energy(&x) - h.energy(&x0)).abs());
    }
    let mut r = Report::new(summary);
    r.tables.push(t);
    Ok(r)
}

pub fn lyapunov(cfg: &ExperimentConfig) -> Result<Report> {
    let sys = load(cfg)?;
    let f = sys.field.as_ref();
    let c = &cfg.lyapunov;
    let d = f.dim();
    let headers: Vec<String> = ["index".to_string()]
        .into_iter()
        .chain((0..d).map(|i| format!("x{i}")))
        .chain((1..=d).map(|i| format!("lambda_{i}")))
        .collect();
    let mut table = Table::new("lyapunov_samples", &[]);
    table.headers = headers;

    let mut summary = if let Some(x) = &c.point {
        let x = start_point(cfg, f, &Some(x.clone()))?;
        let s = spectrum(f, &x, c.t, c.renorm, &cfg.integrator)?;
        table.push(
            std::iter::once("0".to_string())
                .chain(nums(&x))
                .chain(nums(&s.exponents)),
        );
        json!({
            "system": f.name(),
            "mode": "single_orbit",
            "spectrum": s,
            "lambda_plus": s.lambda_plus(),
            "pairing_residual": pairing_check(&s),
        })
    } else {
        let est = integrated_exponent(f, c.samples, c.t, c.renorm, cfg.seed, &cfg.integrator)?;
        let mut mean = vec![0.0; d];
        let mut worst_pairing: f64 = 0.0;
        let mut worst_sum: f64 = 0.0;
        for s in &est.samples {
            table.push(
                std::iter::once(s.index.to_string())
                    .chain(nums(&s.point))
                    .chain(nums(&s.exponents)),
            );
            for (m, l) in mean.iter_mut().zip(&s.exponents) {
                *m += l / est.samples.len() as f64;
            }
            worst_pairing = worst_pairing.max(pairing_residual(&s.exponents));
            worst_sum = worst_sum.max(s.exponents.iter().sum::<f64>().abs());
        }
        json!({
            "system": f.name(),
            "mode": "monte_carlo",
            "integrated_exponent": {
                "value": est.value,
                "stderr": est.stderr,
                "n_samples": est.n_samples,
                "n_rejected": est.n_rejected,
                "t_horizon": est.t_horizon,
                "method": est.method,
            },
            "mean_spectrum": mean,
            "max_pairing_residual": worst_pairing,
            "max_residual_sum": worst_sum,
        })
    };

    let mut r = Report::new(Value::Null);
    if !c.finite_n.is_empty() {
        let mut t = Table::new(
            "finite_n",
            &["n", "value", "stderr", "n_samples", "n_rejected"],
        );
        let mut rows = Vec::new();
        for &n in &c.finite_n {
            let seed = derive_seed(cfg.seed, TAG_FINITE_N + n as u64);
            let e = finite_n_estimator(f, n, c.finite_n_samples, seed, &cfg.integrator)?;
            t.push([
                n.to_string(),
                num(e.value),
                num(e.stderr),
                e.n_samples.to_string(),
                e.n_rejected.to_string(),
            ]);
            rows.push(json!({"n": n, "value": e.value, "stderr": e.stderr,
                             "n_samples": e.n_samples, "n_rejected": e.n_rejected}));
        }
        summary["finite_n"] = Value::Array(rows);
        r.tables.push(t);
    }
    r.summary = summary;
    r.tables.insert(0, table);
    Ok(r)
}

pub fn dominate(cfg: &ExperimentConfig) -> Result<Report> {
    let sys = load(cfg)?;
    let f = sys.field.as_ref();
    let c = &cfg.dominate;
    let x = start_point(cfg, f, &c.point)?;
    let rep = domination_check(f, &x, c.ell, c.horizon, &cfg.integrator)?;
    let mut t = Table::new("domination", &["sample", "product", "degenerate"]);
    for (i, (p, s)) in rep.products.iter().zip(&rep.splitting).enumerate() {
        t.push([i.to_string(), num(*p), s.is_none().to_string()]);
    }
    let mut r = Report::new(json!({
        "system": f.name(),
        "start": f.domain().canonical(&x),
        "report": rep,
    }));
    r.tables.push(t);
    Ok(r)
}

fn suspension_grid(
    map: &SuspensionMap,
    base_res: usize,
    height_res: Option<usize>,
    tau: f64,
) -> Result<PartitionGrid> {
    let hr = height_res
        .unwrap_or_else(|| (map.system.ceiling.max_value() / tau).ceil().max(1.0) as usize);
    Ok(map.grid(base_res, hr)?)
}

pub fn suspend_cmd(cfg: &ExperimentConfig) -> Result<Report> {
    let c = &cfg.suspend;
    let base = base_from_name(&c.base)?;
    let sys = suspend(base.clone(), Ceiling::parse(&c.ceiling)?)?;
    let lifted = lift_measure_sample(&sys, derive_seed(cfg.seed, TAG_LIFT), c.lifted_samples);
    let mut lt = Table::new("lifted_samples", &[]);
    lt.headers = (0..base.dim())
        .map(|i| format!("x{i}"))
        .chain(["height".to_string()])
        .collect();
    for p in &lifted {
        lt.push(nums(&p.base_point).chain([num(p.height)]));
    }

    let base_entropy = c.base_entropy.or_else(|| base.known_entropy());
    let prediction = base_entropy.map(|h| sys.abramov_check(h));
    let map = SuspensionMap {
        system: &sys,
        tau: c.time_step,
    };
    let grid = suspension_grid(&map, c.base_resolution, c.height_resolution, c.time_step)?;
    let est = suspension_entropy(
        &sys,
        &grid,
        c.time_step,
        &c.entropy,
        derive_seed(cfg.seed, TAG_ENTROPY),
    )?;
    let expansivity = if base.invertible() {
        Some(expansivity_probe(
            base.as_ref(),
            c.delta,
            c.pairs,
            c.probe_horizon,
            derive_seed(cfg.seed, TAG_PROBE),
        )?)
    } else {
        None
    };
    let mut r = Report::new(json!({
        "base": base.name(),
        "ceiling": sys.ceiling,
        "integral": sys.integral,
        "integral_stderr": sys.integral_stderr,
        "is_flow": sys.is_flow(),
        "base_entropy": base_entropy,
        "abramov_prediction": prediction,
        "entropy_estimate": est,
        "relative_gap": prediction.map(|p| if p != 0.0 { (est.value - p) / p } else { est.value }),
        "expansivity": expansivity,
    }));
    r.tables.push(lt);
    r.tables
        .push(diagnostics_table("entropy_diagnostics", &est));
    Ok(r)
}

fn base_grid(base: &Arc<dyn BaseMap>, res: &Option<Vec<usize>>) -> Result<PartitionGrid> {
    let res = match res {
        Some(r) if r.len() == 1 => vec![r[0]; base.dim()],
        Some(r) => r.clone(),
        None => vec![16; base.dim()],
    };
    Ok(PartitionGrid::unit(res)?)
}

pub fn entropy_cmd(cfg: &ExperimentConfig) -> Result<Report> {
    let c = &cfg.entropy;
    let seed = derive_seed(cfg.seed, TAG_ENTROPY);
    let (subject, est) = match (&c.base, &c.ceiling) {
        (Some(b), ceiling) => {
            let base = base_from_name(b)?;
            match ceiling {
                Some(ceil) => {
                    let sys = suspend(base.clone(), Ceiling::parse(ceil)?)?;
                    let map = SuspensionMap {
                        system: &sys,
                        tau: c.time_step,
                    };
                    let grid = match &c.resolution {
                        Some(r) if r.len() == base.dim() + 1 => PartitionGrid::new(
                            vec![0.0; r.len()],
                            [vec![1.0; base.dim()], vec![sys.ceiling.max_value()]].concat(),
                            r.clone(),
                        )?,
                        Some(r) if r.len() == 1 => suspension_grid(&map, r[0], None, c.time_step)?,
                        Some(r) => {
                            return Err(Error::DimensionMismatch {
                                expected: base.dim() + 1,
                                got: r.len(),
                            }
                            .into())
                        }
                        None => suspension_grid(&map, 16, None, c.time_step)?,
                    };
                    let est = suspension_entropy(&sys, &grid, c.time_step, &c.options, seed)?;
                    (format!("suspension of {b} under {ceil}"), est)
                }
                None => {
                    let grid = base_grid(&base, &c.resolution)?;
                    let est =
                        refined_entropy(&BaseMapSystem(base.clone()), &grid, &c.options, seed)?;
                    (format!("map {b}"), est)
                }
            }
        }
        (None, Some(_)) => {
            return Err(anyhow!(UsageError("--ceiling needs --base".into())));
        }
        (None, None) => {
            let sys = load(cfg)?;
            let f = sys.field.as_ref();
            let res = c
                .resolution
                .clone()
                .unwrap_or_else(|| default_resolution(f.domain(), c.time_step));
            let grid = PartitionGrid::over(f.domain(), res)?;
            let est = flow_entropy(f, &grid, c.time_step, &c.options, seed, &cfg.integrator)?;
            (format!("flow {}", f.name()), est)
        }
    };
    let mut r = Report::new(json!({ "subject": subject, "estimate": est }));
    r.tables
        .push(diagnostics_table("entropy_diagnostics", &est));
    Ok(r)
}

pub fn pesin_check(cfg: &ExperimentConfig) -> Result<Report> {
    let sys = load(cfg)?;
    let f = sys.field.as_ref();
    let mut pc = cfg.pesin.clone();
    if pc.resolution.is_empty() {
        pc.resolution = default_resolution(f.domain(), pc.time_step);
    }
    let rep = pesin_report(f, &pc, cfg.seed, &cfg.integrator)?;
    let mut r = Report::new(json!({
        "system": f.name(),
        "h_est": rep.h_est,
        "lambda_est": rep.lambda_est,
        "difference": rep.difference,
        "combined_stderr": rep.combined_stderr,
        "bias_bound": rep.bias_bound,
        "tolerance": rep.tolerance,
        "status": if rep.violation { "VIOLATION" } else { "ok" },
        "resolution": pc.resolution,
        "entropy": rep.entropy,
        "exponent": {
            "value": rep.exponent.value,
            "stderr": rep.exponent.stderr,
            "n_samples": rep.exponent.n_samples,
            "n_rejected": rep.exponent.n_rejected,
            "t_horizon": rep.exponent.t_horizon,
        },
    }));
    r.violation = rep.violation;
    r.tables
        .push(diagnostics_table("entropy_diagnostics", &rep.entropy));
    Ok(r)
}

pub fn hamiltonian(cfg: &ExperimentConfig) -> Result<Report> {
    let c = &cfg.hamiltonian;
    let sys = match &c.h {
        Some(h) => match h.strip_prefix("builtin:") {
            Some(name) => LoadedSystem::builtin(name)?,
            None => resolve_system(h)?,
        },
        None => load(cfg)?,
    };
    let h = sys.hamiltonian.ok_or_else(|| {
        Error::Invalid(format!("{} is not a Hamiltonian system", sys.field.name()))
    })?;
    let levels = parse_levels(&c.levels)?;
    let lc = LevelConfig {
        n_samples: c.samples,
        t_horizon: c.t,
        renorm_interval: c.renorm,
        level: c.level.clone(),
    };
    let res = integrated_level_entropy(&h, &levels, &lc, cfg.seed, &cfg.integrator)?;
    let mut t = Table::new("levels", &["e", "lambda_plus", "stderr", "n_rejected"]);
    let mut rows = Vec::new();
    for l in &res.levels {
        t.push([
            num(l.energy),
            num(l.estimate.value),
            num(l.estimate.stderr),
            l.n_rejected.to_string(),
        ]);
        rows.push(json!({
            "e": l.energy,
            "lambda_plus": l.estimate.value,
            "stderr": l.estimate.stderr,
            "n_samples": l.estimate.n_samples,
            "n_rejected": l.n_rejected,
        }));
    }
    let mut r = Report::new(json!({
        "system": h.name(),
        "levels": rows,
        "integrated": { "value": res.value, "stderr": res.stderr },
        "quadrature": res.quadrature,
        "level_measure": "Newton projection of box-uniform seeds, weighted by 1/|grad H|",
    }));
    r.tables.push(t);
    Ok(r)
}
