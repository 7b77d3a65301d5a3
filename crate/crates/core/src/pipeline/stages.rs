//! Stage bodies. Every stage reads its inputs from files written by earlier
//! stages in the same run directory and returns the files it wrote.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{Exemplar, GainConfig, PipelineConfig, Stage};
use super::gain::{convex_hull_area, gain_factor, GainInputs};
use crate::dae::{extract_attribute, train_dae, Attribute, DaeSpec, DaeTrainConfig, DistilledDataset, DistilledRow};
use crate::eql::{
    learn_equation, lotka_volterra, magnetic_moment, parse_dictionary, van_der_pol, Atom, Dataset, EqlSpec, Func,
    LearnedEquation, SymbolicExpr,
};
use crate::error::{Error, Result};
use crate::exemplars::projectile::{time_step, G};
use crate::exemplars::{
    accel_objective, directivity_box_max, directivity_surrogate, gen_trajectory, max_height, mean_equilibration_time,
    projectile_dataset, spin_init, EquilibriumCriterion, DIRECTIVITY_COEFFS,
};
use crate::optimizer::{al_loop, read_jsonl, write_jsonl, AlConfig, AlRecord, SearchSpace};
use crate::vae::{train_vae, Vae, VaeSpec, VaeTrainConfig};

pub const VAE_FILE: &str = "vae.json";
pub const VAE_REPORT_FILE: &str = "vae_report.json";
pub const AL_FILE: &str = "al.jsonl";
pub const AL_REPORT_FILE: &str = "al_report.json";
pub const GAIN_FILE: &str = "gain.json";
pub const ISING_AL_FILE: &str = "ising_al.jsonl";
pub const ISING_DATA_FILE: &str = "ising_data.csv";
pub const DAE_FILE: &str = "dae.json";
pub const DAE_REPORT_FILE: &str = "dae_report.json";
pub const DISTILLED_FILE: &str = "distilled.csv";
pub const EQL_DATA_FILE: &str = "eql_data.csv";
pub const EQUATION_FILE: &str = "equation.txt";
pub const EQUATION_JSON_FILE: &str = "equation.json";
pub const METRICS_FILE: &str = "metrics.json";

/// Launch speeds and angles of the hand-picked realistic projectiles that
/// stand in for a human-designed campaign.
const HUMAN_SPEEDS: [f64; 5] = [2.0, 3.0, 4.0, 5.0, 6.0];
const HUMAN_ANGLES: [f64; 2] = [35.0, 55.0];

/// Speed range over which `H = c u^2` is fitted.
const U_FIT_RANGE: (f64, f64) = (1.0, 6.0);

/// One temperature of the Ising campaign, as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingAlRow {
    pub beta: f64,
    pub best_m_init: f64,
    /// Mean sweeps to equilibrium from the best start and from `M = 0`.
    pub t_sol_best: f64,
    pub t_sol_zero: f64,
    /// Long-run `<|M|>` of each chain.
    pub chain_m_abs: Vec<f64>,
    pub records: Vec<AlRecord>,
}

pub(crate) fn execute(stage: Stage, cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    use Exemplar::*;
    match (cfg.exemplar, stage) {
        (Projectile, Stage::Vae) => projectile_vae(cfg, dir),
        (Projectile, Stage::Al) => projectile_al(cfg, dir),
        (Projectile, Stage::Dae) => projectile_dae(cfg, dir),
        (Projectile, Stage::Eql) => projectile_eql(cfg, dir),
        (Ising, Stage::Al) => ising_al(cfg, dir),
        (Ising, Stage::Eql) => ising_eql(cfg, dir),
        (Surrogate, Stage::Al) => surrogate_al(cfg, dir),
        (Surrogate, Stage::Eql) => surrogate_eql(cfg, dir),
        (LotkaVolterra | VanDerPol | MagneticMoment, Stage::Eql) => benchmark_eql(cfg, dir),
        (e, s) => Err(Error::Config(format!("{e} has no {s} stage"))),
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<String> {
    fs::write(dir.join(name), serde_json::to_string_pretty(value)?)?;
    Ok(name.to_string())
}

fn need(dir: &Path, name: &str) -> Result<std::path::PathBuf> {
    let p = dir.join(name);
    if p.exists() {
        Ok(p)
    } else {
        Err(Error::InvalidArgument(format!("missing artifact {name}")))
    }
}

/// Records with timing removed, so artifacts depend on the seed only.
fn strip_timing(mut records: Vec<AlRecord>) -> Vec<AlRecord> {
    records.iter_mut().for_each(|r| r.elapsed_ms = 0.0);
    records
}

fn al_config(cfg: &PipelineConfig) -> Result<AlConfig> {
    Ok(AlConfig {
        n_init: cfg.al.n_init,
        budget: cfg.al.budget,
        acquisition: cfg.al.acq_kind()?,
        seed: cfg.stage_seed(Stage::Al),
        ..Default::default()
    })
}

fn pick(configured: Option<f64>, measured: Option<f64>, name: &str) -> Result<f64> {
    configured.or(measured).ok_or_else(|| Error::Config(format!("gain.{name} is required")))
}

fn write_gain(dir: &Path, g: &GainConfig, measured: [Option<f64>; 4]) -> Result<String> {
    let [n_auto, variety_human, variety_auto, value_auto] = measured;
    let inputs = GainInputs {
        n_human: pick(g.n_human, None, "n_human")?,
        n_auto: pick(g.n_auto, n_auto, "n_auto")?,
        variety_human: pick(g.variety_human, variety_human, "variety_human")?,
        variety_auto: pick(g.variety_auto, variety_auto, "variety_auto")?,
        value_human: pick(g.value_human, None, "value_human")?,
        value_auto: pick(g.value_auto, value_auto, "value_auto")?,
    };
    write_json(dir, GAIN_FILE, &gain_factor(&inputs)?)
}

fn projectile_rows() -> Vec<Vec<f64>> {
    projectile_dataset().into_iter().map(|t| t.y).collect()
}

fn human_projectiles() -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for &u in &HUMAN_SPEEDS {
        for &th in &HUMAN_ANGLES {
            out.push(gen_trajectory(u, th, 0.0, 0.0)?.y);
        }
    }
    Ok(out)
}

/// Accel objective, or NaN when the trajectory cannot be scored.
fn accel(y: &[f64]) -> f64 {
    accel_objective(y, time_step()).unwrap_or(f64::NAN)
}

fn projectile_vae(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let rows = projectile_rows();
    let v = &cfg.vae;
    let tc = VaeTrainConfig {
        epochs: v.epochs,
        batch_size: v.batch_size,
        lr: v.lr,
        seed: cfg.stage_seed(Stage::Vae),
        target_recon: None,
        recon_weight: v.recon_weight,
    };
    let (vae, report) = train_vae(VaeSpec::projectile(), &rows, &tc)?;
    vae.save(&dir.join(VAE_FILE))?;
    let means = vae.encode_means(&rows)?;
    let h = cfg.al.half_width;
    let in_box = means.iter().filter(|m| m.iter().all(|z| z.abs() <= h)).count();
    let summary = json!({
        "training_rows": rows.len(),
        "reconstruction_mse": vae.reconstruction_mse(&rows)?,
        "final_epoch": report.history.last(),
        "means_in_search_box": in_box,
    });
    Ok(vec![VAE_FILE.into(), write_json(dir, VAE_REPORT_FILE, &summary)?])
}

fn projectile_al(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let vae = Vae::load(&need(dir, VAE_FILE)?)?;
    let d = vae.latent_dim();
    let space = SearchSpace::cube(d, cfg.al.half_width);
    let run = al_loop(&mut |z| vae.decode(z).map_or(f64::NAN, |y| -accel(&y)), &space, &al_config(cfg)?)?;
    let records = strip_timing(run.records);
    write_jsonl(&dir.join(AL_FILE), &records)?;

    // Value: per-experiment realism relative to reconstructions of true
    // projectiles, capped at 1.
    let human = human_projectiles()?;
    let human_means = vae.encode_means(&human)?;
    let recon = vae.decode_batch(&human_means)?;
    let d_ref = recon.iter().map(|y| accel(y)).sum::<f64>() / recon.len() as f64;
    let ratios: Vec<f64> = records.iter().filter_map(|r| r.y).map(|y| (d_ref / -y).min(1.0)).collect();
    let value_auto = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    let hull = (d == 2).then(|| convex_hull_area(&human_means.iter().map(|m| [m[0], m[1]]).collect::<Vec<_>>()));
    let box_volume = (2.0 * cfg.al.half_width).powi(d as i32);
    let gain = write_gain(
        dir,
        &cfg.gain,
        [Some(records.len() as f64), hull.filter(|a| *a > 0.0), Some(box_volume), Some(value_auto)],
    )?;
    let best = run.best.ok_or_else(|| Error::NonFinite("every AL objective".into()))?;
    let report = json!({
        "best_z": best.z,
        "best_accel_objective": -best.y,
        "evaluations": records.len(),
        "reference_accel_objective": d_ref,
        "human_latent_hull_area": hull,
    });
    Ok(vec![AL_FILE.into(), write_json(dir, AL_REPORT_FILE, &report)?, gain])
}

fn projectile_dae(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let vae = Vae::load(&need(dir, VAE_FILE)?)?;
    let records = read_jsonl(&need(dir, AL_FILE)?)?;
    let mut scored: Vec<(f64, &Vec<f64>)> = records.iter().filter_map(|r| r.y.map(|y| (-y, &r.z))).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let keep = ((scored.len() as f64 * cfg.dae.realistic_fraction).ceil() as usize).min(scored.len());
    let zs: Vec<Vec<f64>> = scored[..keep].iter().map(|(_, z)| (*z).clone()).collect();
    let xs = vae.decode_batch(&zs)?;
    let u = xs.iter().map(|x| extract_attribute(x, Attribute::U)).collect::<Result<Vec<_>>>()?;
    let spec = DaeSpec {
        input_dim: xs.first().map_or(0, Vec::len),
        latent_dim: cfg.dae.latent_dim,
        hidden: cfg.dae.hidden.clone(),
        pairs: vec![(0, Attribute::U)],
        gamma: cfg.dae.gamma,
    };
    let tc = DaeTrainConfig {
        epochs: cfg.dae.epochs,
        batch_size: cfg.dae.batch_size,
        lr: cfg.dae.lr,
        seed: cfg.stage_seed(Stage::Dae),
    };
    let (dae, report) = train_dae(spec, &xs, std::slice::from_ref(&u), &tc)?;
    let z = dae.encode_batch(&xs)?;
    let rows = z
        .into_iter()
        .zip(&xs)
        .zip(&u)
        .map(|((z, x), &u)| DistilledRow { z, attrs: vec![u], y: max_height(x) })
        .collect();
    let distilled = DistilledDataset::new(cfg.dae.latent_dim, vec![Attribute::U.name().into()], rows)?;
    distilled.write_csv(&dir.join(DISTILLED_FILE))?;
    fs::write(dir.join(DAE_FILE), serde_json::to_vec(&dae)?)?;
    let summary = json!({
        "rows": distilled.len(),
        "realistic_threshold": scored.get(keep.saturating_sub(1)).map(|s| s.0),
        "pairs": [["z_1", "u"]],
        "spearman": report.spearman,
        "flagged": report.flagged,
        "smoothed_monotone": report.smoothed_monotone,
        "reconstruction_mse": dae.reconstruction_mse(&xs)?,
        "final_epoch": report.history.last(),
    });
    Ok(vec![DISTILLED_FILE.into(), DAE_FILE.into(), write_json(dir, DAE_REPORT_FILE, &summary)?])
}

fn eql_spec(cfg: &PipelineConfig, n_inputs: usize) -> Result<EqlSpec> {
    let e = &cfg.eql;
    let dict = parse_dictionary(&e.dict)?;
    let mut spec = EqlSpec::from_dictionary(n_inputs, &dict, e.copies)?;
    spec.target_sparsity = e.sparsity;
    spec.min_layer_connections = e.min_layer_connections;
    spec.epochs = e.epochs;
    spec.standardize_inputs = e.standardize_inputs;
    spec.seed = cfg.stage_seed(Stage::Eql);
    Ok(spec)
}

/// Learn, then persist the data used, the equation and `metrics`, which
/// receives the common fields.
fn finish_eql(
    cfg: &PipelineConfig,
    dir: &Path,
    data: &Dataset,
    extra: impl FnOnce(&LearnedEquation) -> Result<serde_json::Value>,
) -> Result<Vec<String>> {
    let target = cfg.exemplar.target();
    data.write_csv(&dir.join(EQL_DATA_FILE), target)?;
    let eq = learn_equation(&eql_spec(cfg, data.n_inputs())?, data, cfg.eql.tau, cfg.eql.restarts)?;
    fs::write(dir.join(EQUATION_FILE), format!("{}\n", eq.expr.equation(target)))?;
    let mut metrics = json!({
        "equation": eq.expr.equation(target),
        "mse": eq.mse,
        "sparsity": eq.sparsity,
        "stop": eq.history.stop,
        "terms": eq.expr.len(),
        "raw_terms": eq.raw.len(),
    });
    if let (Some(m), serde_json::Value::Object(more)) = (metrics.as_object_mut(), extra(&eq)?) {
        m.extend(more);
    }
    Ok(vec![
        EQL_DATA_FILE.into(),
        EQUATION_FILE.into(),
        write_json(dir, EQUATION_JSON_FILE, &eq)?,
        write_json(dir, METRICS_FILE, &metrics)?,
    ])
}

/// Degree of `expr` in input `var` and of its highest-degree term overall.
fn degrees(expr: &SymbolicExpr, var: usize) -> (u32, u32) {
    let mut in_var = 0;
    let mut total = 0;
    for t in &expr.terms {
        let mut deg = 0;
        for &(a, p) in &t.factors {
            if expr.atoms[a] == Atom::Var(var) {
                in_var = in_var.max(p);
            }
            deg += p;
        }
        total = total.max(deg);
    }
    (in_var, total)
}

fn projectile_eql(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let path = need(dir, DISTILLED_FILE)?;
    let inputs = (!cfg.eql.inputs.is_empty()).then_some(cfg.eql.inputs.as_slice());
    let data = Dataset::read_csv(&path, "y", inputs)?;
    let u = DistilledDataset::read_csv(&path)?.column(&format!("attr_{}", Attribute::U.name()))?;
    // The regularized latent is z_1.
    let var = data.names.iter().position(|n| n == "z_1");
    finish_eql(cfg, dir, &data, |eq| {
        let (mut num, mut den) = (0.0, 0.0);
        for (x, &u) in data.x.iter().zip(&u) {
            if (U_FIT_RANGE.0..=U_FIT_RANGE.1).contains(&u) {
                num += eq.expr.eval(x) * u * u;
                den += u.powi(4);
            }
        }
        let c = num / den;
        let reference = 1.0 / (2.0 * G);
        let (deg_u, deg_total) = var.map_or((0, 0), |v| degrees(&eq.expr, v));
        let mut powers = vec![0; data.n_inputs()];
        let quadratic = var.map_or(0.0, |v| {
            powers[v] = 2;
            eq.expr.monomial_coefficient(&powers)
        });
        Ok(json!({
            "c": c,
            "c_reference": reference,
            "c_rel_err": (c - reference).abs() / reference,
            "latent_degree": deg_u,
            "max_degree": deg_total,
            "quadratic_coefficient": quadratic,
            "dominant_quadratic": eq.expr.is_polynomial() && deg_u == 2 && deg_total == 2 && quadratic > 0.0,
        }))
    })
}

fn ising_betas(cfg: &PipelineConfig) -> Vec<f64> {
    let i = &cfg.ising;
    (0..i.n_beta).map(|k| i.beta_min + (i.beta_max - i.beta_min) * k as f64 / (i.n_beta - 1) as f64).collect()
}

/// Distinct stream for item `k` of a stage.
fn sub_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k.wrapping_mul(0x1000_0000_01b3))
}

/// `(1 - M^8)^(-1/4)`, which equals `sinh(2 beta)` on the Onsager curve.
pub fn ising_transform(m_abs: f64) -> Option<f64> {
    let d = 1.0 - m_abs.powi(8);
    (d > 0.0).then(|| d.powf(-0.25))
}

fn ising_al(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let i = &cfg.ising;
    let crit = EquilibriumCriterion { eps: i.eps, window: i.window, cap: i.cap };
    let seed = cfg.stage_seed(Stage::Al);
    let space = SearchSpace::Box { lower: vec![-1.0], upper: vec![1.0] };
    let mut log = Vec::new();
    let mut data = Vec::new();
    for (k, beta) in ising_betas(cfg).into_iter().enumerate() {
        let s = sub_seed(seed, k as u64);
        let al = AlConfig { n_init: i.n_init, budget: i.budget, seed: s, ..Default::default() };
        let obj_seed = s.wrapping_add(1);
        let run = al_loop(
            &mut |z| {
                let seeds = [obj_seed, obj_seed.wrapping_add(1), obj_seed.wrapping_add(2)];
                mean_equilibration_time(i.side, z[0], beta, &crit, &seeds).map_or(f64::NAN, |t| -t)
            },
            &space,
            &al,
        )?;
        let best = run.best.ok_or_else(|| Error::NonFinite("every Ising AL objective".into()))?;
        let zero_seeds = [obj_seed.wrapping_add(3), obj_seed.wrapping_add(4), obj_seed.wrapping_add(5)];
        let t_zero = mean_equilibration_time(i.side, 0.0, beta, &crit, &zero_seeds)?;
        let burn_in = (-best.y).ceil() as usize;
        let mut chain_m_abs = Vec::with_capacity(i.chains);
        for c in 0..i.chains as u64 {
            let cs = sub_seed(s, c + 1);
            let mut lattice = spin_init(i.side, best.z[0], cs)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cs ^ 0x5851_f42d_4c95_7f2d);
            for _ in 0..burn_in {
                lattice.metropolis_sweep(beta, &mut rng);
            }
            let mut acc = 0.0;
            for _ in 0..i.sweeps {
                lattice.metropolis_sweep(beta, &mut rng);
                acc += lattice.magnetization().abs();
            }
            let m = acc / i.sweeps as f64;
            chain_m_abs.push(m);
            match ising_transform(m) {
                Some(y) => data.push((beta, m, y)),
                None => log::warn!("beta {beta}: <|M|> = {m} leaves the transform undefined; row dropped"),
            }
        }
        log::info!("beta {beta:.3}: m_init {:.3}, t_sol {:.0} (from 0: {t_zero:.0})", best.z[0], -best.y);
        log.push(IsingAlRow {
            beta,
            best_m_init: best.z[0],
            t_sol_best: -best.y,
            t_sol_zero: t_zero,
            chain_m_abs,
            records: strip_timing(run.records),
        });
    }
    let mut text = String::new();
    for row in &log {
        text.push_str(&serde_json::to_string(row)?);
        text.push('\n');
    }
    fs::write(dir.join(ISING_AL_FILE), text)?;
    let mut w = csv::Writer::from_path(dir.join(ISING_DATA_FILE)).map_err(crate::dae::csv_err)?;
    w.write_record(["beta", "attr_m_abs", "y"]).map_err(crate::dae::csv_err)?;
    for (b, m, y) in &data {
        w.write_record([format!("{b:e}"), format!("{m:e}"), format!("{y:e}")]).map_err(crate::dae::csv_err)?;
    }
    w.flush()?;
    let speedup = log.iter().map(|r| r.t_sol_zero / r.t_sol_best).sum::<f64>() / log.len() as f64;
    let gain = write_gain(dir, &cfg.gain, [None, None, None, Some(speedup)])?;
    Ok(vec![ISING_AL_FILE.into(), ISING_DATA_FILE.into(), gain])
}

fn ising_eql(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let inputs = (!cfg.eql.inputs.is_empty()).then_some(cfg.eql.inputs.as_slice());
    let data = Dataset::read_csv(&need(dir, ISING_DATA_FILE)?, "y", inputs)?;
    finish_eql(cfg, dir, &data, |eq| {
        let sinh = sinh_term(&eq.expr);
        Ok(json!({
            "c1": sinh.map(|s| s.0),
            "c2": sinh.map(|s| s.1),
            "sinh_offset": sinh.map(|s| s.2),
            "sinh_terms": eq.expr.terms.iter().filter(|t| !t.factors.is_empty() && t.factors.iter().any(|&(a, _)| matches!(eq.expr.atoms[a], Atom::Func { func: Func::Sinh, .. }))).count(),
        }))
    })
}

/// `(c1, c2, c0)` of the largest term `c1 sinh(c2 x + c0)` with a linear
/// argument.
pub fn sinh_term(expr: &SymbolicExpr) -> Option<(f64, f64, f64)> {
    expr.terms
        .iter()
        .filter_map(|t| match t.factors.as_slice() {
            [(a, 1)] => match &expr.atoms[*a] {
                Atom::Func { func: Func::Sinh, inner } => {
                    let mut slope = None;
                    let mut offset = 0.0;
                    for it in inner {
                        match it.factors.as_slice() {
                            [] => offset += it.coef,
                            [(b, 1)] if matches!(expr.atoms[*b], Atom::Var(_)) && slope.is_none() => {
                                slope = Some(it.coef)
                            }
                            _ => return None,
                        }
                    }
                    slope.map(|s| (t.coef, s, offset))
                }
                _ => None,
            },
            _ => None,
        })
        .max_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
}

fn surrogate_al(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let space = SearchSpace::cube(4, cfg.al.half_width);
    let run = al_loop(&mut |z| directivity_surrogate(z), &space, &al_config(cfg)?)?;
    let (_, true_max) = directivity_box_max(-cfg.al.half_width, cfg.al.half_width);
    let records = strip_timing(run.records.clone());
    write_jsonl(&dir.join(AL_FILE), &records)?;
    let best = run.best.as_ref().ok_or_else(|| Error::NonFinite("every AL objective".into()))?;
    let report = json!({
        "best_z": best.z,
        "best_y": best.y,
        "true_max": true_max,
        "rel_gap": (true_max - best.y) / true_max.abs(),
        "evals_to_within_2pct": run.evals_to_reach(true_max - 0.02 * true_max.abs()),
        "evaluations": records.len(),
    });
    let gain = write_gain(dir, &cfg.gain, [Some(records.len() as f64), None, None, None])?;
    Ok(vec![AL_FILE.into(), write_json(dir, AL_REPORT_FILE, &report)?, gain])
}

fn surrogate_eql(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let records = read_jsonl(&need(dir, AL_FILE)?)?;
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) = records.iter().filter_map(|r| r.y.map(|y| (r.z.clone(), y))).unzip();
    let data = Dataset::new((1..=x.first().map_or(0, Vec::len)).map(|i| format!("z{i}")).collect(), x, y)?;
    // Monomials in the order of DIRECTIVITY_COEFFS.
    let monomials: [[u32; 4]; 6] =
        [[2, 0, 0, 0], [0, 2, 0, 0], [1, 0, 0, 0], [1, 1, 0, 0], [0, 1, 0, 0], [0, 0, 0, 0]];
    finish_eql(cfg, dir, &data, |eq| {
        let got: Vec<f64> = monomials.iter().map(|m| eq.expr.monomial_coefficient(m)).collect();
        let err = got.iter().zip(DIRECTIVITY_COEFFS).map(|(g, t)| (g - t).abs()).fold(0.0, f64::max);
        Ok(json!({ "coefficients": got, "reference": DIRECTIVITY_COEFFS, "max_abs_err": err }))
    })
}

/// Expected monomials (input powers) and coefficients of a benchmark.
pub fn benchmark_truth(exemplar: Exemplar) -> Vec<(Vec<u32>, f64)> {
    match exemplar {
        Exemplar::LotkaVolterra => vec![(vec![1, 0], 3.0), (vec![1, 1], -2.0), (vec![2, 0], -1.0)],
        Exemplar::VanDerPol => vec![(vec![0, 1], 10.0), (vec![3, 0], -10.0 / 3.0), (vec![1, 0], 10.0 / 3.0)],
        Exemplar::MagneticMoment => vec![(vec![1, 1, 1], 1.0)],
        _ => Vec::new(),
    }
}

fn benchmark_eql(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    let (n, seed) = (cfg.eql.rows, cfg.stage_seed(Stage::Eql));
    let data = match cfg.exemplar {
        Exemplar::LotkaVolterra => lotka_volterra(n, seed),
        Exemplar::VanDerPol => van_der_pol(n, seed),
        _ => magnetic_moment(n, seed),
    };
    let truth = benchmark_truth(cfg.exemplar);
    finish_eql(cfg, dir, &data, |eq| {
        let got: Vec<f64> = truth.iter().map(|(m, _)| eq.expr.monomial_coefficient(m)).collect();
        let err = got.iter().zip(&truth).map(|(g, (_, t))| (g - t).abs()).fold(0.0, f64::max);
        Ok(json!({
            "coefficients": got,
            "reference": truth.iter().map(|t| t.1).collect::<Vec<_>>(),
            "max_abs_err": err,
            "extra_terms": eq.expr.len().saturating_sub(truth.len()),
        }))
    })
}
