//! Command implementations: config ingestion, runs, CSV emission and plot
//! scripts.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use sha2::{Digest, Sha256};

use nhdiff_core::chaplygin::{beta_at, drift_b, measure_test, measure_test_with};
use nhdiff_core::csv;
use nhdiff_core::sde::{ensemble_run, ensemble_stats, Calculus, TimeGrid};
use nhdiff_core::systems::{
    robot_cbm_problem, robot_plan_mean, robot_system, snakeboard_experiment, RobotControl,
};
use nhdiff_core::Error as CoreError;

use crate::config::{parse_config, CustomBeta, RunConfig, SystemId};
use crate::CommonArgs;

pub struct CliFailure {
    pub code: u8,
    pub message: String,
}

impl CliFailure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn of(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

type CmdResult = Result<(), CliFailure>;

struct LoadedConfig {
    cfg: RunConfig,
    hash: String,
    grid: TimeGrid,
    paths: usize,
    seed: u64,
}

fn load(common: &CommonArgs) -> Result<LoadedConfig, CliFailure> {
    let path = common.config.display().to_string();
    let text = fs::read_to_string(&common.config)
        .map_err(|e| CliFailure::config(format!("cannot read {path}: {e}")))?;
    let cfg = parse_config(&text, &path).map_err(|e| CliFailure::config(format!("{e:#}")))?;
    let digest = Sha256::digest(text.as_bytes());
    let hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();

    let t0 = cfg.grid.t0;
    let t_final = common.t_final.unwrap_or(cfg.grid.t_final);
    let steps = match common.dt {
        Some(dt) if dt > 0.0 => ((t_final - t0) / dt).round().max(1.0) as usize,
        Some(_) => return Err(CliFailure::config("--dt must be positive")),
        None => cfg.grid.steps,
    };
    let grid = TimeGrid::new(t0, t_final, steps)
        .map_err(|e| CliFailure::config(format!("invalid grid: {e}")))?;
    let paths = match common.paths.unwrap_or(cfg.ensemble.paths) {
        0 => return Err(CliFailure::config("paths must be ≥ 1")),
        p => p,
    };
    let seed = common.seed.unwrap_or(cfg.ensemble.seed);
    Ok(LoadedConfig {
        cfg,
        hash,
        grid,
        paths,
        seed,
    })
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliFailure> {
    fs::create_dir_all(dir)
        .map_err(|e| CliFailure::of(1, format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliFailure::of(1, format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn base_metadata(loaded: &LoadedConfig) -> Vec<(String, String)> {
    vec![
        ("config_sha256".into(), loaded.hash.clone()),
        ("seed".into(), loaded.seed.to_string()),
        (
            "grid".into(),
            format!(
                "t0={} t_final={} steps={}",
                loaded.grid.t0, loaded.grid.t_final, loaded.grid.steps
            ),
        ),
    ]
}

fn robot_metadata(meta: &mut Vec<(String, String)>, p: &nhdiff_core::systems::RobotParams) {
    meta.push((
        "robot_params".into(),
        format!(
            "m0={} m_w={} j_w={} j_0={} l={} c={} r={} d1={} d2={}",
            p.m0, p.m_w, p.j_w, p.j_0, p.l, p.c, p.r, p.d1, p.d2
        ),
    ));
}

pub fn cmd_simulate(common: &CommonArgs) -> CmdResult {
    let loaded = load(common)?;
    let sim = loaded.cfg.simulate.clone().unwrap_or_default();
    let mut meta = base_metadata(&loaded);
    meta.push(("sigma".into(), sim.sigma.to_string()));

    let (ensemble, periodic) = match loaded.cfg.system.id {
        SystemId::Robot => {
            let params = loaded
                .cfg
                .params
                .robot
                .clone()
                .unwrap_or_default()
                .to_params();
            robot_metadata(&mut meta, &params);
            let problem = robot_cbm_problem(&params, sim.sigma)
                .map_err(|e| CliFailure::config(e.to_string()))?;
            let initial = match &sim.initial {
                Some(v) if v.len() == 5 => DVector::from_row_slice(v),
                Some(v) => {
                    return Err(CliFailure::config(format!(
                        "[simulate] initial must have 5 entries, got {}",
                        v.len()
                    )))
                }
                None => DVector::zeros(5),
            };
            let ens = ensemble_run(&problem, &loaded.grid, &initial, loaded.seed, loaded.paths)
                .map_err(|e| CliFailure::of(1, e.to_string()))?;
            (ens, vec![true, true, false, false, true])
        }
        SystemId::Snakeboard => {
            let params = loaded
                .cfg
                .params
                .snakeboard
                .clone()
                .unwrap_or_default()
                .to_params();
            let controls = loaded.cfg.controls.to_controls();
            meta.push((
                "snakeboard_params".into(),
                format!(
                    "m={} j_0={} j_phi={} j_psi={} j_theta={} r={}",
                    params.m, params.j_0, params.j_phi, params.j_psi, params.j_theta, params.r
                ),
            ));
            let initial = match &sim.initial {
                Some(v) if v.len() == 5 => DVector::from_row_slice(v),
                Some(v) => {
                    return Err(CliFailure::config(format!(
                        "[simulate] initial must have 5 entries, got {}",
                        v.len()
                    )))
                }
                None => DVector::from_row_slice(&[0.0, 0.0, 0.0, 0.0, 0.5]),
            };
            params
                .check_shape(initial[0])
                .map_err(|e| CliFailure::of(3, e.to_string()))?;
            let problem = nhdiff_core::systems::snakeboard_xh_problem(
                &params,
                &controls,
                sim.sigma,
                Calculus::Stratonovich,
            )
            .map_err(|e| CliFailure::config(e.to_string()))?;
            let ens = ensemble_run(&problem, &loaded.grid, &initial, loaded.seed, loaded.paths)
                .map_err(|e| CliFailure::of(1, e.to_string()))?;
            (ens, vec![true, true, false, false, true])
        }
        SystemId::Custom => {
            return Err(CliFailure::config(
                "simulate supports the robot and snakeboard systems",
            ))
        }
    };

    let all_failed = ensemble.paths.iter().all(|p| p.exploded_at.is_some());
    let csv_paths = csv::ensemble_csv(&ensemble, &periodic, &meta);
    write_file(&common.out, "paths.csv", &csv_paths)?;

    let dim = ensemble.paths[0].states[0].len();
    let horizon = ensemble
        .paths
        .iter()
        .map(|p| p.states.len())
        .max()
        .unwrap_or(0);
    let mut means = vec![DVector::zeros(dim); horizon];
    let mut stderrs = vec![DVector::zeros(dim); horizon];
    let mut alive = vec![0usize; horizon];
    for coord in 0..dim {
        let stats = ensemble_stats(&ensemble, |s| s[coord]);
        for (i, st) in stats.iter().enumerate() {
            means[i][coord] = st.mean;
            stderrs[i][coord] = st.stderr;
            alive[i] = st.count;
        }
    }
    let times: Vec<f64> = (0..horizon).map(|i| loaded.grid.time(i)).collect();
    let csv_mean = csv::mean_csv(
        &times,
        &means,
        Some(&stderrs),
        Some(&alive),
        &periodic,
        &meta,
    );
    write_file(&common.out, "mean.csv", &csv_mean)?;

    if all_failed {
        return Err(CliFailure::of(3, "all paths failed (singular shape)"));
    }
    Ok(())
}

pub fn cmd_drift(common: &CommonArgs) -> CmdResult {
    let loaded = load(common)?;
    if loaded.cfg.system.id != SystemId::Robot {
        return Err(CliFailure::config("drift sampling is a robot command"));
    }
    let k = loaded.cfg.drift.clone().unwrap_or_default().grid.max(1);
    let params = loaded
        .cfg
        .params
        .robot
        .clone()
        .unwrap_or_default()
        .to_params();
    let (_sys, split) =
        robot_system(&params).map_err(|e| CliFailure::config(e.to_string()))?;
    let mut meta = base_metadata(&loaded);
    robot_metadata(&mut meta, &params);

    let mut out = String::new();
    for (key, value) in &meta {
        out.push_str(&format!("# {key}: {value}\n"));
    }
    out.push_str("x1,x2,beta_1,beta_2,b_1,b_2\n");
    let h = std::f64::consts::TAU / k as f64;
    for i in 0..k {
        for j in 0..k {
            let x = DVector::from_row_slice(&[i as f64 * h, j as f64 * h]);
            let beta = beta_at(&split, &x).map_err(|e| CliFailure::of(1, e.to_string()))?;
            let b = drift_b(&split, &x).map_err(|e| CliFailure::of(1, e.to_string()))?;
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                csv::fmt_float(x[0]),
                csv::fmt_float(x[1]),
                csv::fmt_float(beta[0]),
                csv::fmt_float(beta[1]),
                csv::fmt_float(b[0]),
                csv::fmt_float(b[1]),
            ));
        }
    }
    write_file(&common.out, "drift.csv", &out)
}

pub fn cmd_measure_test(common: &CommonArgs, grid_override: Option<usize>) -> CmdResult {
    let loaded = load(common)?;
    let resolution = grid_override.unwrap_or_else(|| {
        loaded
            .cfg
            .measure_test
            .clone()
            .unwrap_or_default()
            .resolution
    });
    let mut meta = base_metadata(&loaded);
    meta.push(("resolution".into(), resolution.to_string()));

    let report = match loaded.cfg.system.id {
        SystemId::Robot => {
            let params = loaded
                .cfg
                .params
                .robot
                .clone()
                .unwrap_or_default()
                .to_params();
            robot_metadata(&mut meta, &params);
            let (_sys, split) =
                robot_system(&params).map_err(|e| CliFailure::config(e.to_string()))?;
            measure_test(&split, resolution, &[0, 1])
        }
        SystemId::Custom => {
            let custom = loaded
                .cfg
                .custom
                .clone()
                .ok_or_else(|| CliFailure::config("custom system needs a [custom] section"))?;
            meta.push(("custom_beta".into(), format!("{:?}", custom.beta)));
            let beta_fn = move |x: &DVector<f64>| -> nhdiff_core::Result<DVector<f64>> {
                Ok(match custom.beta {
                    CustomBeta::SinPsi1 => DVector::from_row_slice(&[x[0].cos(), 0.0]),
                    CustomBeta::ConstantQuarter => DVector::from_row_slice(&[0.25, 0.25]),
                    CustomBeta::NotClosed => DVector::from_row_slice(&[x[1].sin(), 0.0]),
                    CustomBeta::HighFrequency => {
                        DVector::from_row_slice(&[(5.0 * x[1]).sin(), 0.0])
                    }
                })
            };
            measure_test_with(&beta_fn, None, 2, resolution, &[0, 1])
        }
        SystemId::Snakeboard => {
            return Err(CliFailure::config(
                "the snakeboard is not G-Chaplygin; measure-test applies to robot or custom",
            ))
        }
    };
    let report = report.map_err(|e| match e {
        CoreError::GridTooCoarse(msg) => CliFailure::of(4, format!("verdict unavailable: {msg}")),
        other => CliFailure::of(1, other.to_string()),
    })?;

    let summary = csv::measure_summary(&report);
    print!("{summary}");
    write_file(&common.out, "measure_report.csv", &csv::measure_report_csv(&report, &meta))?;
    write_file(&common.out, "measure_summary.txt", &summary)
}

pub fn cmd_plan(common: &CommonArgs, paper_literal_flag: bool) -> CmdResult {
    let loaded = load(common)?;
    if loaded.cfg.system.id != SystemId::Robot {
        return Err(CliFailure::config("plan is a robot command"));
    }
    let plan_cfg = loaded.cfg.plan.clone().unwrap_or_default();
    let params = loaded
        .cfg
        .params
        .robot
        .clone()
        .unwrap_or_default()
        .to_params();
    let mut control =
        RobotControl::new(plan_cfg.rho, &params).map_err(|e| CliFailure::config(e.to_string()))?;
    if let Some(t_total) = plan_cfg.t_total.or(common.t_final) {
        if t_total <= control.t1 {
            return Err(CliFailure::config(format!(
                "total time {t_total} must exceed the switch time t1 = {}",
                control.t1
            )));
        }
        control.t_total = t_total;
    }
    let paper_literal = paper_literal_flag || plan_cfg.paper_literal;
    let grid = TimeGrid::new(0.0, control.t_total, plan_cfg.steps)
        .map_err(|e| CliFailure::config(e.to_string()))?;
    let plan = robot_plan_mean(&params, &control, &grid, paper_literal)
        .map_err(|e| CliFailure::of(1, e.to_string()))?;

    let mut meta = base_metadata(&loaded);
    robot_metadata(&mut meta, &params);
    meta.push(("rho".into(), plan_cfg.rho.to_string()));
    meta.push(("kappa".into(), csv::fmt_float(control.kappa)));
    meta.push(("paper_literal".into(), paper_literal.to_string()));

    let emit = |points: &[(f64, f64)]| {
        let mut out = String::new();
        for (key, value) in &meta {
            out.push_str(&format!("# {key}: {value}\n"));
        }
        out.push_str("t,x,y,phase\n");
        for (i, (x, y)) in points.iter().enumerate() {
            let phase = if plan.accelerating[i] {
                "accelerate"
            } else {
                "brake"
            };
            out.push_str(&format!(
                "{},{},{},{phase}\n",
                csv::fmt_float(plan.times[i]),
                csv::fmt_float(*x),
                csv::fmt_float(*y),
            ));
        }
        out
    };
    write_file(&common.out, "mean.csv", &emit(&plan.mean))?;
    write_file(&common.out, "nominal.csv", &emit(&plan.nominal))?;

    let script = "\
# nhdiff plot script: `plot <csv> <x-column> <y-column> <label> [filter-column=value]`
plot mean.csv x y mean-accelerate phase=accelerate
plot mean.csv x y mean-brake phase=brake
plot nominal.csv x y nominal-accelerate phase=accelerate
plot nominal.csv x y nominal-brake phase=brake
";
    write_file(&common.out, "plan.plot", script)
}

pub fn cmd_reconstruct(common: &CommonArgs) -> CmdResult {
    let loaded = load(common)?;
    if loaded.cfg.system.id != SystemId::Snakeboard {
        return Err(CliFailure::config("reconstruct is a snakeboard command"));
    }
    let rec = loaded.cfg.reconstruct.clone().unwrap_or_default();
    let params = loaded
        .cfg
        .params
        .snakeboard
        .clone()
        .unwrap_or_default()
        .to_params();
    let controls = loaded.cfg.controls.to_controls();
    if rec.initial.len() != 5 {
        return Err(CliFailure::config(format!(
            "[reconstruct] initial must have 5 entries, got {}",
            rec.initial.len()
        )));
    }
    let q0 = DVector::from_row_slice(&rec.initial);
    let experiment = snakeboard_experiment(
        &params,
        &controls,
        rec.sigma,
        &loaded.grid,
        &q0,
        loaded.seed,
        loaded.paths,
    )
    .map_err(|e| match e {
        CoreError::SingularShape(msg) => CliFailure::of(3, msg),
        other => CliFailure::config(other.to_string()),
    })?;
    if experiment.exploded_paths == loaded.paths {
        return Err(CliFailure::of(3, "all paths failed"));
    }

    let mut meta = base_metadata(&loaded);
    meta.push((
        "snakeboard_params".into(),
        format!(
            "m={} j_0={} j_phi={} j_psi={} j_theta={} r={}",
            params.m, params.j_0, params.j_phi, params.j_psi, params.j_theta, params.r
        ),
    ));
    meta.push((
        "controls".into(),
        format!(
            "a_phi={} omega_phi={} a_psi={} omega_psi={}",
            controls.a_phi, controls.omega_phi, controls.a_psi, controls.omega_psi
        ),
    ));
    meta.push(("sigma".into(), rec.sigma.to_string()));
    meta.push((
        "q0".into(),
        rec.initial
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(","),
    ));
    meta.push((
        "exploded_paths".into(),
        experiment.exploded_paths.to_string(),
    ));

    let periodic = vec![true, true, false, false, true];
    let times: Vec<f64> = (0..experiment.mean_z.len())
        .map(|i| loaded.grid.time(i))
        .collect();
    let zmean = csv::mean_csv(
        &times,
        &experiment.mean_z,
        None,
        Some(&experiment.alive),
        &periodic,
        &meta,
    );
    write_file(&common.out, "zmean.csv", &zmean)?;

    let samples = nhdiff_core::sde::Ensemble {
        paths: experiment.samples.clone(),
        master_seed: loaded.seed,
    };
    write_file(
        &common.out,
        "zsamples.csv",
        &csv::ensemble_csv(&samples, &periodic, &meta),
    )?;
    write_file(
        &common.out,
        "deterministic.csv",
        &csv::path_csv(&experiment.deterministic, &periodic, &meta),
    )?;

    let script = "\
# nhdiff plot script: `plot <csv> <x-column> <y-column> <label> [filter-column=value]`
plot deterministic.csv q3 q4 unperturbed
plot zmean.csv q3 q4 mean-Z
plot zsamples.csv q3 q4 sample path_id=0
plot zsamples.csv q3 q4 sample path_id=1
plot zsamples.csv q3 q4 sample path_id=2
";
    write_file(&common.out, "reconstruct.plot", script)
}
