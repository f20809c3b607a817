use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use sensorsel::lti::io::{read_trajectory_csv, write_trajectory_csv, PlantFile};
use sensorsel::lti::{generate_excitation, simulate};
use sensorsel::oracle::{self, Oracle};
use sensorsel::regressors::assemble_obs_matrices;
use sensorsel::selector::{fmt_float, run_selection, verify_observability, DataSource, ObservabilityPolicy, SelectionResult};
use sensorsel::{Error, Horizon, LtiSystem, Metric, ObservabilityVerdict, SelectionIndex, TolPolicy};

use crate::scenario::Scenario;
use crate::{Common, Failure};

type Outcome = Result<(), Failure>;

fn out_dir(common: &Common, sc: &Scenario) -> Result<PathBuf, Failure> {
    let dir = common
        .out_dir
        .clone()
        .or_else(|| sc.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Failure::config(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::from(Error::Io(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn load(common: &Common) -> Result<(Scenario, PathBuf), Failure> {
    let sc = Scenario::load(&common.scenario)?;
    let dir = out_dir(common, &sc)?;
    Ok((sc, dir))
}

/// Sensors recorded in the evaluated channel: candidates plus seed sensors.
fn evaluated_set(sc: &Scenario, p: usize) -> Result<SelectionIndex, Failure> {
    let cfg = sc.pipeline(p)?;
    let cands = cfg.candidates.unwrap_or_else(|| SelectionIndex::all(p));
    Ok(cands.union(&cfg.seed_sensors)?)
}

pub fn generate(common: &Common) -> Outcome {
    let (sc, dir) = load(common)?;
    let (sys, labels) = sc.build_plant()?;
    let path = dir.join("plant.json");
    PlantFile::from_system(&sys, labels).write(&path)?;
    println!("wrote {} (n={}, m={}, p={}, rho={:.6})", path.display(), sys.n(), sys.m(), sys.p(), sys.spectral_radius());
    Ok(())
}

#[derive(Serialize)]
struct CollectInfo {
    seed_sensors: Vec<usize>,
    eval_sensors: Vec<usize>,
    samples: usize,
}

pub fn collect(common: &Common) -> Outcome {
    let (sc, dir) = load(common)?;
    let (sys, _) = sc.build_plant()?;
    let cfg = sc.pipeline(sys.p())?;
    let eval = evaluated_set(&sc, sys.p())?;
    let u = generate_excitation(&sc.excitation, sys.m());
    let traj = simulate(&sys, &u, &cfg.seed_sensors, &eval)?;
    let path = dir.join("trajectory.csv");
    write_trajectory_csv(&traj, create(&path)?)?;
    write_json(
        &dir.join("collect.json"),
        &CollectInfo { seed_sensors: cfg.seed_sensors.one_based(), eval_sensors: eval.one_based(), samples: traj.len() },
    )?;
    println!("wrote {} ({} samples)", path.display(), traj.len());
    Ok(())
}

#[derive(serde::Deserialize)]
struct CollectInfoIn {
    eval_sensors: Vec<usize>,
}

fn oracle_metric_at(metric: Metric, steps: Option<usize>) -> Metric {
    match steps {
        Some(t) => Metric { kind: metric.kind, horizon: Horizon::Finite { steps: t } },
        None => metric,
    }
}

/// `sensor,steps,estimate,oracle,abs_error,rel_error` for every evaluated
/// sensor and, on finite horizons, every `t = 1..=T`.
fn write_errors_csv(path: &Path, sys: &LtiSystem, res: &SelectionResult) -> Outcome {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["sensor", "steps", "estimate", "oracle", "abs_error", "rel_error"]).map_err(|e| io_err(path, e))?;
    let mut orc = Oracle::new(sys);
    let rows: Vec<(Option<usize>, &[f64])> = match &res.per_step {
        Some(steps) => steps.iter().map(|s| (Some(s.steps), &s.scores[..])).collect(),
        None => vec![(None, &res.scores[..])],
    };
    for (i, &sensor) in res.evaluated.iter().enumerate() {
        let sel = SelectionIndex::from_one_based(&[sensor], sys.p())?;
        for (steps, scores) in &rows {
            let truth = orc.cost(&sel, oracle_metric_at(res.metric, *steps))?;
            let est = scores[i];
            let abs = (est - truth).abs();
            let rel = abs / truth.abs().max(1e-12);
            w.write_record([
                sensor.to_string(),
                steps.map_or("inf".to_string(), |t| t.to_string()),
                fmt_float(est),
                fmt_float(truth),
                fmt_float(abs),
                fmt_float(rel),
            ])
            .map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn select(common: &Common, trajectory: Option<&Path>, eval_sensors: &[usize], with_oracle: bool) -> Outcome {
    let (sc, dir) = load(common)?;
    // The plant is read for its dimensions; with a recorded trajectory its
    // matrices are only touched by --oracle.
    let (sys, _) = sc.build_plant()?;
    let mut cfg = sc.pipeline(sys.p())?;
    if with_oracle {
        cfg.state_dim = Some(sys.n());
    }
    let res = match trajectory {
        Some(path) => {
            let traj = read_trajectory_csv(File::open(path).map_err(|e| io_err(path, e))?)?;
            let numbers = if eval_sensors.is_empty() {
                let info = path.with_file_name("collect.json");
                let text = std::fs::read_to_string(&info)
                    .map_err(|_| Failure::config("--eval-sensors is required when collect.json is absent"))?;
                serde_json::from_str::<CollectInfoIn>(&text).map_err(|e| io_err(&info, e))?.eval_sensors
            } else {
                eval_sensors.to_vec()
            };
            let eval = SelectionIndex::from_one_based(&numbers, sys.p())?;
            run_selection(DataSource::Recorded { traj: &traj, eval_sensors: &eval }, &cfg)?
        }
        None => run_selection(DataSource::Plant(&sys), &cfg)?,
    };
    write_json(&dir.join("result.json"), &res)?;
    res.write_scores_csv(create(&dir.join("scores.csv"))?)?;
    write_json(&dir.join("timing.json"), &res.timings)?;
    if with_oracle {
        write_errors_csv(&dir.join("errors.csv"), &sys, &res)?;
    }
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    println!("chosen {:?}  {} = {}", res.chosen, res.metric, fmt_float(res.subset_metric));
    if res.rank.numerical_rank == 0 {
        return Err(Failure { code: 3, message: "regressor matrix has rank 0; the data carry no excitation".into() });
    }
    Ok(())
}

#[derive(Serialize)]
struct VerdictFile {
    sensors: Vec<usize>,
    history: usize,
    threshold: TolPolicy,
    verdict: ObservabilityVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_observable: Option<bool>,
}

pub fn verify(common: &Common, sensors: &[usize], abs: Option<f64>, rel: Option<f64>, with_oracle: bool) -> Outcome {
    let (sc, dir) = load(common)?;
    let (sys, _) = sc.build_plant()?;
    let cfg = sc.pipeline(sys.p())?;
    let sel = SelectionIndex::from_one_based(sensors, sys.p())?;
    let policy = match (abs, rel) {
        (Some(t), _) => TolPolicy::Absolute(t),
        (None, Some(f)) => TolPolicy::Relative(f),
        (None, None) => cfg.obs_tol,
    };
    let u = generate_excitation(&sc.excitation, sys.m());
    let traj = simulate(&sys, &u, &cfg.seed_sensors, &sel)?;
    let obs = assemble_obs_matrices(&traj, sc.history)?;
    let verdict = verify_observability(&obs, policy, with_oracle.then(|| sys.n()))?;
    let truth = if with_oracle { Some(oracle::is_observable(sys.a(), &sys.sensor_rows(&sel)?)) } else { None };
    println!("{sel}: {:?} (rank Z = {}, rank Z~ = {})", verdict.status, verdict.rank_z, verdict.rank_z_tilde);
    write_json(
        &dir.join("verdict.json"),
        &VerdictFile { sensors: sel.one_based(), history: sc.history, threshold: policy, verdict, oracle_observable: truth },
    )
}

#[derive(Serialize)]
struct OracleFile {
    metric: Metric,
    n: usize,
    m: usize,
    p: usize,
    spectral_radius: f64,
    seed_observability_index: Option<usize>,
    singletons: oracle::OracleReport,
    /// Finite horizons: singleton costs at every `t = 1..=T`, one row per t.
    #[serde(skip_serializing_if = "Option::is_none")]
    per_step: Option<Vec<StepCosts>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    brute_force: Option<BruteForce>,
}

#[derive(Serialize)]
struct StepCosts {
    steps: usize,
    #[serde(with = "sensorsel::serde_float::vec")]
    costs: Vec<f64>,
}

#[derive(Serialize)]
struct BruteForce {
    chosen: Vec<usize>,
    #[serde(with = "sensorsel::serde_float")]
    value: f64,
}

pub fn oracle(common: &Common, brute_force: bool) -> Outcome {
    let (sc, dir) = load(common)?;
    let (sys, _) = sc.build_plant()?;
    let cfg = sc.pipeline(sys.p())?;
    let all = SelectionIndex::all(sys.p());
    let singletons = oracle::report(&sys, &all, sc.metric)?;
    let per_step = match sc.metric.horizon {
        Horizon::Finite { steps } => {
            let mut orc = Oracle::new(&sys);
            let mut rows = Vec::new();
            for t in 1..=steps {
                let metric = oracle_metric_at(sc.metric, Some(t));
                rows.push(StepCosts { steps: t, costs: orc.singleton_costs(metric)? });
            }
            Some(rows)
        }
        Horizon::Infinite { .. } => None,
    };
    let bf = if brute_force {
        let cands = cfg.candidates.clone().unwrap_or_else(|| all.clone());
        let seed = (sc.observability == ObservabilityPolicy::Seed).then_some(&cfg.seed_sensors);
        let (chosen, value) = Oracle::new(&sys).brute_force(cands.indices(), seed, sc.select, sc.metric)?;
        Some(BruteForce { chosen: chosen.one_based(), value })
    } else {
        None
    };
    let file = OracleFile {
        metric: sc.metric,
        n: sys.n(),
        m: sys.m(),
        p: sys.p(),
        spectral_radius: sys.spectral_radius(),
        seed_observability_index: oracle::observability_index(sys.a(), &sys.sensor_rows(&cfg.seed_sensors)?),
        singletons,
        per_step,
        brute_force: bf,
    };
    let path = dir.join("oracle.json");
    write_json(&path, &file)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn sweep(common: &Common, max_steps: Option<usize>, with_oracle: bool) -> Outcome {
    let (mut sc, dir) = load(common)?;
    let steps = match (max_steps, sc.metric.horizon) {
        (Some(t), _) => t,
        (None, Horizon::Finite { steps }) => steps,
        (None, Horizon::Infinite { .. }) => {
            return Err(Failure::config("sweep needs --max-steps or a finite-horizon metric"));
        }
    };
    if steps == 0 {
        return Err(Failure::config("--max-steps must be positive"));
    }
    sc.metric = Metric { kind: sc.metric.kind, horizon: Horizon::Finite { steps } };
    let (sys, _) = sc.build_plant()?;
    let mut cfg = sc.pipeline(sys.p())?;
    if with_oracle {
        cfg.state_dim = Some(sys.n());
    }
    let res = run_selection(DataSource::Plant(&sys), &cfg)?;
    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let mut header = vec!["sensor", "steps", "score", "chosen"];
    if with_oracle {
        header.extend(["oracle", "abs_error", "rel_error"]);
    }
    w.write_record(&header).map_err(|e| io_err(&path, e))?;
    let mut orc = Oracle::new(&sys);
    let per_step = res.per_step.as_ref().expect("finite horizon");
    for (i, &sensor) in res.evaluated.iter().enumerate() {
        for s in per_step {
            let mut rec = vec![
                sensor.to_string(),
                s.steps.to_string(),
                fmt_float(s.scores[i]),
                s.chosen.contains(&sensor).to_string(),
            ];
            if with_oracle {
                let sel = SelectionIndex::from_one_based(&[sensor], sys.p())?;
                let truth = orc.cost(&sel, oracle_metric_at(sc.metric, Some(s.steps)))?;
                let abs = (s.scores[i] - truth).abs();
                rec.extend([fmt_float(truth), fmt_float(abs), fmt_float(abs / truth.abs().max(1e-12))]);
            }
            w.write_record(&rec).map_err(|e| io_err(&path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    write_json(&dir.join("timing.json"), &res.timings)?;
    println!("wrote {} ({} sensors x {steps} horizons)", path.display(), res.evaluated.len());
    Ok(())
}
