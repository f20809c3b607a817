//! Choosing sensors from data-driven scores and checking observability of
//! the result from data.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate_fin_batch, estimate_inf};
use crate::lti::{generate_excitation, simulate, ExcitationConfig, LtiSystem, SelectionIndex, Trajectory};
use crate::metric::{Horizon, Metric, MetricKind, LOGDET_EIGEN_FLOOR};
use crate::regressors::{assemble_fin, assemble_inf, assemble_obs_matrices, AssemblyConfig, ObsDataMatrices, RankReport};
use crate::tensor_ops::{numerical_rank, TolPolicy};

/// Positions of the `card` largest scores, ties to the lower position.
pub fn select_topk(scores: &[f64], card: usize) -> Result<Vec<usize>> {
    if card > scores.len() {
        return Err(Error::InvalidSelection(format!("cannot pick {card} of {} sensors", scores.len())));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort on descending score keeps ties in index order. NaN sinks.
    order.sort_by(|&a, &b| {
        let (x, y) = (scores[a], scores[b]);
        y.partial_cmp(&x).unwrap_or_else(|| x.is_nan().cmp(&y.is_nan()))
    });
    let mut out = order[..card].to_vec();
    out.sort_unstable();
    Ok(out)
}

/// Greedy log-det outcome. Positions refer to the `blocks` slice.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome {
    /// Seed positions first, then additions in pick order.
    pub order: Vec<usize>,
    /// Log-det of the final block sum.
    pub value: f64,
    /// Some step had only `-inf` marginals and fell back to the trace key.
    pub trace_fallback: bool,
}

impl GreedyOutcome {
    pub fn chosen_sorted(&self) -> Vec<usize> {
        let mut v = self.order.clone();
        v.sort_unstable();
        v
    }
}

/// Adds, one at a time, the block that maximizes `logdet` of the running
/// sum, starting from `seed`. Ties and `-inf` marginals fall back to the
/// trace of the sum, then to the lower position.
pub fn select_greedy_logdet(blocks: &[DMatrix<f64>], card: usize, seed: &[usize]) -> Result<GreedyOutcome> {
    select_greedy_logdet_with_floor(blocks, card, seed, LOGDET_EIGEN_FLOOR)
}

/// [`select_greedy_logdet`] with an explicit eigenvalue floor for `-inf`.
pub fn select_greedy_logdet_with_floor(blocks: &[DMatrix<f64>], card: usize, seed: &[usize], floor: f64) -> Result<GreedyOutcome> {
    let p = blocks.len();
    if card > p {
        return Err(Error::InvalidSelection(format!("cannot pick {card} of {p} sensors")));
    }
    let Some(first) = blocks.first() else {
        return Err(Error::InvalidSelection("no candidate blocks".into()));
    };
    let m = first.nrows();
    if blocks.iter().any(|b| b.shape() != (m, m)) {
        return Err(Error::dims("greedy blocks", format!("{m}x{m}"), "mixed shapes"));
    }
    if seed.iter().any(|&j| j >= p) || seed.len() > card {
        return Err(Error::InvalidSelection(format!("seed {seed:?} invalid for {p} sensors and cardinality {card}")));
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(card);
    let mut sum = DMatrix::zeros(m, m);
    for &j in seed {
        if chosen.contains(&j) {
            return Err(Error::InvalidSelection(format!("duplicate seed position {j}")));
        }
        chosen.push(j);
        sum += &blocks[j];
    }
    let mut fallback = false;
    while chosen.len() < card {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in (0..p).filter(|j| !chosen.contains(j)) {
            let cand = &sum + &blocks[j];
            let ld = MetricKind::LogDet.evaluate(&cand, floor);
            let tr = cand.trace();
            let better = match best {
                None => true,
                Some((_, bl, bt)) => ld > bl || (ld == bl && tr > bt),
            };
            if better {
                best = Some((j, ld, tr));
            }
        }
        let (j, ld, _) = best.expect("card <= p leaves a candidate");
        if ld == f64::NEG_INFINITY {
            fallback = true;
        }
        chosen.push(j);
        sum += &blocks[j];
    }
    Ok(GreedyOutcome {
        order: chosen,
        value: MetricKind::LogDet.evaluate(&sum, floor),
        trace_fallback: fallback,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictStatus {
    VerifiedObservable,
    VerifiedUnobservable,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityVerdict {
    pub status: VerdictStatus,
    pub rank_z: usize,
    pub rank_z_tilde: usize,
    /// `Nm + n` when the state dimension was supplied; otherwise the rank of
    /// `Z` stands in for it.
    pub target_rank: usize,
    pub state_dim_known: bool,
    /// Singular value of `Z̃` at position `target_rank` (1-based), the margin
    /// that decides the verdict.
    pub sigma_at_target: Option<f64>,
    pub tolerance_z_tilde: f64,
    pub policy: TolPolicy,
}

impl ObservabilityVerdict {
    pub fn is_observable(&self) -> bool {
        self.status == VerdictStatus::VerifiedObservable
    }
}

/// Rank test on `Z` and `Z̃`.
///
/// With `state_dim = Some(n)`: `rank(Z̃) = Nm + n` proves `(A, C̃)`
/// observable; `rank(Z) = Nm + n > rank(Z̃)` proves it unobservable; anything
/// else is inconclusive. Without `n`, `rank(Z)` is taken as `Nm + n`, which
/// holds when the seed pair is observable and the input excites the system;
/// the test is inconclusive when `Z` shows no output information beyond the
/// inputs.
pub fn verify_observability(obs: &ObsDataMatrices, policy: TolPolicy, state_dim: Option<usize>) -> Result<ObservabilityVerdict> {
    let k = obs.z.ncols();
    let needed = obs.z.nrows().max(obs.z_tilde.nrows());
    if k < needed {
        return Err(Error::InsufficientSamples { needed, available: k });
    }
    let (rank_z, _, _) = numerical_rank(&obs.z, policy)?;
    let (rank_zt, sv_zt, tol_zt) = numerical_rank(&obs.z_tilde, policy)?;
    let nm = obs.input_rows();
    let target = match state_dim {
        Some(n) => nm + n,
        None => rank_z,
    };
    let status = if state_dim.is_none() && rank_z <= nm {
        VerdictStatus::Inconclusive
    } else if rank_zt == target {
        VerdictStatus::VerifiedObservable
    } else if rank_z == target && rank_zt < target {
        VerdictStatus::VerifiedUnobservable
    } else {
        VerdictStatus::Inconclusive
    };
    Ok(ObservabilityVerdict {
        status,
        rank_z,
        rank_z_tilde: rank_zt,
        target_rank: target,
        state_dim_known: state_dim.is_some(),
        sigma_at_target: target.checked_sub(1).and_then(|i| sv_zt.get(i).copied()),
        tolerance_z_tilde: tol_zt,
        policy,
    })
}

/// How the per-sensor data are gathered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollectionMode {
    /// One run records every evaluated sensor.
    #[default]
    Concurrent,
    /// A fresh run per evaluated sensor, excitation seed offset by position.
    Sequential,
}

/// How observability of the chosen set is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservabilityPolicy {
    /// Report the verdict only.
    #[default]
    Report,
    /// Start from the seed set, which counts toward the cardinality.
    Seed,
    /// Keep adding the next-best sensor until the set verifies observable.
    Relax,
}

/// Everything [`run_selection`] needs besides the data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Seed sensors `γ̂` (zero-based).
    pub seed_sensors: SelectionIndex,
    /// Sensors eligible for selection; all sensors when `None`.
    #[serde(default)]
    pub candidates: Option<SelectionIndex>,
    /// Target cardinality `p'` of the final set.
    pub cardinality: usize,
    pub metric: Metric,
    pub assembly: AssemblyConfig,
    pub excitation: ExcitationConfig,
    #[serde(default)]
    pub mode: CollectionMode,
    #[serde(default)]
    pub observability: ObservabilityPolicy,
    #[serde(default)]
    pub obs_tol: TolPolicy,
    /// Eigenvalues at or below this make a log-det `-inf`.
    #[serde(default = "default_floor")]
    pub logdet_floor: f64,
    /// Supplied only by tests and oracle-backed runs.
    #[serde(default)]
    pub state_dim: Option<usize>,
}

fn default_floor() -> f64 {
    LOGDET_EIGEN_FLOOR
}

/// Where the data come from.
pub enum DataSource<'a> {
    /// Simulate this plant (the simulator is the only reader of its matrices).
    Plant(&'a LtiSystem),
    /// A recorded run; `eval_sensors` names the rows of `y_tilde`.
    Recorded { traj: &'a Trajectory, eval_sensors: &'a SelectionIndex },
}

/// Wall-clock split of a run, in seconds. Kept out of [`SelectionResult`] so
/// that result files are reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub collect: f64,
    pub assemble: f64,
    pub pinv: f64,
    pub scoring: f64,
    pub selection: f64,
    pub verify: f64,
}

/// Choice made at one finite-horizon length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSelection {
    pub steps: usize,
    /// Sensor numbers, counted from 1.
    pub chosen: Vec<usize>,
    #[serde(with = "crate::serde_float::vec")]
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub metric: Metric,
    /// Sensor numbers, counted from 1.
    pub chosen: Vec<usize>,
    pub seed_sensors: Vec<usize>,
    /// Evaluated sensors (counted from 1), aligned with `scores`.
    pub evaluated: Vec<usize>,
    /// Singleton metric per evaluated sensor.
    #[serde(with = "crate::serde_float::vec")]
    pub scores: Vec<f64>,
    /// Metric of the chosen set from the summed cost blocks.
    #[serde(with = "crate::serde_float")]
    pub subset_metric: f64,
    pub observability: Option<ObservabilityVerdict>,
    pub policy: ObservabilityPolicy,
    pub mode: CollectionMode,
    /// Rank of the (first) regressor matrix.
    pub rank: RankReport,
    /// Greedy had to fall back to the trace key at some step.
    pub trace_fallback: bool,
    pub warnings: Vec<String>,
    /// Finite horizons only: the choice at every `t = 1..=T`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_step: Option<Vec<StepSelection>>,
    /// `m x m` cost block of every evaluated sensor at the metric's horizon.
    #[serde(skip)]
    pub blocks: Vec<DMatrix<f64>>,
    #[serde(skip)]
    pub timings: Timings,
}

impl SelectionResult {
    pub fn chosen_index(&self, p: usize) -> Result<SelectionIndex> {
        SelectionIndex::from_one_based(&self.chosen, p)
    }

    /// `sensor,score,rank,chosen` rows; rank 1 is the best score.
    pub fn write_scores_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let rank_pos = select_topk(&self.scores, self.scores.len())?;
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| {
            self.scores[b]
                .partial_cmp(&self.scores[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        debug_assert_eq!(rank_pos.len(), order.len());
        let mut rank = vec![0; self.scores.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r + 1;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sensor", "score", "rank", "chosen"])?;
        for (i, &s) in self.evaluated.iter().enumerate() {
            w.write_record([
                s.to_string(),
                fmt_float(self.scores[i]),
                rank[i].to_string(),
                self.chosen.contains(&s).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal, with `inf`/`-inf`/`nan` spelled out.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Per-sensor cost blocks at one or several horizons, with bookkeeping.
struct Scored {
    /// `blocks[s][i]`: block of evaluated sensor `i` at step `s`; a single
    /// step for discounted metrics.
    blocks: Vec<Vec<DMatrix<f64>>>,
    rank: RankReport,
    warnings: Vec<String>,
}

fn score_trajectory(traj: &Trajectory, cfg: &PipelineConfig, timings: &mut Timings) -> Result<Scored> {
    use rayon::prelude::*;
    let t0 = Instant::now();
    match cfg.metric.horizon {
        Horizon::Infinite { discount } => {
            let b = assemble_inf(traj, &cfg.assembly, discount)?;
            timings.assemble += t0.elapsed().as_secs_f64() - b.pinv_seconds;
            timings.pinv += b.pinv_seconds;
            let t1 = Instant::now();
            let ests: Vec<_> = (0..b.sensors())
                .into_par_iter()
                .map(|j| estimate_inf(&b, j).map(|e| e.cost_block))
                .collect::<Result<_>>()?;
            timings.scoring += t1.elapsed().as_secs_f64();
            Ok(Scored { blocks: vec![ests], rank: b.rank.clone(), warnings: b.warnings.clone() })
        }
        Horizon::Finite { steps } => {
            if steps == 0 {
                return Err(Error::Config("finite horizon needs T >= 1".into()));
            }
            let b = assemble_fin(traj, &cfg.assembly)?;
            timings.assemble += t0.elapsed().as_secs_f64() - b.pinv_seconds;
            timings.pinv += b.pinv_seconds;
            let t1 = Instant::now();
            let seqs = estimate_fin_batch(&b, steps)?;
            timings.scoring += t1.elapsed().as_secs_f64();
            let blocks = (1..=steps).map(|t| seqs.iter().map(|s| s.cost_blocks[t].clone()).collect()).collect();
            Ok(Scored { blocks, rank: b.rank.clone(), warnings: b.warnings.clone() })
        }
    }
}

fn collect(sys: &LtiSystem, exc: &ExcitationConfig, hat: &SelectionIndex, eval: &SelectionIndex) -> Result<Trajectory> {
    let u = generate_excitation(exc, sys.m());
    simulate(sys, &u, hat, eval)
}

/// Picks from candidate positions `pool` (into the evaluated list) given the
/// blocks at one horizon. Returns sorted positions and whether greedy fell
/// back to the trace key.
fn choose(
    blocks: &[DMatrix<f64>],
    kind: MetricKind,
    pool: &[usize],
    seed: &[usize],
    card: usize,
    floor: f64,
) -> Result<(Vec<usize>, bool)> {
    let extra = card.checked_sub(seed.len()).ok_or_else(|| {
        Error::InvalidSelection(format!("cardinality {card} smaller than seed set of {}", seed.len()))
    })?;
    let open: Vec<usize> = pool.iter().copied().filter(|j| !seed.contains(j)).collect();
    if extra > open.len() {
        return Err(Error::InvalidSelection(format!("cannot add {extra} sensors from {} candidates", open.len())));
    }
    match kind {
        MetricKind::Trace => {
            let scores: Vec<f64> = open.iter().map(|&j| blocks[j].trace()).collect();
            let mut out: Vec<usize> = seed.to_vec();
            out.extend(select_topk(&scores, extra)?.into_iter().map(|i| open[i]));
            out.sort_unstable();
            Ok((out, false))
        }
        MetricKind::LogDet => {
            // Restrict greedy to seed ∪ open; positions map back afterwards.
            let mut local: Vec<usize> = seed.to_vec();
            local.extend_from_slice(&open);
            let sub: Vec<DMatrix<f64>> = local.iter().map(|&j| blocks[j].clone()).collect();
            let seed_local: Vec<usize> = (0..seed.len()).collect();
            let g = select_greedy_logdet_with_floor(&sub, card, &seed_local, floor)?;
            let mut out: Vec<usize> = g.order.iter().map(|&i| local[i]).collect();
            out.sort_unstable();
            Ok((out, g.trace_fallback))
        }
    }
}

fn subset_value(blocks: &[DMatrix<f64>], chosen: &[usize], kind: MetricKind, floor: f64) -> f64 {
    let m = blocks[0].nrows();
    let mut sum = DMatrix::zeros(m, m);
    for &j in chosen {
        sum += &blocks[j];
    }
    kind.evaluate(&sum, floor)
}

/// Collect, assemble, estimate every evaluated sensor, select, verify.
pub fn run_selection(source: DataSource<'_>, cfg: &PipelineConfig) -> Result<SelectionResult> {
    let mut timings = Timings::default();
    if let Horizon::Infinite { discount } = cfg.metric.horizon {
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::Config(format!("discount must lie in (0, 1), got {discount}")));
        }
    }
    let p = match &source {
        DataSource::Plant(sys) => sys.p(),
        DataSource::Recorded { eval_sensors, .. } => eval_sensors.p(),
    };
    if cfg.seed_sensors.p() != p {
        return Err(Error::dims("seed sensors", p, cfg.seed_sensors.p()));
    }
    if let DataSource::Recorded { traj, eval_sensors } = &source {
        if traj.q() != eval_sensors.len() {
            return Err(Error::dims("recorded evaluated channel", eval_sensors.len(), traj.q()));
        }
    }
    let candidates = cfg.candidates.clone().unwrap_or_else(|| SelectionIndex::all(p));
    let use_seed = cfg.observability == ObservabilityPolicy::Seed;

    // Evaluated sensors: candidates plus, when seeding, the seed sensors.
    let eval = match &source {
        DataSource::Plant(_) => {
            if use_seed {
                candidates.union(&cfg.seed_sensors)?
            } else {
                candidates.clone()
            }
        }
        DataSource::Recorded { eval_sensors, .. } => (*eval_sensors).clone(),
    };
    let pos_of = |j: usize| -> Result<usize> {
        eval.position(j)
            .ok_or_else(|| Error::InvalidSelection(format!("sensor {} was not recorded", j + 1)))
    };
    let pool: Vec<usize> = candidates.indices().iter().map(|&j| pos_of(j)).collect::<Result<_>>()?;
    let seed_pos: Vec<usize> = if use_seed {
        cfg.seed_sensors.indices().iter().map(|&j| pos_of(j)).collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    // Scoring.
    let (scored, traj_for_verify) = match (&source, cfg.mode) {
        (DataSource::Plant(sys), CollectionMode::Concurrent) => {
            let t = Instant::now();
            let traj = collect(sys, &cfg.excitation, &cfg.seed_sensors, &eval)?;
            timings.collect += t.elapsed().as_secs_f64();
            (score_trajectory(&traj, cfg, &mut timings)?, Some(traj))
        }
        (DataSource::Plant(sys), CollectionMode::Sequential) => {
            let mut merged: Option<Scored> = None;
            for (i, &j) in eval.indices().iter().enumerate() {
                let mut exc = cfg.excitation.clone();
                exc.seed = exc.seed.wrapping_add(i as u64);
                let t = Instant::now();
                let traj = collect(sys, &exc, &cfg.seed_sensors, &SelectionIndex::singleton(j, p)?)?;
                timings.collect += t.elapsed().as_secs_f64();
                let s = score_trajectory(&traj, cfg, &mut timings)?;
                match merged.as_mut() {
                    None => merged = Some(s),
                    Some(acc) => {
                        for (dst, src) in acc.blocks.iter_mut().zip(s.blocks) {
                            dst.extend(src);
                        }
                        for w in s.warnings {
                            if !acc.warnings.contains(&w) {
                                acc.warnings.push(w);
                            }
                        }
                        if s.rank.numerical_rank < acc.rank.numerical_rank {
                            acc.rank = s.rank;
                        }
                    }
                }
            }
            // Verification data: one more run recording every evaluated sensor.
            let mut exc = cfg.excitation.clone();
            exc.seed = exc.seed.wrapping_add(eval.len() as u64);
            let traj = collect(sys, &exc, &cfg.seed_sensors, &eval)?;
            (merged.expect("nonempty evaluated set"), Some(traj))
        }
        (DataSource::Recorded { traj, .. }, CollectionMode::Concurrent) => {
            (score_trajectory(traj, cfg, &mut timings)?, Some((*traj).clone()))
        }
        (DataSource::Recorded { .. }, CollectionMode::Sequential) => {
            return Err(Error::Config("sequential collection needs a plant to re-run".into()));
        }
    };

    let t_sel = Instant::now();
    let kind = cfg.metric.kind;
    let floor = cfg.logdet_floor;
    let mut fallback = false;
    let mut per_step = Vec::new();
    let mut final_choice = Vec::new();
    for (s, blocks) in scored.blocks.iter().enumerate() {
        let (choice, fb) = choose(blocks, kind, &pool, &seed_pos, cfg.cardinality, floor)?;
        fallback |= fb;
        if cfg.metric.horizon.is_infinite() {
            final_choice = choice;
        } else {
            per_step.push(StepSelection {
                steps: s + 1,
                chosen: choice.iter().map(|&i| eval.indices()[i] + 1).collect(),
                scores: blocks.iter().map(|b| kind.evaluate(b, floor)).collect(),
            });
            final_choice = choice;
        }
    }
    let blocks = scored.blocks.last().expect("at least one horizon").clone();
    timings.selection += t_sel.elapsed().as_secs_f64();

    // Observability of the chosen set, relaxing the cardinality if asked.
    let t_ver = Instant::now();
    let mut warnings = scored.warnings.clone();
    let verdict_for = |chosen: &[usize]| -> Result<Option<ObservabilityVerdict>> {
        let Some(traj) = traj_for_verify.as_ref() else { return Ok(None) };
        let restricted = traj.restrict_eval(chosen);
        match assemble_obs_matrices(&restricted, cfg.assembly.history) {
            Ok(obs) => Ok(Some(verify_observability(&obs, cfg.obs_tol, cfg.state_dim)?)),
            Err(Error::InsufficientSamples { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let mut verdict = verdict_for(&final_choice)?;
    if cfg.observability == ObservabilityPolicy::Relax {
        let ranked: Vec<usize> = {
            let scores: Vec<f64> = pool.iter().map(|&j| kind.evaluate(&blocks[j], floor)).collect();
            select_topk_ordered(&scores).into_iter().map(|i| pool[i]).collect()
        };
        let mut extra = ranked.into_iter();
        while !verdict.as_ref().is_some_and(|v| v.is_observable()) {
            let Some(j) = extra.by_ref().find(|j| !final_choice.contains(j)) else {
                warnings.push("cardinality relaxation exhausted the candidates without an observable set".into());
                break;
            };
            final_choice.push(j);
            final_choice.sort_unstable();
            verdict = verdict_for(&final_choice)?;
        }
        if final_choice.len() > cfg.cardinality {
            warnings.push(format!(
                "cardinality relaxed from {} to {} to reach an observable set",
                cfg.cardinality,
                final_choice.len()
            ));
        }
    }
    if verdict.is_none() {
        warnings.push("too few samples to verify observability of the chosen set".into());
    }
    timings.verify += t_ver.elapsed().as_secs_f64();
    if fallback {
        warnings.push("greedy log-det met only -inf marginals at some step; the trace of the sum decided".into());
    }

    let scores: Vec<f64> = blocks.iter().map(|b| kind.evaluate(b, floor)).collect();
    Ok(SelectionResult {
        metric: cfg.metric,
        chosen: final_choice.iter().map(|&i| eval.indices()[i] + 1).collect(),
        seed_sensors: cfg.seed_sensors.one_based(),
        evaluated: eval.one_based(),
        subset_metric: subset_value(&blocks, &final_choice, kind, floor),
        scores,
        observability: verdict,
        policy: cfg.observability,
        mode: cfg.mode,
        rank: scored.rank,
        trace_fallback: fallback,
        warnings,
        per_step: if per_step.is_empty() { None } else { Some(per_step) },
        blocks,
        timings,
    })
}

/// Positions sorted by descending score, ties to the lower position.
fn select_topk_ordered(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    order
}
