use std::path::Path;
use std::time::Instant;

use mimo_placement::convex;
use mimo_placement::greedy::{greedy_logdet, greedy_mfp, GreedyOptions, LogDetOptions};
use mimo_placement::measures::FrameKernel;
use mimo_placement::oracle::{
    self, crlb_summary, exhaustive_search, AmplitudeModel, ExhaustiveOptions, MleOptions, SearchGrid,
    TransmitUnit, DB_FLOOR,
};
use mimo_placement::verify::{self, Hooks, VerifyOptions, VerifyReport};
use mimo_placement::{Budgets, Criterion, FimCache, Selection};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::job::{Job, SolverKind};
use crate::output::{num, write_json, Table};
use crate::CliError;

/// Caches shared by every design point of a job.
pub struct Prepared {
    pub cache: FimCache,
    pub kernel: Option<FrameKernel>,
}

impl Prepared {
    pub fn new(job: &Job) -> Result<Self, CliError> {
        let cache = FimCache::build(&job.radar, &job.grid, true)?;
        let kernel = match job.config.solver {
            SolverKind::GreedyMfp => Some(FrameKernel::build(
                &job.radar,
                &job.grid,
                job.config.criterion.frame_norm(),
            )?),
            _ => None,
        };
        Ok(Self { cache, kernel })
    }
}

/// Solver output before it is written anywhere.
#[derive(Clone, Debug)]
pub struct Solved {
    pub selection: Selection,
    pub objective: f64,
    pub stats: serde_json::Value,
}

/// Runs the configured solver at the job's budgets.
pub fn solve(job: &Job, prep: &Prepared) -> Result<Solved, CliError> {
    job.check_combination()?;
    let crit = &job.config.criterion;
    let budgets = job.budgets();
    let opts = &job.config.options;
    let cache = &prep.cache;
    let out = match job.config.solver {
        SolverKind::GreedyMfp => {
            let kernel = prep.kernel.as_ref().expect("kernel is built for greedy_mfp");
            let g = greedy_mfp(kernel, crit, budgets, GreedyOptions { lazy: opts.lazy })?;
            Solved {
                objective: kernel.aggregated(&g.selection, crit.aggregation)?,
                stats: json!({
                    "complement_value": g.value,
                    "removed": g.removed,
                    "evaluations": g.evaluations,
                    "iterations": g.iterations,
                    "lazy": opts.lazy,
                }),
                selection: g.selection,
            }
        }
        SolverKind::GreedyLogdet => {
            let rx = vec![true; job.radar.receivers];
            let l = greedy_logdet(
                cache,
                crit,
                budgets.pulses,
                &rx,
                LogDetOptions {
                    lazy: opts.lazy,
                    direction: opts.direction,
                },
            )?;
            Solved {
                objective: crit.evaluate(cache, &l.selection)?,
                stats: json!({
                    "epsilon": crit.resolve_epsilon(cache),
                    "direction": l.direction,
                    "trajectory": l.trajectory,
                    "values": l.values,
                    "evaluations": l.evaluations,
                    "lazy": opts.lazy,
                }),
                selection: l.selection,
            }
        }
        SolverKind::Convex => {
            let (relaxed, rounded) = convex::design(cache, crit, budgets, opts.rounds, job.config.seed)?;
            Solved {
                objective: crit.evaluate(cache, &rounded.selection)?,
                stats: json!({
                    "gamma_star": relaxed.gamma_star,
                    "rounded_gamma": rounded.gamma,
                    "winning_round": rounded.round,
                    "rounds": opts.rounds,
                    "relaxed_weights": relaxed.w,
                    "solver": relaxed.stats,
                }),
                selection: rounded.selection,
            }
        }
        SolverKind::Exhaustive => {
            let unit = match job.config.budgets.k_i {
                Some(k) => TransmitUnit::Transmitters(k),
                None => TransmitUnit::Pulses,
            };
            let e = exhaustive_search(
                cache,
                crit,
                budgets,
                ExhaustiveOptions {
                    cap: opts.enumeration_cap,
                    unit,
                },
            )?;
            Solved {
                objective: e.objective,
                stats: json!({ "evaluated": e.evaluated as u64 }),
                selection: e.selection,
            }
        }
    };
    Ok(out)
}

/// `selection.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<u8>>,
    pub b: Vec<u8>,
    #[serde(rename = "K_P")]
    pub k_p: usize,
    #[serde(rename = "K_R")]
    pub k_r: usize,
    #[serde(rename = "K_I", default, skip_serializing_if = "Option::is_none")]
    pub k_i: Option<usize>,
    /// Criterion value of the selection; `null` when unbounded.
    pub objective: Option<f64>,
    pub criterion: Criterion,
    pub solver: SolverKind,
    pub seed: u64,
    pub stats: serde_json::Value,
    pub config_sha256: String,
}

/// Only `A` and `b` are needed to evaluate a selection.
#[derive(Deserialize)]
struct SelectionMasks {
    #[serde(rename = "A")]
    a: Vec<Vec<u8>>,
    b: Vec<u8>,
}

pub fn read_selection(path: &Path, job: &Job) -> Result<Selection, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    let m: SelectionMasks = serde_json::from_str(&text).map_err(|e| CliError::Schema(e.to_string()))?;
    let sel = Selection::from_matrix(&m.a, &m.b).map_err(|e| CliError::Schema(e.to_string()))?;
    sel.check_dims(&job.radar).map_err(|e| CliError::Schema(e.to_string()))?;
    Ok(sel)
}

fn write_crlb(job: &Job, cache: &FimCache, sel: &Selection, path: &Path) -> Result<(), CliError> {
    let mut t = Table::new(&job.hash, job.config.seed, &["du", "dv", "trace", "max_eigenvalue", "logdet"]);
    for (f, p) in cache.assemble(sel)?.iter().zip(&job.grid.points) {
        let (tr, lmax, fim_logdet) = crlb_summary(f);
        t.row([num(p.du), num(p.dv), num(tr), num(lmax), num(-fim_logdet)]);
    }
    t.finish(path)
}

/// Runs the solver and writes `selection.json` and `crlb.csv` into `out`.
pub fn design(job: &Job, out: &Path) -> Result<SelectionFile, CliError> {
    let prep = Prepared::new(job)?;
    let solved = solve(job, &prep)?;
    let budgets = job.budgets();
    let file = SelectionFile {
        a: solved.selection.pulse_matrix(),
        b: solved.selection.receiver_vector(),
        k_p: solved.selection.count_pulses(),
        k_r: budgets.receivers,
        k_i: job.config.budgets.k_i,
        objective: solved.objective.is_finite().then_some(solved.objective),
        criterion: job.config.criterion,
        solver: job.config.solver,
        seed: job.config.seed,
        stats: solved.stats,
        config_sha256: job.hash.clone(),
    };
    write_json(&out.join("selection.json"), &file)?;
    write_crlb(job, &prep.cache, &solved.selection, &out.join("crlb.csv"))?;
    Ok(file)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub budgets: Budgets,
    pub objective: f64,
    pub crlb_trace_max: f64,
    pub crlb_trace_mean: f64,
    pub seconds: f64,
    pub selection: Selection,
}

pub const SWEEP_HEADER: [&str; 7] = [
    "K_P",
    "K_R",
    "objective",
    "crlb_trace_max",
    "crlb_trace_mean",
    "seconds",
    "status",
];

/// One design per budget pair, written to `sweep.csv`. The caches are built
/// once. A failing point stops the sweep; the rows so far are written with an
/// `error` row flagging the failure.
pub fn sweep(job: &Job, budgets: &[Budgets], out: &Path) -> Result<Vec<SweepRow>, CliError> {
    if budgets.is_empty() {
        return Err(CliError::Budgets("empty budget list".into()));
    }
    if budgets.windows(2).any(|w| (w[0].pulses, w[0].receivers) > (w[1].pulses, w[1].receivers)) {
        return Err(CliError::Budgets("budget list must be sorted ascending".into()));
    }
    let prep = Prepared::new(job)?;
    let mut table = Table::new(&job.hash, job.config.seed, &SWEEP_HEADER);
    let mut rows = Vec::new();
    for &b in budgets {
        let started = Instant::now();
        let outcome = job.with_budgets(b).and_then(|point| {
            let s = solve(&point, &prep)?;
            let traces: Vec<f64> = prep.cache.assemble(&s.selection)?.iter().map(oracle::crlb_trace_of).collect();
            Ok((s, traces))
        });
        match outcome {
            Ok((s, traces)) => {
                let row = SweepRow {
                    budgets: b,
                    objective: s.objective,
                    crlb_trace_max: traces.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    crlb_trace_mean: traces.iter().sum::<f64>() / traces.len() as f64,
                    seconds: started.elapsed().as_secs_f64(),
                    selection: s.selection,
                };
                table.row([
                    row.budgets.pulses.to_string(),
                    row.budgets.receivers.to_string(),
                    num(row.objective),
                    num(row.crlb_trace_max),
                    num(row.crlb_trace_mean),
                    num(row.seconds),
                    "ok".to_string(),
                ]);
                rows.push(row);
            }
            Err(e) => {
                let msg = e.to_string();
                table.row([
                    b.pulses.to_string(),
                    b.receivers.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    num(started.elapsed().as_secs_f64()),
                    format!("error: {msg}"),
                ]);
                table.finish(&out.join("sweep.csv"))?;
                return Err(CliError::SweepAborted {
                    k_p: b.pulses,
                    k_r: b.receivers,
                    done: rows.len(),
                    source: Box::new(e),
                });
            }
        }
    }
    table.finish(&out.join("sweep.csv"))?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleFile {
    pub config_sha256: String,
    pub seed: u64,
    #[serde(flatten)]
    pub report: oracle::MleReport,
}

/// Writes the ambiguity traces of the selection in `selection_path` and, when
/// configured, the Monte-Carlo estimator error.
pub fn evaluate(job: &Job, selection_path: &Path, out: &Path) -> Result<Option<MleFile>, CliError> {
    let sel = read_selection(selection_path, job)?;
    if sel.is_empty() {
        return Err(mimo_placement::Error::EmptySelection.into());
    }
    let cfg = &job.radar;
    let spec = &job.config.evaluate;
    let vmax = cfg.wavelength() / (4.0 * cfg.pri);
    let dv = spec.velocity.map_or_else(|| oracle::axis(-vmax, vmax, 801), |a| a.values());
    let du = spec.angle.map_or_else(|| oracle::axis(-1.0, 1.0, 801), |a| a.values());
    let floor = |db: f64| db.max(DB_FLOOR);
    let (hash, seed) = (&job.hash, job.config.seed);

    let v = oracle::ambiguity_velocity(cfg, &sel, &dv)?;
    let mut t = Table::new(hash, seed, &["dv", "db"]);
    for (x, db) in v.axis.iter().zip(&v.db) {
        t.row([num(*x), num(floor(*db))]);
    }
    t.finish(&out.join("af_velocity.csv"))?;

    let u = oracle::beampattern(cfg, &sel, &du)?;
    let mut t = Table::new(hash, seed, &["du", "db"]);
    for (x, db) in u.axis.iter().zip(&u.db) {
        t.row([num(*x), num(floor(*db))]);
    }
    t.finish(&out.join("beampattern.csv"))?;

    let n = spec.joint_points.unwrap_or(101);
    let ju = oracle::axis(du[0], du[du.len() - 1], n);
    let jv = oracle::axis(dv[0], dv[dv.len() - 1], n);
    let s = oracle::ambiguity_joint(cfg, &sel, &ju, &jv)?;
    let mut t = Table::new(hash, seed, &["du", "dv", "db"]);
    for (a, row) in s.db.iter().enumerate() {
        for (b, db) in row.iter().enumerate() {
            t.row([num(s.du[a]), num(s.dv[b]), num(floor(*db))]);
        }
    }
    t.finish(&out.join("af_joint.csv"))?;

    let Some(mle) = &spec.mle else {
        return Ok(None);
    };
    let search = SearchGrid {
        u: mle.search_u.values(),
        v: mle.search_v.values(),
    };
    let options = MleOptions {
        amplitudes: if mle.least_squares_amplitudes {
            AmplitudeModel::LeastSquares
        } else {
            AmplitudeModel::Known
        },
        ..MleOptions::default()
    };
    let report = oracle::mle_mse(cfg, &sel, &mle.targets, mle.trials, seed, &search, options)?;
    let file = MleFile {
        config_sha256: hash.clone(),
        seed,
        report,
    };
    write_json(&out.join("mle_mse.json"), &file)?;
    Ok(Some(file))
}

/// Runs the self-check suite; writes `verify.json` when `out` is given.
pub fn verify(options: &VerifyOptions, hooks: &Hooks<'_>, out: Option<&Path>) -> Result<VerifyReport, CliError> {
    let report = verify::run(options, hooks);
    if let Some(dir) = out {
        write_json(&dir.join("verify.json"), &json!({ "options": options, "report": report }))?;
    }
    Ok(report)
}
