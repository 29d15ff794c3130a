use std::path::{Path, PathBuf};

use serde::Serialize;
use survfair::copula::{route1_conditional, route2_cif_bands, route2_population, CopulaFamily, CopulaSpec, EnvelopeConfig};
use survfair::decompose::{decompose_cr, decompose_difference, decompose_ratio, DecompositionSeries, EstimatorKind, PoSet};
use survfair::dr::{crossfit_dr, DrConfig};
use survfair::identify::{fit_plugin, quantile_grid};
use survfair::nuisance::{LearnerKind, NuisanceConfig, Nuisances, Target, TreeParams};
use survfair::sim::{icu_analogue, readmission_analogue, sample_cohort, SCMSpec};
use survfair::survival::{union_breakpoints, RiskTable};
use survfair::{Cohort, FunctionalKind, Query};

use crate::args::{CurvesArgs, DecomposeArgs, Estimator, Example, Family, Learner, Mode, SimulateArgs};
use crate::error::CliError;
use crate::output::{file_digest, Meta, Outputs};

fn out_dir(out: &Option<PathBuf>) -> PathBuf {
    out.clone().unwrap_or_else(|| PathBuf::from("survfair-out"))
}

fn read_input(path: &Option<PathBuf>) -> Result<(Vec<u8>, PathBuf), CliError> {
    let path = path.clone().ok_or_else(|| CliError::Usage("--input is required".into()))?;
    let bytes = std::fs::read(&path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok((bytes, path))
}

fn parse_functional(s: Option<&str>) -> Result<FunctionalKind, CliError> {
    s.unwrap_or("survival").parse().map_err(|e: survfair::Error| CliError::Usage(e.to_string()))
}

#[derive(Serialize)]
struct SimulateSettings {
    source: String,
    tau: Option<f64>,
    n: usize,
    seed: u64,
}

pub fn simulate(args: SimulateArgs) -> Result<Vec<PathBuf>, CliError> {
    let n = args.n.ok_or_else(|| CliError::Usage("--n is required".into()))?;
    if n == 0 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    let (spec, source) = match (&args.spec, args.example) {
        (Some(path), _) => {
            if args.tau.is_some() {
                return Err(CliError::Usage("--tau applies to --example readmission only".into()));
            }
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
            let spec = SCMSpec::from_json_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            (spec, format!("file:{}", file_digest(text.as_bytes())))
        }
        (None, Some(Example::Readmission)) => (readmission_analogue(args.tau.unwrap_or(0.5))?, "readmission".to_string()),
        (None, Some(Example::Icu) | None) => {
            if args.tau.is_some() {
                return Err(CliError::Usage("--tau applies to --example readmission only".into()));
            }
            (icu_analogue(), "icu".to_string())
        }
    };
    let tau = (source == "readmission").then(|| args.tau.unwrap_or(0.5));
    let seed = args.seed.unwrap_or(0);
    let meta = Meta::new("simulate", &SimulateSettings { source, tau, n, seed })?;
    let cohort = sample_cohort(&spec, n, seed)?;
    let mut out = Outputs::new(&out_dir(&args.out), meta);
    out.csv("cohort.csv", |buf, c| cohort.write_csv(buf, c))?;
    out.json("spec.json", &spec)?;
    out.write()
}

#[derive(Serialize)]
struct CurvesSettings {
    input_sha256: String,
    functional: FunctionalKind,
    grid: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct CurvesDiagnostics {
    status: &'static str,
    n_rows: usize,
    n_x0: usize,
    n_x1: usize,
}

pub fn curves(args: CurvesArgs) -> Result<Vec<PathBuf>, CliError> {
    let (bytes, path) = read_input(&args.input)?;
    let functional = parse_functional(args.functional.as_deref())?;
    let cause = match functional {
        FunctionalKind::Survival | FunctionalKind::AllCauseSurvival => None,
        FunctionalKind::Cif { cause } => Some(cause),
        other => return Err(CliError::Usage(format!("curves supports survival, cif:K and all_cause_survival, not {}", other.label()))),
    };
    let meta = Meta::new("curves", &CurvesSettings { input_sha256: file_digest(&bytes), functional, grid: args.grid.clone() })?;
    let cohort = Cohort::read_csv(&bytes[..], None).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    functional.validate(cohort.n_causes())?;
    cohort.require_both_groups()?;
    let mut group_curves = Vec::with_capacity(2);
    for g in 0..2u8 {
        let idx: Vec<usize> = (0..cohort.len()).filter(|&i| cohort.x()[i] == g).collect();
        let sub = cohort.subset(&idx);
        let table = RiskTable::new(sub.times(), sub.deltas(), sub.n_causes())?;
        group_curves.push(match (functional, cause) {
            (_, Some(k)) => table.cif(k)?,
            (FunctionalKind::AllCauseSurvival, _) => table.all_cause_survival()?,
            _ => table.kaplan_meier_cause(1)?,
        });
    }
    let grid = match &args.grid {
        Some(g) => {
            survfair::identify::check_grid(g).map_err(|e| CliError::Usage(e.to_string()))?;
            g.clone()
        }
        None => {
            let mut g = union_breakpoints(&[&group_curves[0], &group_curves[1]]);
            if g.first() != Some(&0.0) {
                g.insert(0, 0.0);
            }
            g
        }
    };
    let prefix = if cause.is_some() { "cif" } else { "s" };
    let mut out = Outputs::new(&out_dir(&args.out), meta);
    out.csv("curves.csv", |buf, comments| {
        use std::io::Write;
        for c in comments {
            writeln!(buf, "# {c}")?;
        }
        writeln!(buf, "t,{prefix}_x0,{prefix}_x1,tv")?;
        for &t in &grid {
            let (a, b) = (group_curves[0].at(t), group_curves[1].at(t));
            writeln!(buf, "{t},{a},{b},{}", b - a)?;
        }
        Ok(())
    })?;
    let diag = CurvesDiagnostics { status: "ok", n_rows: cohort.len(), n_x0: cohort.count_group(0), n_x1: cohort.count_group(1) };
    out.json("diagnostics.json", &diag)?;
    out.write()
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
enum GridSpec {
    Explicit(Vec<f64>),
    Quantiles(usize),
}

/// Every setting that influences the numbers, with defaults filled in.
#[derive(Debug, Clone, Serialize)]
struct DecomposeSettings {
    input_sha256: String,
    mode: Mode,
    estimator: Estimator,
    functional: FunctionalKind,
    grid: GridSpec,
    folds: usize,
    learner: Learner,
    censoring_learner: Learner,
    tree: TreeParams,
    clip: f64,
    epsilon: f64,
    copula: Family,
    tau: Vec<f64>,
    samples: usize,
    seed: u64,
    ratio: bool,
    x0: u8,
    x1: u8,
}

fn learner_kind(l: Learner, tree: TreeParams) -> LearnerKind {
    match l {
        Learner::Stratified => LearnerKind::Stratified,
        Learner::Tree => LearnerKind::LogrankTreeEnsemble(tree),
        Learner::Constant => LearnerKind::ConstantHazard { rate: None },
    }
}

fn family(f: Family) -> CopulaFamily {
    match f {
        Family::Independence => CopulaFamily::Independence,
        Family::Clayton => CopulaFamily::Clayton,
        Family::Gumbel => CopulaFamily::Gumbel,
        Family::Frank => CopulaFamily::Frank,
    }
}

fn resolve(args: &DecomposeArgs, bytes: &[u8]) -> Result<DecomposeSettings, CliError> {
    let mode = args.mode.unwrap_or(Mode::Nic);
    let estimator = args.estimator.unwrap_or(Estimator::Plugin);
    let functional = parse_functional(args.functional.as_deref())?;
    let tau = args.tau.clone().unwrap_or_default();
    if (mode == Mode::Ic) != !tau.is_empty() {
        return Err(CliError::Usage("--tau must be given exactly when --mode ic".into()));
    }
    if mode == Mode::Ic && functional != FunctionalKind::Survival {
        return Err(CliError::Usage("mode ic estimates survival only".into()));
    }
    if mode == Mode::Nic && estimator == Estimator::Dr && matches!(functional, FunctionalKind::Rmst { .. } | FunctionalKind::CumulativeHazard) {
        return Err(CliError::Usage(format!("no doubly-robust estimator for {}; use --estimator plugin", functional.label())));
    }
    let grid = match (&args.grid, args.grid_quantiles) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --grid or --grid-quantiles".into())),
        (Some(g), None) => {
            survfair::identify::check_grid(g).map_err(|e| CliError::Usage(e.to_string()))?;
            GridSpec::Explicit(g.clone())
        }
        (None, q) => GridSpec::Quantiles(q.unwrap_or(20)),
    };
    if matches!(grid, GridSpec::Quantiles(0)) {
        return Err(CliError::Usage("--grid-quantiles must be positive".into()));
    }
    let folds = args.folds.unwrap_or(2);
    if folds < 2 {
        return Err(CliError::Usage("--folds must be at least 2".into()));
    }
    let clip = args.clip.unwrap_or(0.01);
    if !(clip > 0.0 && clip < 0.5) {
        return Err(CliError::Usage("--clip must lie in (0, 0.5)".into()));
    }
    let epsilon = args.epsilon.unwrap_or(0.01);
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(CliError::Usage("--epsilon must lie in (0, 1)".into()));
    }
    let (x0, x1) = (args.x0.unwrap_or(0), args.x1.unwrap_or(1));
    if x0 > 1 || x1 > 1 || x0 == x1 {
        return Err(CliError::Usage("--x0 and --x1 must be distinct labels in {0, 1}".into()));
    }
    let copula = args.copula.unwrap_or(Family::Clayton);
    for &t in &tau {
        CopulaSpec::<f64>::new(family(copula), t).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let d = TreeParams::default();
    let tree = TreeParams { n_trees: args.trees.unwrap_or(d.n_trees), min_leaf: args.min_leaf.unwrap_or(d.min_leaf), max_depth: args.max_depth.unwrap_or(d.max_depth) };
    Ok(DecomposeSettings {
        input_sha256: file_digest(bytes),
        mode,
        estimator,
        functional,
        grid,
        folds,
        learner: args.learner.unwrap_or(Learner::Stratified),
        censoring_learner: args.censoring_learner.unwrap_or(Learner::Stratified),
        tree,
        clip,
        epsilon,
        copula,
        tau,
        samples: args.samples.unwrap_or(200),
        seed: args.seed.unwrap_or(0),
        ratio: args.ratio.unwrap_or(false),
        x0,
        x1,
    })
}

#[derive(Serialize)]
struct Bundle<'a> {
    mode: Mode,
    estimator: Estimator,
    curves: Vec<Facet<'a>>,
    decompositions: Vec<NamedSeries<'a>>,
}

#[derive(Serialize)]
struct Facet<'a> {
    name: String,
    curves: &'a PoSet<f64>,
}

#[derive(Serialize)]
struct NamedSeries<'a> {
    name: String,
    series: &'a DecompositionSeries<f64>,
}

#[derive(Serialize)]
struct Diagnostics<T: Serialize> {
    status: &'static str,
    n_rows: usize,
    n_x0: usize,
    n_x1: usize,
    grid_points: usize,
    details: T,
}

#[derive(Serialize)]
struct Failure {
    status: &'static str,
    error: String,
}

pub fn decompose(args: DecomposeArgs) -> Result<Vec<PathBuf>, CliError> {
    let (bytes, path) = read_input(&args.input)?;
    let settings = resolve(&args, &bytes)?;
    let meta = Meta::new("decompose", &settings)?;
    let dir = out_dir(&args.out);
    match run_decompose(&settings, &bytes, &path, &dir, meta.clone()) {
        Ok(files) => Ok(files),
        Err(e) => {
            let mut out = Outputs::new(&dir, meta);
            out.json("diagnostics.json", &Failure { status: "error", error: e.to_string() })?;
            out.write()?;
            Err(e)
        }
    }
}

fn run_decompose(s: &DecomposeSettings, bytes: &[u8], path: &Path, dir: &Path, meta: Meta) -> Result<Vec<PathBuf>, CliError> {
    let cohort = Cohort::read_csv(bytes, None).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    cohort.require_both_groups()?;
    if s.mode == Mode::Cr && cohort.n_causes() < 2 {
        return Err(CliError::Data(format!("mode cr needs at least 2 event causes, {} has {}", path.display(), cohort.n_causes())));
    }
    s.functional.validate(cohort.n_causes()).map_err(|e| CliError::Data(e.to_string()))?;
    let grid = match &s.grid {
        GridSpec::Explicit(g) => g.clone(),
        GridSpec::Quantiles(k) => quantile_grid(&cohort, *k)?,
    };
    let nuisance = NuisanceConfig {
        outcome_learner: learner_kind(s.learner, s.tree),
        censoring_learner: learner_kind(s.censoring_learner, s.tree),
        clip: s.clip,
        seed: s.seed,
        ..Default::default()
    };
    let dr = DrConfig { n_folds: s.folds, nuisance, seed: s.seed, floor: s.epsilon, ..Default::default() };
    let queries = Query::decomposition_set(s.x0, s.x1);
    let mut out = Outputs::new(dir, meta);
    let diag_head = |details| Diagnostics { status: "ok", n_rows: cohort.len(), n_x0: cohort.count_group(0), n_x1: cohort.count_group(1), grid_points: grid.len(), details };
    match s.mode {
        Mode::Nic => {
            let (po, details) = match s.estimator {
                Estimator::Plugin => {
                    let (po, nuis, diags) = fit_plugin(&cohort, &queries, s.functional, &grid, &nuisance)?;
                    (po, serde_json::json!({ "plugin": diags, "nuisance": nuis.report() }))
                }
                Estimator::Dr => {
                    let est = crossfit_dr(&cohort, &queries, s.functional, &grid, &dr)?;
                    (est.po, serde_json::json!({ "doubly_robust": est.diagnostics }))
                }
            };
            let diff = decompose_difference(&po, s.x0, s.x1)?;
            let ratio = if s.ratio { Some(decompose_ratio(&po, s.x0, s.x1)?) } else { None };
            for &q in &queries {
                out.csv(&format!("{}.csv", q.label()), |buf, c| po.write_curve_csv(q, buf, c))?;
            }
            out.csv("decomposition.csv", |buf, c| diff.write_csv(buf, c))?;
            let mut decompositions = vec![NamedSeries { name: "difference".into(), series: &diff }];
            if let Some(r) = &ratio {
                out.csv("decomposition_ratio.csv", |buf, c| r.write_csv(buf, c))?;
                decompositions.push(NamedSeries { name: "ratio".into(), series: r });
            }
            let bundle = Bundle { mode: s.mode, estimator: s.estimator, curves: vec![Facet { name: s.functional.label(), curves: &po }], decompositions };
            out.json("decomposition.json", &bundle)?;
            out.json("diagnostics.json", &diag_head(details))?;
        }
        Mode::Cr => {
            let kind = match s.estimator {
                Estimator::Plugin => EstimatorKind::Plugin,
                Estimator::Dr => EstimatorKind::DoublyRobust,
            };
            let cr = decompose_cr(&cohort, s.x0, s.x1, None, kind, &grid, &dr)?;
            for po in &cr.curves {
                let tag = match po.functional {
                    FunctionalKind::Cif { cause } => format!("cif{cause}"),
                    _ => "all_cause".to_string(),
                };
                for &q in &queries {
                    out.csv(&format!("{}_{tag}.csv", q.label()), |buf, c| po.write_curve_csv(q, buf, c))?;
                }
            }
            out.csv("decomposition.csv", |buf, c| cr.write_csv(buf, c))?;
            let curves = cr.curves.iter().map(|po| Facet { name: po.functional.label(), curves: po }).collect();
            let mut decompositions: Vec<NamedSeries<'_>> =
                cr.causes.iter().zip(&cr.per_cause).map(|(k, series)| NamedSeries { name: format!("cif{k}"), series }).collect();
            decompositions.push(NamedSeries { name: "all_cause".into(), series: &cr.all_cause });
            out.json("decomposition.json", &Bundle { mode: s.mode, estimator: s.estimator, curves, decompositions })?;
            let details = serde_json::json!({ "normalization_residual": cr.normalization_residual(), "doubly_robust": cr.dr_diagnostics });
            out.json("diagnostics.json", &diag_head(details))?;
        }
        Mode::Ic => {
            let mut series = Vec::with_capacity(s.tau.len());
            let mut pos = Vec::with_capacity(s.tau.len());
            let mut per_tau = Vec::new();
            match s.estimator {
                Estimator::Plugin => {
                    let nuis = Nuisances::fit(&cohort, Target::Event, false, &nuisance)?;
                    for &t in &s.tau {
                        let cop = CopulaSpec::new(family(s.copula), t)?;
                        let r1 = route1_conditional(&cohort, &cop, &nuis, &queries, &grid)?;
                        series.push(decompose_difference(&r1.po, s.x0, s.x1)?);
                        per_tau.push(serde_json::json!({ "tau": t, "clamped": r1.clamped, "fallbacks": r1.fallbacks, "max_width": r1.max_width }));
                        pos.push(r1.po);
                    }
                }
                Estimator::Dr => {
                    let env = EnvelopeConfig { n_samples: s.samples, seed: s.seed, ..Default::default() };
                    let bands = route2_cif_bands(&cohort, &queries, &grid, &dr, env.fine_points)?;
                    for &t in &s.tau {
                        let cop = CopulaSpec::new(family(s.copula), t)?;
                        let r2 = route2_population(&bands, &cop, &env)?;
                        let (d, envelopes) = r2.decompose(s.x0, s.x1)?;
                        out.csv(&format!("envelope_tau_{t}.csv"), |buf, c| r2.write_envelope_csv(buf, c, &envelopes))?;
                        let samples: Vec<usize> = r2.curves.iter().map(|c| c.accepted_samples).collect();
                        let corners: Vec<usize> = r2.curves.iter().map(|c| c.infeasible_corners).collect();
                        per_tau.push(serde_json::json!({ "tau": t, "accepted_samples": samples, "infeasible_corners": corners }));
                        series.push(d);
                        pos.push(r2.central_po()?);
                    }
                    per_tau.push(serde_json::json!({ "event": bands.event.diagnostics, "censoring": bands.censoring.diagnostics }));
                }
            }
            out.csv("decomposition.csv", |buf, comments| {
                use std::io::Write;
                for c in comments {
                    writeln!(buf, "# {c}")?;
                }
                writeln!(buf, "t,effect,estimate,se,lo,hi")?;
                for (t, d) in s.tau.iter().zip(&series) {
                    d.write_rows(buf, &format!("tau{t}_"))?;
                }
                Ok(())
            })?;
            for (t, po) in s.tau.iter().zip(&pos) {
                for &q in &queries {
                    out.csv(&format!("{}_tau{t}.csv", q.label()), |buf, c| po.write_curve_csv(q, buf, c))?;
                }
            }
            let curves = s.tau.iter().zip(&pos).map(|(t, po)| Facet { name: format!("tau{t}"), curves: po }).collect();
            let decompositions = s.tau.iter().zip(&series).map(|(t, d)| NamedSeries { name: format!("tau{t}"), series: d }).collect();
            out.json("decomposition.json", &Bundle { mode: s.mode, estimator: s.estimator, curves, decompositions })?;
            out.json("diagnostics.json", &diag_head(serde_json::Value::from(per_tau)))?;
        }
    }
    out.write()
}
