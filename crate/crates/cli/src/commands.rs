use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use optctrl::biharmonic::{deform_fast, weights_fast, ControlPositions};
use optctrl::mesh::medit::write_medit;
use optctrl::mesh::{generate_bend_targets, write_xyz, Hinge};
use optctrl::operators::cache::{self, CacheKey};
use optctrl::operators::{assemble_bilaplacian_matrix, default_epsilon};
use optctrl::search::{
    binomial, exhaustive_search, fps_baseline, optimize, random_search, NoObserver, EXHAUSTIVE_LIMIT,
};
use optctrl::{
    BilaplacianOperator, FitReport, FittingProblem, SearchConfig, Selector, Similarity, TargetSet,
    TetMesh, Vec3,
};

use crate::config::{Method, RunArgs, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{self, write_atomic};
use crate::report::{config_hash, to_json, Provenance, ReportJson};

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn parse_triple<T: std::str::FromStr>(s: &str) -> Result<[T; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got {s:?}"));
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| format!("cannot parse {p:?}"))?);
    }
    out.try_into().map_err(|_| unreachable!())
}

pub fn parse_vec3(s: &str) -> Result<Vec3, String> {
    parse_triple(s)
}

pub fn parse_cells(s: &str) -> Result<[usize; 3], String> {
    parse_triple(s)
}

/// Writes `text` to `out`, or to standard output when no path is given.
fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `A`'s regularized inverse, read from or stored into `cache_dir` when given.
pub fn build_operator(
    mesh: &TetMesh,
    epsilon: Option<f64>,
    cache_dir: Option<&Path>,
) -> CliResult<BilaplacianOperator> {
    let a = assemble_bilaplacian_matrix(mesh)?;
    let eps = epsilon.unwrap_or_else(|| default_epsilon(&a));
    let Some(dir) = cache_dir else {
        return Ok(BilaplacianOperator::from_matrix(a, Some(eps))?);
    };
    let key = CacheKey {
        n: a.dim(),
        epsilon: eps,
        mesh_hash: mesh.content_hash(),
    };
    let path = key.path_in(dir);
    if let Some(inv) = cache::load(&path, &key).map_err(|e| CliError::input(&path, e))? {
        return Ok(BilaplacianOperator::with_inverse(a, eps, inv)?);
    }
    let op = BilaplacianOperator::from_matrix(a, Some(eps))?;
    cache::store(&path, &key, op.base_inverse()).map_err(|e| CliError::input(&path, e))?;
    Ok(op)
}

/// Template and targets in the normalized frame with the operator built.
struct Prepared {
    input: TetMesh,
    mesh: TetMesh,
    targets: TargetSet,
    op: BilaplacianOperator,
    timings: BTreeMap<String, f64>,
}

impl Prepared {
    fn load(cfg: &RunConfig) -> CliResult<Self> {
        let t0 = Instant::now();
        let input = io::load_template(&cfg.template)?;
        let (mesh, sim) = input.normalize_unit_sphere()?;
        let targets = io::load_targets(cfg.targets_dir()?, &input)?.transformed(&sim);
        let mut timings = BTreeMap::new();
        timings.insert("load".to_owned(), ms(t0));
        let t1 = Instant::now();
        let op = build_operator(&mesh, cfg.epsilon, cfg.cache_dir.as_deref())?;
        timings.insert("precompute".to_owned(), ms(t1));
        Ok(Self {
            input,
            mesh,
            targets,
            op,
            timings,
        })
    }

    fn problem(&self, cfg: &RunConfig) -> CliResult<FittingProblem<'_>> {
        Ok(FittingProblem::new(&self.op, &self.targets, cfg.distance.into())?)
    }

    fn trials(&self, cfg: &RunConfig) -> usize {
        cfg.trials.unwrap_or(self.mesh.num_vertices() * cfg.k)
    }

    fn run(&self, cfg: &RunConfig, method: Method) -> CliResult<ReportJson> {
        let problem = self.problem(cfg)?;
        let mut search = SearchConfig::new(cfg.k, cfg.seed);
        search.passes = cfg.passes;
        search.epsilon = Some(self.op.epsilon());
        search.distance = cfg.distance.into();
        let report = match method {
            Method::Optctrl => optimize(&self.mesh, &problem, &search, &mut NoObserver)?,
            Method::Fps => fps_baseline(&self.mesh, &problem, cfg.k)?,
            Method::Random => random_search(&problem, cfg.k, self.trials(cfg), cfg.seed)?,
            Method::Exhaustive => exhaustive_report(&problem, cfg)?,
        };
        let trials = (method == Method::Random).then(|| self.trials(cfg));
        let hash = config_hash(
            &Provenance {
                method,
                k: cfg.k,
                epsilon: self.op.epsilon(),
                seed: cfg.seed,
                passes: cfg.passes,
                trials,
                distance: cfg.distance,
            },
            &self.input,
            &self.targets,
        );
        let mut timings = BTreeMap::new();
        if cfg.timings {
            timings = self.timings.clone();
            timings.extend(report.timings_ms.clone());
        }
        Ok(ReportJson::new(&report, hash, timings))
    }
}

fn exhaustive_report(problem: &FittingProblem<'_>, cfg: &RunConfig) -> CliResult<FitReport> {
    let t0 = Instant::now();
    let (sel, _) = exhaustive_search(problem, cfg.k)?;
    let e = problem.evaluate(&sel)?;
    let mut timings_ms = BTreeMap::new();
    timings_ms.insert("search".to_owned(), ms(t0));
    Ok(FitReport {
        control_points: sel.indices().to_vec(),
        mean_distance: e.distance,
        per_target: e.per_target,
        initial_fps_distance: None,
        eval_count: binomial(problem.num_vertices(), cfg.k) as usize,
        passes_run: 0,
        seed: cfg.seed,
        pass_distances: Vec::new(),
        pass_evals: Vec::new(),
        max_region_size: None,
        timings_ms,
    })
}

pub fn optimize_cmd(args: RunArgs) -> CliResult<()> {
    let cfg = args.resolve(Method::Optctrl)?;
    let prepared = Prepared::load(&cfg)?;
    let report = prepared.run(&cfg, cfg.method)?;
    eprintln!(
        "{:?}: K={} distance={:.6e} evals={} control points {:?}",
        cfg.method, report.k, report.mean_fit_distance, report.evals, report.control_points
    );
    emit(cfg.out.as_deref(), &to_json(&report))
}

#[derive(Serialize)]
struct Comparison {
    optctrl: ReportJson,
    fps: ReportJson,
    random: ReportJson,
    /// Absent when the subset count exceeds the enumeration limit.
    exhaustive: Option<ReportJson>,
}

pub fn baseline_cmd(args: RunArgs) -> CliResult<()> {
    let cfg = args.resolve(Method::Optctrl)?;
    let prepared = Prepared::load(&cfg)?;
    let exhaustive = if binomial(prepared.mesh.num_vertices(), cfg.k) <= EXHAUSTIVE_LIMIT {
        Some(prepared.run(&cfg, Method::Exhaustive)?)
    } else {
        None
    };
    let c = Comparison {
        optctrl: prepared.run(&cfg, Method::Optctrl)?,
        fps: prepared.run(&cfg, Method::Fps)?,
        random: prepared.run(&cfg, Method::Random)?,
        exhaustive,
    };
    eprintln!("{:<12} {:>14} {:>10}", "method", "distance", "evals");
    let rows = [("optctrl", Some(&c.optctrl)), ("fps", Some(&c.fps)), ("random", Some(&c.random))];
    for (name, r) in rows.into_iter().chain([("exhaustive", c.exhaustive.as_ref())]) {
        match r {
            Some(r) => eprintln!("{name:<12} {:>14.6e} {:>10}", r.mean_fit_distance, r.evals),
            None => eprintln!("{name:<12} {:>14} {:>10}", "skipped", "-"),
        }
    }
    emit(cfg.out.as_deref(), &to_json(&c))
}

#[derive(Debug, Args)]
pub struct DeformArgs {
    /// Template tetrahedral mesh (Medit .mesh) the report was computed on.
    #[arg(long)]
    pub template: PathBuf,
    /// Report whose control points drive the deformation.
    #[arg(long)]
    pub report: PathBuf,
    /// Full target shape (.xyz, one row per vertex); controls are its rows at
    /// the control points and per-vertex distances are written.
    #[arg(long, conflicts_with = "controls", required_unless_present = "controls")]
    pub target: Option<PathBuf>,
    /// Control positions (.xyz, one row per control point in report order).
    #[arg(long)]
    pub controls: Option<PathBuf>,
    /// Regularization added to the Bilaplacian (default 1e-8 · trace/N).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Directory holding cached operator inverses.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Deformed surface (.obj).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-vertex distance file (default: `out` with a .csv extension).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Dense N×K weight matrix as ASCII (header `N K`).
    #[arg(long)]
    pub weights_out: Option<PathBuf>,
}

pub fn deform_cmd(args: DeformArgs) -> CliResult<()> {
    if let Some(e) = args.epsilon {
        if !(e > 0.0 && e.is_finite()) {
            return Err(CliError::Usage("--epsilon must be positive and finite".into()));
        }
    }
    let input = io::load_template(&args.template)?;
    let n = input.num_vertices();
    let report = ReportJson::load(&args.report)?;
    let sel = Selector::new(report.control_points.clone(), n).map_err(|e| {
        CliError::Invalid(format!(
            "{} does not fit {}: {e}",
            args.report.display(),
            args.template.display()
        ))
    })?;
    let (mesh, sim) = input.normalize_unit_sphere()?;
    let op = build_operator(&mesh, args.epsilon, args.cache_dir.as_deref())?;

    let target = match &args.target {
        Some(p) => {
            let t = io::load_points(p)?;
            if t.len() != n {
                return Err(CliError::Invalid(format!(
                    "{} has {} rows, template has {n} vertices",
                    p.display(),
                    t.len()
                )));
            }
            Some(t)
        }
        None => None,
    };
    let rows: Vec<Vec3> = match (&target, &args.controls) {
        (Some(t), _) => sel.indices().iter().map(|&v| t[v]).collect(),
        (None, Some(p)) => {
            let c = io::load_points(p)?;
            if c.len() != sel.len() {
                return Err(CliError::Invalid(format!(
                    "{} has {} rows for {} control points",
                    p.display(),
                    c.len(),
                    sel.len()
                )));
            }
            c
        }
        (None, None) => unreachable!("clap requires --target or --controls"),
    };
    let controls = ControlPositions::new(sim.apply_all(&rows))?;
    let x_norm = deform_fast(&op, &sel, &controls)?;
    let x = sim.invert_all(&x_norm);
    write_atomic(&args.out, io::surface_obj(&input, &x).as_bytes())?;

    let moved = max_dist(&x, input.positions());
    eprintln!("deformed {n} vertices from {} control points; max displacement {moved:.6e}", sel.len());
    if let Some(t) = &target {
        let d: Vec<f64> = x.iter().zip(t).map(|(a, b)| dist(*a, *b)).collect();
        let t_norm = sim.apply_all(t);
        let dn: Vec<f64> = x_norm.iter().zip(&t_norm).map(|(a, b)| dist(*a, *b)).collect();
        let csv = args.csv.clone().unwrap_or_else(|| args.out.with_extension("csv"));
        write_atomic(&csv, io::distance_csv(&d, &dn).as_bytes())?;
        let mean = d.iter().sum::<f64>() / n as f64;
        eprintln!("distance to target: mean {mean:.6e}, max {:.6e}", d.iter().cloned().fold(0.0, f64::max));
    }
    if let Some(p) = &args.weights_out {
        write_atomic(p, weights_fast(&op, &sel)?.to_ascii().as_bytes())?;
    }
    Ok(())
}

fn dist(a: Vec3, b: Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn max_dist(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(p, q)| dist(*p, *q)).fold(0.0, f64::max)
}

/// Hinge options shared by `gen-targets` and `bench`.
#[derive(Debug, Clone, Args)]
pub struct HingeArgs {
    /// Point on the hinge plane (default: bounding-box center).
    #[arg(long, value_parser = parse_vec3)]
    pub hinge_point: Option<Vec3>,
    #[arg(long, value_parser = parse_vec3, default_value = "1,0,0")]
    pub hinge_normal: Vec3,
    #[arg(long, value_parser = parse_vec3, default_value = "0,0,1")]
    pub hinge_axis: Vec3,
    /// Blending band width (default: 10% of the bounding-box diagonal).
    #[arg(long)]
    pub falloff: Option<f64>,
    /// Smallest bend angle in radians.
    #[arg(long, default_value_t = -0.9, allow_hyphen_values = true)]
    pub angle_min: f64,
    /// Largest bend angle in radians.
    #[arg(long, default_value_t = 0.9, allow_hyphen_values = true)]
    pub angle_max: f64,
}

impl HingeArgs {
    fn hinge(&self, mesh: &TetMesh) -> Hinge {
        let mut h = Hinge::centered(mesh);
        if let Some(p) = self.hinge_point {
            h.point = p;
        }
        h.normal = self.hinge_normal;
        h.axis = self.hinge_axis;
        h.falloff = self.falloff;
        h
    }
}

#[derive(Debug, Args)]
pub struct GenTargetsArgs {
    /// Template tetrahedral mesh (Medit .mesh).
    #[arg(long)]
    pub template: PathBuf,
    /// Number of targets.
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub hinge: HingeArgs,
    /// Output directory for target_0000.xyz, target_0001.xyz, ...
    #[arg(long)]
    pub out: PathBuf,
}

pub fn gen_targets_cmd(args: GenTargetsArgs) -> CliResult<()> {
    let mesh = io::load_template(&args.template)?;
    let hinge = args.hinge.hinge(&mesh);
    let bent = generate_bend_targets(&mesh, args.m, args.seed, &hinge, (args.hinge.angle_min, args.hinge.angle_max))?;
    for (i, t) in bent.targets.iter().enumerate() {
        write_atomic(&args.out.join(format!("target_{i:04}.xyz")), write_xyz(t).as_bytes())?;
    }
    eprintln!("wrote {} targets to {}", bent.targets.len(), args.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct GenBarArgs {
    /// Grid cells along x, y, z; each cell is split into six tetrahedra.
    #[arg(long, value_parser = parse_cells)]
    pub cells: [usize; 3],
    /// Box size (default: one unit per cell).
    #[arg(long, value_parser = parse_vec3)]
    pub extent: Option<Vec3>,
    /// Output Medit mesh.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn gen_bar_cmd(args: GenBarArgs) -> CliResult<()> {
    let [a, b, c] = args.cells;
    let extent = args.extent.unwrap_or([a as f64, b as f64, c as f64]);
    let mesh = TetMesh::box_grid(args.cells, extent)?;
    write_atomic(&args.out, write_medit(&mesh).as_bytes())?;
    eprintln!("wrote {} vertices, {} tetrahedra", mesh.num_vertices(), mesh.num_tets());
    Ok(())
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Template mesh; a synthetic bar of `--cells` when absent.
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long, value_parser = parse_cells, default_value = "29,9,9")]
    pub cells: [usize; 3],
    /// Target directory; hinge targets are generated when absent.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    /// Targets to generate when `--targets` is absent.
    #[arg(long, default_value_t = 8)]
    pub m: usize,
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    /// Random selectors timed per path.
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Random-search samples for the search comparison (default N·K).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Time only the per-evaluation paths.
    #[arg(long)]
    pub skip_search: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Machine-readable results (standard output when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct SearchTiming {
    pub ms: f64,
    pub distance: f64,
    pub evals: usize,
}

#[derive(Debug, Serialize)]
pub struct BenchResult {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub precompute_ms: f64,
    pub fast_eval_ms: f64,
    pub naive_eval_ms: f64,
    pub ratio: f64,
    pub max_distance_gap: f64,
    pub optimize: Option<SearchTiming>,
    pub random: Option<SearchTiming>,
}

pub fn bench_cmd(args: BenchArgs) -> CliResult<()> {
    if args.k == 0 || args.reps == 0 || args.m == 0 {
        return Err(CliError::Usage("--k, --reps and --m must be at least 1".into()));
    }
    let input = match &args.template {
        Some(p) => io::load_template(p)?,
        None => {
            let [a, b, c] = args.cells;
            TetMesh::box_grid(args.cells, [a as f64, b as f64, c as f64])?
        }
    };
    let (mesh, sim): (TetMesh, Similarity) = input.normalize_unit_sphere()?;
    let targets = match &args.targets {
        Some(d) => io::load_targets(d, &input)?.transformed(&sim),
        None => generate_bend_targets(&mesh, args.m, args.seed, &Hinge::centered(&mesh), (-0.9, 0.9))?.targets,
    };
    let t0 = Instant::now();
    let op = build_operator(&mesh, args.epsilon, args.cache_dir.as_deref())?;
    let precompute_ms = ms(t0);
    let result = bench(&mesh, &op, &targets, &args, precompute_ms)?;

    eprintln!("N={} K={} M={}", result.n, result.k, result.m);
    eprintln!("{:<24} {:>12}", "precompute (ms)", format!("{:.1}", result.precompute_ms));
    eprintln!("{:<24} {:>12}", "naive eval (ms)", format!("{:.3}", result.naive_eval_ms));
    eprintln!("{:<24} {:>12}", "fast eval (ms)", format!("{:.3}", result.fast_eval_ms));
    eprintln!("{:<24} {:>12}", "naive / fast", format!("{:.1}", result.ratio));
    eprintln!("{:<24} {:>12}", "max distance gap", format!("{:.2e}", result.max_distance_gap));
    for (name, t) in [("optimize", &result.optimize), ("random search", &result.random)] {
        if let Some(t) = t {
            eprintln!(
                "{:<24} {:>12} distance {:.6e} evals {}",
                format!("{name} (ms)"),
                format!("{:.1}", t.ms),
                t.distance,
                t.evals
            );
        }
    }
    emit(args.out.as_deref(), &to_json(&result))
}

/// Per-evaluation naive vs fast timings, then optional search timings.
pub fn bench(
    mesh: &TetMesh,
    op: &BilaplacianOperator,
    targets: &TargetSet,
    args: &BenchArgs,
    precompute_ms: f64,
) -> CliResult<BenchResult> {
    let n = mesh.num_vertices();
    let problem = FittingProblem::new(op, targets, Default::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let sels: Vec<Selector> = (0..args.reps)
        .map(|_| Selector::new(sample(&mut rng, n, args.k).into_vec(), n))
        .collect::<Result<_, _>>()?;

    let t = Instant::now();
    let fast: Vec<f64> = sels.iter().map(|s| problem.distance(s)).collect::<Result<_, _>>()?;
    let fast_eval_ms = ms(t) / args.reps as f64;
    let t = Instant::now();
    let naive: Vec<f64> = sels
        .iter()
        .map(|s| problem.evaluate_naive(s).map(|e| e.distance))
        .collect::<Result<_, _>>()?;
    let naive_eval_ms = ms(t) / args.reps as f64;
    let max_distance_gap = fast.iter().zip(&naive).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let (optimize_t, random_t) = if args.skip_search {
        (None, None)
    } else {
        let t = Instant::now();
        let r = optimize(mesh, &problem, &SearchConfig::new(args.k, args.seed), &mut NoObserver)?;
        let o = SearchTiming {
            ms: ms(t),
            distance: r.mean_distance,
            evals: r.eval_count,
        };
        let trials = args.trials.unwrap_or(n * args.k);
        let t = Instant::now();
        let r = random_search(&problem, args.k, trials, args.seed)?;
        let q = SearchTiming {
            ms: ms(t),
            distance: r.mean_distance,
            evals: r.eval_count,
        };
        (Some(o), Some(q))
    };
    Ok(BenchResult {
        n,
        k: args.k,
        m: targets.len(),
        precompute_ms,
        fast_eval_ms,
        naive_eval_ms,
        ratio: naive_eval_ms / fast_eval_ms,
        max_distance_gap,
        optimize: optimize_t,
        random: random_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triples_parse() {
        assert_eq!(parse_vec3("1, -2.5,3").unwrap(), [1.0, -2.5, 3.0]);
        assert_eq!(parse_cells("4,2,1").unwrap(), [4, 2, 1]);
        assert!(parse_cells("4,2").is_err());
        assert!(parse_vec3("a,b,c").is_err());
    }

    #[test]
    fn cached_operator_matches_fresh_one() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = TetMesh::box_grid([3, 1, 1], [3.0, 1.0, 1.0]).unwrap();
        let a = build_operator(&mesh, None, Some(dir.path())).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        let b = build_operator(&mesh, None, Some(dir.path())).unwrap();
        assert_eq!(a.base_inverse(), b.base_inverse());
        assert_eq!(a.epsilon(), b.epsilon());
        let other = build_operator(&mesh, Some(1e-3), Some(dir.path())).unwrap();
        assert_eq!(other.epsilon(), 1e-3);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    }
}
