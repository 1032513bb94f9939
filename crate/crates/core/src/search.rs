//! The fitting objective and the control point searches built on it.
//!
//! [`optimize`] is a coordinate search over the `K` control point slots.
//! Each slot update first probes one random vertex per region of a fixed
//! partition to pick a promising region, then scans that region exhaustively.
//! An update is committed only if it lowers the current fitting distance, so
//! the tracked minimum always equals the distance of the current selection
//! and never increases.
//!
//! Random draws happen serially on the coordinator; candidate evaluations
//! run on the rayon pool and are reduced in submission order, so results do
//! not depend on the thread count.

use std::collections::BTreeMap;
use std::time::Instant;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::biharmonic::{deform_fast_mat, weights_naive, Selector};
use crate::error::{Error, Result};
use crate::mesh::{surface_geodesic_fps, Partition, TargetSet, TetMesh};
use crate::operators::BilaplacianOperator;

/// Largest number of subsets [`exhaustive_search`] will enumerate.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

const BATCH: usize = 256;

/// Per-vertex discrepancy between a deformed template and a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceKind {
    /// Mean Euclidean distance.
    #[default]
    MeanNorm,
    /// Mean squared Euclidean distance.
    MeanSquaredNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub k: usize,
    /// `None` selects the operator's default regularization.
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub passes: usize,
    pub distance: DistanceKind,
}

impl SearchConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            epsilon: None,
            seed,
            passes: 1,
            distance: DistanceKind::MeanNorm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        if self.passes == 0 {
            return Err(Error::InvalidArgument("passes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Fitting distance of a selector, with its per-target breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub distance: f64,
    pub per_target: Vec<f64>,
}

/// The operator and targets against which selectors are scored.
///
/// Targets are packed into one N×3M matrix so a single deformation solve
/// covers all of them.
#[derive(Debug)]
pub struct FittingProblem<'a> {
    op: &'a BilaplacianOperator,
    targets: Mat<f64>,
    num_targets: usize,
    kind: DistanceKind,
}

impl<'a> FittingProblem<'a> {
    pub fn new(op: &'a BilaplacianOperator, targets: &TargetSet, kind: DistanceKind) -> Result<Self> {
        let n = op.dim();
        if targets.num_vertices() != n {
            return Err(Error::InvalidArgument(format!(
                "targets have {} vertices, operator has {n}",
                targets.num_vertices()
            )));
        }
        let m = targets.len();
        let t = Mat::from_fn(n, 3 * m, |v, j| targets.get(j / 3)[v][j % 3]);
        Ok(Self {
            op,
            targets: t,
            num_targets: m,
            kind,
        })
    }

    pub fn operator(&self) -> &BilaplacianOperator {
        self.op
    }

    pub fn num_vertices(&self) -> usize {
        self.op.dim()
    }

    pub fn num_targets(&self) -> usize {
        self.num_targets
    }

    pub fn kind(&self) -> DistanceKind {
        self.kind
    }

    /// Deformed template for every target. Control points are taken in
    /// ascending order so the result depends only on the selected set.
    fn deformed(&self, sel: &Selector) -> Result<Mat<f64>> {
        let sorted = sorted_selector(sel)?;
        let idx = sorted.indices();
        let c = Mat::from_fn(idx.len(), self.targets.ncols(), |k, j| self.targets[(idx[k], j)]);
        deform_fast_mat(self.op, &sorted, c.as_ref())
    }

    /// Per-target, per-vertex Euclidean residual norms.
    pub fn residuals(&self, sel: &Selector) -> Result<Vec<Vec<f64>>> {
        let x = self.deformed(sel)?;
        Ok((0..self.num_targets)
            .map(|i| (0..self.num_vertices()).map(|v| self.residual(&x, i, v)).collect())
            .collect())
    }

    fn residual(&self, x: &Mat<f64>, i: usize, v: usize) -> f64 {
        let mut s = 0.0;
        for c in 3 * i..3 * i + 3 {
            let d = x[(v, c)] - self.targets[(v, c)];
            s += d * d;
        }
        s.sqrt()
    }

    pub fn evaluate(&self, sel: &Selector) -> Result<Evaluation> {
        let x = self.deformed(sel)?;
        Ok(self.score(&x))
    }

    /// Same as [`evaluate`](Self::evaluate) but through the sparse free-block
    /// solve on `A_ε`, forming the full weight matrix.
    pub fn evaluate_naive(&self, sel: &Selector) -> Result<Evaluation> {
        let sorted = sorted_selector(sel)?;
        let w = weights_naive(self.op.a_eps(), &sorted)?;
        let idx = sorted.indices();
        let c = Mat::from_fn(idx.len(), self.targets.ncols(), |k, j| self.targets[(idx[k], j)]);
        let mut x = Mat::zeros(self.num_vertices(), self.targets.ncols());
        matmul(x.as_mut(), Accum::Replace, w.matrix().as_ref(), c.as_ref(), 1.0, Par::Seq);
        Ok(self.score(&x))
    }

    fn score(&self, x: &Mat<f64>) -> Evaluation {
        let n = self.num_vertices();
        let per_target: Vec<f64> = (0..self.num_targets)
            .map(|i| {
                let sum: f64 = (0..n)
                    .map(|v| {
                        let r = self.residual(x, i, v);
                        match self.kind {
                            DistanceKind::MeanNorm => r,
                            DistanceKind::MeanSquaredNorm => r * r,
                        }
                    })
                    .sum();
                sum / n as f64
            })
            .collect();
        let distance = per_target.iter().sum::<f64>() / self.num_targets as f64;
        Evaluation {
            distance,
            per_target,
        }
    }

    pub fn distance(&self, sel: &Selector) -> Result<f64> {
        Ok(self.evaluate(sel)?.distance)
    }

    /// Distances of many selectors, evaluated in parallel, returned in order.
    pub fn distances(&self, candidates: &[Selector]) -> Result<Vec<f64>> {
        candidates.par_iter().map(|s| self.distance(s)).collect()
    }
}

fn sorted_selector(sel: &Selector) -> Result<Selector> {
    let mut idx = sel.indices().to_vec();
    idx.sort_unstable();
    Selector::new(idx, sel.num_vertices())
}

/// Receives every evaluation and slot update of a search.
pub trait SearchObserver {
    fn on_evaluation(&mut self, _candidate: &[usize], _distance: f64) {}
    fn on_step(&mut self, _step: &StepRecord) {}
}

/// Observer that ignores everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoObserver;

impl SearchObserver for NoObserver {}

/// Summary of one slot update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub pass: usize,
    pub slot: usize,
    pub region: usize,
    pub region_evals: usize,
    pub vertex_evals: usize,
    pub vertex: usize,
    pub accepted: bool,
    pub d_min: f64,
}

/// Mutable state of the coordinate search.
#[derive(Debug, Clone)]
pub struct SearchState {
    selector: Selector,
    selected: Vec<bool>,
    d_min: f64,
    partition: Partition,
    rng: ChaCha8Rng,
    eval_count: usize,
}

impl SearchState {
    pub fn new(problem: &FittingProblem<'_>, selector: Selector, partition: Partition, seed: u64) -> Result<Self> {
        if partition.len() != selector.len() {
            return Err(Error::InvalidArgument(format!(
                "{} regions for {} control points",
                partition.len(),
                selector.len()
            )));
        }
        let d_min = problem.distance(&selector)?;
        let mut selected = vec![false; selector.num_vertices()];
        for &v in selector.indices() {
            selected[v] = true;
        }
        Ok(Self {
            selector,
            selected,
            d_min,
            partition,
            rng: ChaCha8Rng::seed_from_u64(seed),
            eval_count: 1,
        })
    }

    pub fn selector(&self) -> &Selector {
        &self.selector
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn eval_count(&self) -> usize {
        self.eval_count
    }

    pub fn is_selected(&self, v: usize) -> bool {
        self.selected[v]
    }

    fn commit(&mut self, k: usize, v: usize, d: f64) -> Result<()> {
        let old = self.selector.indices()[k];
        self.selector = self.selector.with_replaced(k, v)?;
        self.selected[old] = false;
        self.selected[v] = true;
        self.d_min = d;
        Ok(())
    }

    fn evaluate_all(
        &mut self,
        problem: &FittingProblem<'_>,
        candidates: &[Selector],
        obs: &mut dyn SearchObserver,
    ) -> Result<Vec<f64>> {
        let d = problem.distances(candidates)?;
        self.eval_count += candidates.len();
        for (c, &x) in candidates.iter().zip(&d) {
            obs.on_evaluation(c.indices(), x);
        }
        Ok(d)
    }
}

/// Picks the region to scan for slot `k`.
///
/// One vertex per region is drawn uniformly (redrawn while already selected;
/// fully selected regions are skipped) and substituted into slot `k`. The
/// region whose probe beats the current distance by the widest margin wins;
/// otherwise the region containing the current `s_k` is returned. Consumes at
/// most `K` evaluations and leaves the selection unchanged.
pub fn find_region(
    state: &mut SearchState,
    problem: &FittingProblem<'_>,
    k: usize,
    obs: &mut dyn SearchObserver,
) -> Result<(usize, usize)> {
    let mut l_min = state.partition.label(state.selector.indices()[k]);
    let mut candidates = Vec::with_capacity(state.partition.len());
    let mut labels = Vec::with_capacity(state.partition.len());
    for l in 0..state.partition.len() {
        let region = state.partition.region(l);
        if region.iter().all(|&v| state.selected[v]) {
            continue;
        }
        let v = loop {
            let v = region[state.rng.random_range(0..region.len())];
            if !state.selected[v] {
                break v;
            }
        };
        candidates.push(state.selector.with_replaced(k, v)?);
        labels.push(l);
    }
    let d = state.evaluate_all(problem, &candidates, obs)?;
    let mut best = state.d_min;
    for (&l, &x) in labels.iter().zip(&d) {
        if x < best {
            best = x;
            l_min = l;
        }
    }
    Ok((l_min, candidates.len()))
}

/// Scans every unselected vertex of `region` (ascending) as a replacement for
/// slot `k` and commits the best one if it lowers the current distance.
/// Returns the vertex now in slot `k` and the number of evaluations.
pub fn find_vertex(
    state: &mut SearchState,
    problem: &FittingProblem<'_>,
    k: usize,
    region: usize,
    obs: &mut dyn SearchObserver,
) -> Result<(usize, usize)> {
    let vertices: Vec<usize> = state
        .partition
        .region(region)
        .iter()
        .copied()
        .filter(|&v| !state.selected[v])
        .collect();
    let candidates: Vec<Selector> = vertices
        .iter()
        .map(|&v| state.selector.with_replaced(k, v))
        .collect::<Result<_>>()?;
    let d = state.evaluate_all(problem, &candidates, obs)?;
    let mut best: Option<(usize, f64)> = None;
    for (&v, &x) in vertices.iter().zip(&d) {
        if best.is_none_or(|(_, b)| x < b) {
            best = Some((v, x));
        }
    }
    if let Some((v, x)) = best {
        if x < state.d_min {
            state.commit(k, v, x)?;
        }
    }
    Ok((state.selector.indices()[k], vertices.len()))
}

/// Result of a search or baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub control_points: Vec<usize>,
    pub mean_distance: f64,
    pub per_target: Vec<f64>,
    /// Distance of the FPS initialization, when the method starts from it.
    pub initial_fps_distance: Option<f64>,
    pub eval_count: usize,
    pub passes_run: usize,
    pub seed: u64,
    /// Distance after each pass.
    pub pass_distances: Vec<f64>,
    /// Evaluations consumed by each pass.
    pub pass_evals: Vec<usize>,
    pub max_region_size: Option<usize>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl FitReport {
    fn finish(
        problem: &FittingProblem<'_>,
        sel: &Selector,
        eval_count: usize,
        seed: u64,
        started: Instant,
    ) -> Result<Self> {
        let e = problem.evaluate(sel)?;
        let mut timings_ms = BTreeMap::new();
        timings_ms.insert("search".to_owned(), started.elapsed().as_secs_f64() * 1e3);
        Ok(Self {
            control_points: sel.indices().to_vec(),
            mean_distance: e.distance,
            per_target: e.per_target,
            initial_fps_distance: None,
            eval_count,
            passes_run: 0,
            seed,
            pass_distances: Vec::new(),
            pass_evals: Vec::new(),
            max_region_size: None,
            timings_ms,
        })
    }
}

/// Initial selector and partition of [`optimize`].
pub fn initialize(mesh: &TetMesh, k: usize) -> Result<(Selector, Partition)> {
    let seeds = surface_geodesic_fps(mesh, k)?;
    let partition = Partition::by_proximity(mesh, &seeds)?;
    Ok((Selector::new(seeds, mesh.num_vertices())?, partition))
}

/// Region/vertex coordinate search started from geodesic FPS.
pub fn optimize(
    mesh: &TetMesh,
    problem: &FittingProblem<'_>,
    cfg: &SearchConfig,
    obs: &mut dyn SearchObserver,
) -> Result<FitReport> {
    cfg.validate()?;
    check_problem(mesh, problem)?;
    let started = Instant::now();
    let (selector, partition) = initialize(mesh, cfg.k)?;
    let mut state = SearchState::new(problem, selector, partition, cfg.seed)?;
    let initial = state.d_min;
    let mut pass_distances = Vec::with_capacity(cfg.passes);
    let mut pass_evals = Vec::with_capacity(cfg.passes);
    for pass in 0..cfg.passes {
        let before = state.eval_count;
        for k in 0..cfg.k {
            let d_before = state.d_min;
            let (region, region_evals) = find_region(&mut state, problem, k, obs)?;
            let (vertex, vertex_evals) = find_vertex(&mut state, problem, k, region, obs)?;
            obs.on_step(&StepRecord {
                pass,
                slot: k,
                region,
                region_evals,
                vertex_evals,
                vertex,
                accepted: state.d_min < d_before,
                d_min: state.d_min,
            });
        }
        pass_distances.push(state.d_min);
        pass_evals.push(state.eval_count - before);
    }
    let mut report = FitReport::finish(problem, &state.selector, state.eval_count, cfg.seed, started)?;
    report.initial_fps_distance = Some(initial);
    report.passes_run = cfg.passes;
    report.pass_distances = pass_distances;
    report.pass_evals = pass_evals;
    report.max_region_size = Some(state.partition.max_region_size());
    Ok(report)
}

/// The FPS initialization scored as a method of its own.
pub fn fps_baseline(mesh: &TetMesh, problem: &FittingProblem<'_>, k: usize) -> Result<FitReport> {
    check_problem(mesh, problem)?;
    let started = Instant::now();
    let sel = Selector::new(surface_geodesic_fps(mesh, k)?, mesh.num_vertices())?;
    let mut report = FitReport::finish(problem, &sel, 1, 0, started)?;
    report.initial_fps_distance = Some(report.mean_distance);
    Ok(report)
}

/// Best of `trials` uniformly random K-subsets. Earlier trials win ties.
pub fn random_search(problem: &FittingProblem<'_>, k: usize, trials: usize, seed: u64) -> Result<FitReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let n = problem.num_vertices();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("K = {k} must lie in 1..{n}")));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Selector, f64)> = None;
    let mut done = 0;
    while done < trials {
        let batch = BATCH.min(trials - done);
        let candidates: Vec<Selector> = (0..batch)
            .map(|_| Selector::new(rand::seq::index::sample(&mut rng, n, k).into_vec(), n))
            .collect::<Result<_>>()?;
        let d = problem.distances(&candidates)?;
        for (c, x) in candidates.into_iter().zip(d) {
            if best.as_ref().is_none_or(|(_, b)| x < *b) {
                best = Some((c, x));
            }
        }
        done += batch;
    }
    let (sel, _) = best.expect("at least one trial");
    FitReport::finish(problem, &sel, trials, seed, started)
}

/// Number of K-subsets of N elements, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    r
}

/// Global optimum over all K-subsets, enumerated in lexicographic order.
/// Earlier subsets win ties.
pub fn exhaustive_search(problem: &FittingProblem<'_>, k: usize) -> Result<(Selector, f64)> {
    let n = problem.num_vertices();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("K = {k} must lie in 1..{n}")));
    }
    let count = binomial(n, k);
    if count > EXHAUSTIVE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "exhaustive search over {count} subsets exceeds the limit of {EXHAUSTIVE_LIMIT}"
        )));
    }
    let mut best: Option<(Selector, f64)> = None;
    for chunk in &(0..n).combinations(k).chunks(BATCH * 4) {
        let candidates: Vec<Selector> = chunk.map(|c| Selector::new(c, n)).collect::<Result<_>>()?;
        let d = problem.distances(&candidates)?;
        for (c, x) in candidates.into_iter().zip(d) {
            if best.as_ref().is_none_or(|(_, b)| x < *b) {
                best = Some((c, x));
            }
        }
    }
    Ok(best.expect("at least one subset"))
}

fn check_problem(mesh: &TetMesh, problem: &FittingProblem<'_>) -> Result<()> {
    if mesh.num_vertices() != problem.num_vertices() {
        return Err(Error::InvalidArgument(format!(
            "mesh has {} vertices, problem has {}",
            mesh.num_vertices(),
            problem.num_vertices()
        )));
    }
    Ok(())
}
