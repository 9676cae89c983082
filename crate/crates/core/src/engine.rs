//! The outer/inner optimization loop.
//!
//! Each outer iteration draws `(B, C, D)`, computes the anchor gradient `μ`,
//! draws one permutation per feature block, and then lets all `Q·P` workers
//! run `L` variance-reduced steps on their own sub-block of `ω`. The
//! permutations guarantee that the sub-blocks are disjoint and cover `ω`, so
//! assembly is a plain scatter of the updated slices.

use std::ops::Range;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{approx_full_gradient, estimator_error};
use crate::grid::{DataGrid, ParameterVector, PartitionScheme};
use crate::losses::{loss_value, subblock_gradient_into, LossKind, LossModel};
use crate::sampling::{
    draw_assignment, draw_local_observation, draw_sets, resolve_fractions, Assignment, PiPolicy,
    RngPolicy,
};
use crate::theory::Schedule;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "DDDOPT_THREADS";

/// Byte accounting for the simulated communication cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub bytes_per_value: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { bytes_per_value: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// `P`
    pub obs_partitions: usize,
    /// `Q`
    pub feature_blocks: usize,
    /// `L`, inner steps per worker and outer iteration.
    pub inner_steps: usize,
    /// `T`
    pub outer_iterations: u64,
    pub schedule: Schedule,
    pub b_frac: f64,
    pub c_frac: f64,
    pub d_frac: f64,
    pub pi_policy: PiPolicy,
    pub seed: u64,
    pub loss: LossModel,
    pub eval_every: u64,
    /// Compute the feature-truncation error of every anchor gradient.
    pub diagnostics: bool,
    /// Worker threads; `None` reads `DDDOPT_THREADS`, then falls back to the
    /// number of CPUs.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Record wall-clock time in the trace. Off gives byte-reproducible traces.
    #[serde(default = "yes")]
    pub wall_clock: bool,
    /// Warn when `‖ω‖` exceeds this radius.
    #[serde(default)]
    pub monitor_radius: Option<f64>,
    #[serde(default)]
    pub cost: CostModel,
}

fn yes() -> bool {
    true
}

impl Default for RunConfig {
    /// The experimental protocol: `Q = 3`, `P = 5`, `(b, c, d)` fractions
    /// `(0.85, 0.80, 0.85)`, `γ_t = 1/(1 + √(t−1))`, hinge loss.
    fn default() -> Self {
        Self {
            obs_partitions: 5,
            feature_blocks: 3,
            inner_steps: 10,
            outer_iterations: 40,
            schedule: Schedule::experiment(),
            b_frac: 0.85,
            c_frac: 0.80,
            d_frac: 0.85,
            pi_policy: PiPolicy::Uniform,
            seed: 1,
            loss: LossModel::new(LossKind::Hinge),
            eval_every: 1,
            diagnostics: false,
            threads: None,
            wall_clock: true,
            monitor_radius: None,
            cost: CostModel::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inner_steps == 0 {
            return Err(Error::Config("L must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if self.obs_partitions == 0 || self.feature_blocks == 0 {
            return Err(Error::Config("P and Q must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        if self.loss.l2_reg.is_nan() || self.loss.l2_reg < 0.0 {
            return Err(Error::Config("l2 coefficient must be >= 0".into()));
        }
        for (name, value) in [("b", self.b_frac), ("c", self.c_frac), ("d", self.d_frac)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::Fraction { name, value });
            }
        }
        Ok(())
    }

    pub fn resolved_threads(&self) -> usize {
        self.threads
            .or_else(|| {
                std::env::var(THREADS_ENV)
                    .ok()
                    .and_then(|v| v.trim().parse().ok())
                    .filter(|&n: &usize| n > 0)
            })
            .unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map(|n| n.get())
                    .unwrap_or(1)
            })
    }
}

/// Same configuration with exact anchor gradients (`b = c = M`, `d = N`).
pub fn make_radisa_config(base: &RunConfig) -> RunConfig {
    RunConfig {
        b_frac: 1.0,
        c_frac: 1.0,
        d_frac: 1.0,
        ..base.clone()
    }
}

/// Metrics after one outer iteration. Counts are cumulative since `ω⁰`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Outer iterations completed.
    pub t: u64,
    pub gamma: f64,
    /// `F(ω^t)`, present on evaluation iterations.
    pub loss: Option<f64>,
    pub grad_components: u64,
    pub inner_products: u64,
    pub comm_bytes: u64,
    /// Algorithm wall time in milliseconds, excluding loss evaluation. Zero
    /// when wall-clock recording is off.
    pub elapsed_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    pub w: ParameterVector,
    /// Outer iterations completed.
    pub t: u64,
    pub trace: Vec<TraceRecord>,
    totals: Totals,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Totals {
    grad_components: u64,
    inner_products: u64,
    comm_bytes: u64,
    elapsed_ms: f64,
    eval_ms: f64,
    evaluations: u64,
}

impl EngineState {
    pub fn new(w: ParameterVector) -> Self {
        Self {
            w,
            t: 0,
            trace: Vec::new(),
            totals: Totals::default(),
        }
    }

    /// Wall time spent evaluating the objective, kept out of `elapsed_ms`.
    pub fn eval_ms(&self) -> f64 {
        self.totals.eval_ms
    }

    pub fn evaluations(&self) -> u64 {
        self.totals.evaluations
    }
}

/// Per-iteration observations collected on request.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Probe {
    pub assignment: Option<Assignment>,
    pub workers: Vec<WorkerProbe>,
    /// Number of writes each global coordinate received during assembly.
    pub write_counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerProbe {
    pub p: usize,
    pub q: usize,
    pub k: usize,
    pub gamma: f64,
    /// `ω^t` on the sub-block.
    pub start: Vec<f64>,
    /// Iterate after the first inner step.
    pub first_step: Vec<f64>,
    /// `μ` on the sub-block.
    pub mu_sub: Vec<f64>,
    /// Correction `g(ω̄) − g(ω^t)` of every inner step.
    pub corrections: Vec<Vec<f64>>,
}

/// One variance-reduced step on a sub-block:
/// `ω̄ − γ·[g(ω̄) − g(ω_anchor) + μ_sub]`, with `g` the sub-block gradient at
/// local row `j_local` of partition `p`.
#[allow(clippy::too_many_arguments)]
pub fn inner_step(
    model: &LossModel,
    grid: &DataGrid,
    scheme: &PartitionScheme,
    p: usize,
    q: usize,
    k: usize,
    w_bar: &[f64],
    w_anchor_sub: &[f64],
    mu_sub: &[f64],
    gamma: f64,
    j_local: usize,
) -> Result<Vec<f64>> {
    let range = scheme.subblock_range(q, k)?;
    let rows = scheme.partition_rows(p)?;
    for (len, context) in [
        (w_bar.len(), "inner iterate"),
        (w_anchor_sub.len(), "anchor sub-block"),
        (mu_sub.len(), "anchor gradient sub-block"),
    ] {
        if len != range.len() {
            return Err(Error::Dimension {
                expected: range.len(),
                actual: len,
                context,
            });
        }
    }
    if j_local >= rows.len() {
        return Err(Error::Index(format!(
            "local row {j_local} >= n={}",
            rows.len()
        )));
    }
    let mut out = w_bar.to_vec();
    let mut scratch = Scratch::new(range.len());
    let j = rows.start + j_local;
    apply_step(
        model,
        grid,
        j,
        range,
        &mut out,
        w_anchor_sub,
        mu_sub,
        gamma,
        &mut scratch,
    );
    Ok(out)
}

struct Scratch {
    g_cur: Vec<f64>,
    g_anchor: Vec<f64>,
}

impl Scratch {
    fn new(len: usize) -> Self {
        Self {
            g_cur: vec![0.0; len],
            g_anchor: vec![0.0; len],
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn apply_step(
    model: &LossModel,
    grid: &DataGrid,
    j: usize,
    range: Range<usize>,
    w_bar: &mut [f64],
    anchor: &[f64],
    mu_sub: &[f64],
    gamma: f64,
    scratch: &mut Scratch,
) {
    let row = grid.row(j);
    let y = grid.label(j);
    subblock_gradient_into(model, row, y, range.clone(), w_bar, &mut scratch.g_cur);
    subblock_gradient_into(model, row, y, range, anchor, &mut scratch.g_anchor);
    for (((w, gc), ga), mu) in w_bar
        .iter_mut()
        .zip(&scratch.g_cur)
        .zip(&scratch.g_anchor)
        .zip(mu_sub)
    {
        *w -= gamma * (gc - ga + mu);
    }
}

struct WorkerResult {
    range: Range<usize>,
    values: Vec<f64>,
    probe: Option<WorkerProbe>,
}

pub struct Engine<'g> {
    grid: &'g DataGrid,
    scheme: PartitionScheme,
    config: RunConfig,
    rng: RngPolicy,
    counts: (usize, usize, usize),
    pool: rayon::ThreadPool,
}

impl<'g> Engine<'g> {
    pub fn new(config: RunConfig, grid: &'g DataGrid) -> Result<Self> {
        config.validate()?;
        config.loss.check_grid(grid)?;
        let scheme = grid.scheme(config.obs_partitions, config.feature_blocks)?;
        let counts = resolve_fractions(&scheme, config.b_frac, config.c_frac, config.d_frac)?;
        if counts.0 < counts.1 {
            return Err(Error::Config(format!(
                "resolved b={} is smaller than c={}",
                counts.0, counts.1
            )));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.resolved_threads())
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let rng = RngPolicy::new(config.seed).with_pi_policy(config.pi_policy);
        Ok(Self {
            grid,
            scheme,
            config,
            rng,
            counts,
            pool,
        })
    }

    pub fn scheme(&self) -> &PartitionScheme {
        &self.scheme
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Resolved `(b, c, d)`.
    pub fn sample_sizes(&self) -> (usize, usize, usize) {
        self.counts
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// `ω⁰ = 0`.
    pub fn initial_state(&self) -> EngineState {
        EngineState::new(ParameterVector::zeros(self.scheme))
    }

    /// Algorithm cost of one outer iteration:
    /// `(grad_components, inner_products, comm_bytes)`.
    pub fn iteration_cost(&self) -> (u64, u64, u64) {
        let (b, c, d) = (
            self.counts.0 as u64,
            self.counts.1 as u64,
            self.counts.2 as u64,
        );
        let s = &self.scheme;
        let workers = s.n_workers() as u64;
        let l = self.config.inner_steps as u64;
        let sub = s.subblock_width() as u64;
        let grad = c * d + 2 * sub * workers * l;
        let inner = b * d + 2 * workers * l;
        let comm = self.config.cost.bytes_per_value
            * (c * s.obs_partitions() as u64 + sub * workers + s.n_features() as u64);
        (grad, inner, comm)
    }

    pub fn run_outer_iteration(&self, state: &mut EngineState) -> Result<()> {
        self.step(state, None)
    }

    /// Like [`Engine::run_outer_iteration`], also filling `probe`.
    pub fn run_outer_iteration_probed(
        &self,
        state: &mut EngineState,
        probe: &mut Probe,
    ) -> Result<()> {
        self.step(state, Some(probe))
    }

    fn step(&self, state: &mut EngineState, probe: Option<&mut Probe>) -> Result<()> {
        if state.w.scheme() != &self.scheme {
            return Err(Error::Config(
                "state does not match the engine's partition scheme".into(),
            ));
        }
        let started = Instant::now();
        let t = state.t;
        let gamma = self.config.schedule.gamma(t + 1);
        let (b, c, d) = self.counts;
        let model = &self.config.loss;
        let grid = self.grid;
        let scheme = self.scheme;
        let w = state.w.values();
        let want_probe = probe.is_some();

        let sample = draw_sets(&scheme, b, c, d, t, &self.rng)?;
        let (anchor, e_norm, results) = self.pool.install(|| -> Result<_> {
            let anchor = approx_full_gradient(model, grid, w, &sample)?;
            let e_norm = if self.config.diagnostics {
                Some(estimator_error(model, grid, w, &sample)?.0)
            } else {
                None
            };
            let assignment = draw_assignment(&scheme, t, &self.rng);
            let results: Vec<WorkerResult> = (0..scheme.n_workers())
                .into_par_iter()
                .map(|worker| {
                    self.run_worker(worker, &assignment, w, &anchor.mu, gamma, t, want_probe)
                })
                .collect::<Result<_>>()?;
            Ok((anchor, e_norm, (assignment, results)))
        })?;
        let (assignment, results) = results;

        let mut next = state.w.values().to_vec();
        let mut writes = vec![0u32; next.len()];
        let mut worker_probes = Vec::new();
        for r in results {
            next[r.range.clone()].copy_from_slice(&r.values);
            for c in &mut writes[r.range] {
                *c += 1;
            }
            worker_probes.extend(r.probe);
        }
        if let Some(k) = writes.iter().position(|&c| c != 1) {
            return Err(Error::Index(format!(
                "coordinate {k} written {} times in one iteration",
                writes[k]
            )));
        }
        state.w = ParameterVector::from_values(scheme, next)?;
        state.t += 1;

        let (grad, inner, comm) = self.iteration_cost();
        debug_assert_eq!(anchor.grad_components, c as u64 * d as u64);
        let totals = &mut state.totals;
        totals.grad_components += grad;
        totals.inner_products += inner;
        totals.comm_bytes += comm;
        if self.config.wall_clock {
            totals.elapsed_ms += started.elapsed().as_secs_f64() * 1e3;
        }

        if let Some(radius) = self.config.monitor_radius {
            let norm = state.w.norm();
            if norm > radius {
                log::warn!(
                    "iteration {}: |w| = {norm:.4e} exceeds radius {radius:.4e}",
                    state.t
                );
            }
        }

        let evaluate = state.t.is_multiple_of(self.config.eval_every)
            || state.t == self.config.outer_iterations;
        let loss = if evaluate {
            let eval_start = Instant::now();
            let v = loss_value(model, grid, state.w.values())?;
            totals.eval_ms += eval_start.elapsed().as_secs_f64() * 1e3;
            totals.evaluations += 1;
            Some(v)
        } else {
            None
        };
        state.trace.push(TraceRecord {
            t: state.t,
            gamma,
            loss,
            grad_components: totals.grad_components,
            inner_products: totals.inner_products,
            comm_bytes: totals.comm_bytes,
            elapsed_ms: totals.elapsed_ms,
            e_norm,
        });

        if let Some(probe) = probe {
            probe.assignment = Some(assignment);
            probe.workers = worker_probes;
            probe.write_counts = writes;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn run_worker(
        &self,
        worker: usize,
        assignment: &Assignment,
        w: &[f64],
        mu: &[f64],
        gamma: f64,
        t: u64,
        want_probe: bool,
    ) -> Result<WorkerResult> {
        let scheme = &self.scheme;
        let q = worker / scheme.obs_partitions();
        let p = worker % scheme.obs_partitions();
        let k = assignment.subblock(q, p);
        let range = scheme.subblock_range(q, k)?;
        let rows = scheme.partition_rows(p)?;
        let n = scheme.rows_per_partition();
        let anchor = &w[range.clone()];
        let mu_sub = &mu[range.clone()];
        let mut w_bar = anchor.to_vec();
        let mut scratch = Scratch::new(range.len());
        let mut probe = want_probe.then(|| WorkerProbe {
            p,
            q,
            k,
            gamma,
            start: anchor.to_vec(),
            first_step: Vec::new(),
            mu_sub: mu_sub.to_vec(),
            corrections: Vec::new(),
        });
        for i in 0..self.config.inner_steps {
            let j_local = draw_local_observation(n, t, i as u64, p, q, &self.rng);
            apply_step(
                &self.config.loss,
                self.grid,
                rows.start + j_local,
                range.clone(),
                &mut w_bar,
                anchor,
                mu_sub,
                gamma,
                &mut scratch,
            );
            if let Some(pr) = probe.as_mut() {
                if i == 0 {
                    pr.first_step = w_bar.clone();
                }
                pr.corrections.push(
                    scratch
                        .g_cur
                        .iter()
                        .zip(&scratch.g_anchor)
                        .map(|(a, b)| a - b)
                        .collect(),
                );
            }
        }
        Ok(WorkerResult {
            range,
            values: w_bar,
            probe,
        })
    }

    /// Runs `T` outer iterations from `ω⁰ = 0`.
    pub fn run(&self) -> Result<EngineState> {
        let mut state = self.initial_state();
        for _ in 0..self.config.outer_iterations {
            self.run_outer_iteration(&mut state)?;
        }
        Ok(state)
    }
}

/// Convenience wrapper: final weights and trace.
pub fn run(config: &RunConfig, grid: &DataGrid) -> Result<(ParameterVector, Vec<TraceRecord>)> {
    let engine = Engine::new(config.clone(), grid)?;
    let state = engine.run()?;
    Ok((state.w, state.trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::exact_full_gradient;
    use crate::grid::LabelKind;
    use crate::synthetic::{generate_regression, generate_synthetic};

    fn ls_config(p: usize, q: usize) -> RunConfig {
        RunConfig {
            obs_partitions: p,
            feature_blocks: q,
            inner_steps: 3,
            outer_iterations: 5,
            schedule: Schedule::constant(0.01),
            loss: LossModel::new(LossKind::LeastSquares),
            wall_clock: false,
            threads: Some(2),
            ..RunConfig::default()
        }
    }

    #[test]
    fn inner_step_worked_example() {
        // N=1, M=1, P=Q=1: x = 2, y = 1.
        let g = DataGrid::from_dense(1, vec![2.0], vec![1.0], LabelKind::Regression).unwrap();
        let s = g.scheme(1, 1).unwrap();
        let m = LossModel::new(LossKind::LeastSquares);
        let out = inner_step(&m, &g, &s, 0, 0, 0, &[1.0], &[0.0], &[0.5], 0.1, 0).unwrap();
        assert!((out[0] - 0.55).abs() < 1e-15);
        // gamma = 0 leaves the iterate alone
        assert_eq!(
            inner_step(&m, &g, &s, 0, 0, 0, &[1.0], &[0.0], &[0.5], 0.0, 0).unwrap(),
            vec![1.0]
        );
        // fresh anchor: correction cancels
        assert_eq!(
            inner_step(&m, &g, &s, 0, 0, 0, &[1.0], &[1.0], &[0.5], 0.1, 0).unwrap(),
            vec![1.0 - 0.1 * 0.5]
        );
        assert!(matches!(
            inner_step(&m, &g, &s, 0, 0, 0, &[1.0, 2.0], &[1.0], &[0.5], 0.1, 0),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn zero_rate_keeps_iterate() {
        let g = generate_regression(40, 12, 3, 0.1).unwrap().grid;
        let cfg = RunConfig {
            schedule: Schedule::constant(0.0),
            ..ls_config(2, 3)
        };
        let engine = Engine::new(cfg, &g).unwrap();
        let mut st = engine.initial_state();
        let w0 = ParameterVector::from_values(*engine.scheme(), vec![0.3; 12]).unwrap();
        st.w = w0.clone();
        engine.run_outer_iteration(&mut st).unwrap();
        assert_eq!(st.w, w0);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn single_worker_single_step_is_gradient_descent() {
        let g = generate_regression(30, 5, 9, 0.3).unwrap().grid;
        let cfg = RunConfig {
            inner_steps: 1,
            b_frac: 1.0,
            c_frac: 1.0,
            d_frac: 1.0,
            schedule: Schedule::constant(0.2),
            ..ls_config(1, 1)
        };
        let engine = Engine::new(cfg, &g).unwrap();
        let mut st = engine.initial_state();
        st.w =
            ParameterVector::from_values(*engine.scheme(), vec![0.1, -0.2, 0.3, 0.0, 0.5]).unwrap();
        let before = st.w.values().to_vec();
        let grad = exact_full_gradient(&LossModel::new(LossKind::LeastSquares), &g, &before, false)
            .unwrap();
        engine.run_outer_iteration(&mut st).unwrap();
        for k in 0..5 {
            assert!((st.w.values()[k] - (before[k] - 0.2 * grad[k])).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_iterations() {
        let g = generate_regression(40, 12, 3, 0.1).unwrap().grid;
        let cfg = RunConfig {
            outer_iterations: 0,
            ..ls_config(2, 3)
        };
        let (w, trace) = run(&cfg, &g).unwrap();
        assert!(w.values().iter().all(|&v| v == 0.0));
        assert!(trace.is_empty());
    }

    #[test]
    fn probe_sees_each_coordinate_once() {
        let g = generate_regression(40, 12, 3, 0.1).unwrap().grid;
        let engine = Engine::new(ls_config(2, 3), &g).unwrap();
        let mut st = engine.initial_state();
        for _ in 0..5 {
            let mut probe = Probe::default();
            engine
                .run_outer_iteration_probed(&mut st, &mut probe)
                .unwrap();
            assert!(probe.write_counts.iter().all(|&c| c == 1));
            assert_eq!(probe.workers.len(), 6);
            for wp in &probe.workers {
                assert!(wp.corrections[0].iter().all(|&v| v == 0.0));
                for ((s, f), mu) in wp.start.iter().zip(&wp.first_step).zip(&wp.mu_sub) {
                    assert_eq!(*f, s - wp.gamma * mu);
                }
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let g = generate_synthetic(60, 12, 4, 0.01).unwrap().grid;
        let base = RunConfig {
            obs_partitions: 3,
            feature_blocks: 2,
            inner_steps: 4,
            outer_iterations: 8,
            wall_clock: false,
            ..RunConfig::default()
        };
        let traces: Vec<_> = [1, 2, 6]
            .into_iter()
            .map(|n| {
                run(
                    &RunConfig {
                        threads: Some(n),
                        ..base.clone()
                    },
                    &g,
                )
                .unwrap()
            })
            .collect();
        assert_eq!(traces[0], traces[1]);
        assert_eq!(traces[0], traces[2]);
    }

    #[test]
    fn radisa_config_is_full_sampling() {
        let g = generate_synthetic(60, 12, 4, 0.01).unwrap().grid;
        let cfg = make_radisa_config(&RunConfig {
            obs_partitions: 3,
            feature_blocks: 2,
            ..RunConfig::default()
        });
        let e = Engine::new(cfg, &g).unwrap();
        assert_eq!(e.sample_sizes(), (12, 12, 60));
    }

    #[test]
    fn sodda_costs_less_per_iteration_than_radisa() {
        let g = generate_synthetic(300, 30, 4, 0.01).unwrap().grid;
        let base = RunConfig {
            obs_partitions: 5,
            feature_blocks: 3,
            ..RunConfig::default()
        };
        let sodda = Engine::new(base.clone(), &g).unwrap();
        let radisa = Engine::new(make_radisa_config(&base), &g).unwrap();
        // (b, c, d) = (26, 24, 255): 24*255 < 30*300
        assert_eq!(sodda.sample_sizes(), (26, 24, 255));
        let inner = 2 * 2 * 15 * 10;
        assert_eq!(sodda.iteration_cost().0, 24 * 255 + inner);
        assert_eq!(radisa.iteration_cost().0, 30 * 300 + inner);
        // comm: 8 * (c*P + m~*Q*P + M)
        assert_eq!(sodda.iteration_cost().2, 8 * (24 * 5 + 2 * 15 + 30));
    }

    #[test]
    fn config_errors() {
        let g = generate_synthetic(60, 12, 4, 0.01).unwrap().grid;
        let bad = RunConfig {
            obs_partitions: 7,
            ..RunConfig::default()
        };
        assert!(matches!(Engine::new(bad, &g), Err(Error::Divisibility(_))));
        let bad = RunConfig {
            inner_steps: 0,
            obs_partitions: 3,
            feature_blocks: 2,
            ..RunConfig::default()
        };
        assert!(matches!(Engine::new(bad, &g), Err(Error::Config(_))));
        let bad = RunConfig {
            c_frac: 0.0,
            obs_partitions: 3,
            feature_blocks: 2,
            ..RunConfig::default()
        };
        assert!(matches!(Engine::new(bad, &g), Err(Error::Fraction { .. })));
    }

    #[test]
    fn eval_cadence() {
        let g = generate_regression(40, 12, 3, 0.1).unwrap().grid;
        let cfg = RunConfig {
            eval_every: 2,
            outer_iterations: 5,
            ..ls_config(2, 3)
        };
        let (_, trace) = run(&cfg, &g).unwrap();
        let evaluated: Vec<u64> = trace
            .iter()
            .filter(|r| r.loss.is_some())
            .map(|r| r.t)
            .collect();
        assert_eq!(evaluated, vec![2, 4, 5]);
        assert!(trace
            .windows(2)
            .all(|w| w[1].grad_components > w[0].grad_components));
    }
}
