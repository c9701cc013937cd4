use super::{DynamicsError, EvolutionTrace, Snapshot, StateFilter, WatchSeries};
use crate::model::HamiltonianMatrix;
use crate::scalar::{cx, Cx, Real};

/// Compressed-row copy of a Hamiltonian used for the matrix-vector products
/// of the integrator. The chains have at most three non-zeros per row.
#[derive(Debug, Clone)]
pub struct SparseOperator<T> {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Cx<T>>,
}

impl<T: Real> SparseOperator<T> {
    pub fn from_dense(h: &HamiltonianMatrix<T>) -> Self {
        let n = h.dim();
        let mut op = SparseOperator { row_start: Vec::with_capacity(n + 1), cols: vec![], vals: vec![] };
        op.row_start.push(0);
        for i in 0..n {
            for (j, &z) in h.row(i).iter().enumerate() {
                if z != Cx::default() {
                    op.cols.push(j);
                    op.vals.push(z);
                }
            }
            op.row_start.push(op.cols.len());
        }
        op
    }

    pub fn dim(&self) -> usize {
        self.row_start.len() - 1
    }

    /// `out = factor * H x`.
    pub fn apply_scaled(&self, x: &[Cx<T>], out: &mut [Cx<T>], factor: Cx<T>) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = Cx::<T>::default();
            for p in self.row_start[i]..self.row_start[i + 1] {
                acc = acc + self.vals[p] * x[self.cols[p]];
            }
            *o = acc * factor;
        }
    }

    /// Gershgorin bound on the spectral radius.
    pub fn gershgorin(&self) -> T {
        (0..self.dim())
            .map(|i| (self.row_start[i]..self.row_start[i + 1]).fold(T::zero(), |a, p| a + self.vals[p].norm()))
            .fold(T::zero(), T::max)
    }
}

/// What to do when probability reaches the artificial ends of a truncated
/// chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPolicy {
    Abort,
    Flag,
}

/// Watches the probability on the outer sites of a truncated chain.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMonitor<T> {
    pub sites: Vec<usize>,
    pub threshold: T,
    pub policy: BoundaryPolicy,
}

impl<T: Real> BoundaryMonitor<T> {
    /// The five sites at the left end, `1e-8` threshold, abort.
    pub fn left_end(dim: usize) -> Self {
        Self { sites: (0..5.min(dim)).collect(), threshold: T::lit(1e-8), policy: BoundaryPolicy::Abort }
    }

    /// Five sites at both ends of the chain part `0..chain_len`.
    pub fn both_ends(chain_len: usize) -> Self {
        let mut sites: Vec<usize> = (0..5.min(chain_len)).collect();
        sites.extend(chain_len.saturating_sub(5)..chain_len);
        sites.dedup();
        Self { sites, threshold: T::lit(1e-8), policy: BoundaryPolicy::Abort }
    }
}

/// Step control: the requested step must not exceed `max_dt_kappa/κ` and the
/// local error estimate `(dt ρ)^5/120` must stay under `tolerance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepGuard<T> {
    pub max_dt_kappa: T,
    pub tolerance: T,
}

impl<T: Real> Default for StepGuard<T> {
    fn default() -> Self {
        Self { max_dt_kappa: T::lit(0.02), tolerance: T::lit(1e-8) }
    }
}

#[derive(Clone)]
pub struct EvolveOptions<'a, T> {
    pub dt: T,
    /// Spacing of `times`/`total_probability` samples.
    pub sample_interval: T,
    /// Times at which full site probabilities are stored.
    pub snapshot_times: Vec<T>,
    /// Keep the amplitudes as well as the probabilities in snapshots.
    pub snapshot_amplitudes: bool,
    pub boundary: Option<BoundaryMonitor<T>>,
    /// Named site groups whose summed probability is recorded per sample.
    pub watch: Vec<(String, Vec<usize>)>,
    pub filter: Option<&'a dyn StateFilter<T>>,
    /// Filter period in time units; the filter also runs at `t = 0`.
    pub filter_interval: T,
    pub guard: StepGuard<T>,
}

impl<'a, T: Real> EvolveOptions<'a, T> {
    pub fn new(dt: T) -> Self {
        Self {
            dt,
            sample_interval: T::one(),
            snapshot_times: vec![],
            snapshot_amplitudes: false,
            boundary: None,
            watch: vec![],
            filter: None,
            filter_interval: T::one(),
            guard: StepGuard::default(),
        }
    }

    pub fn sample_every(mut self, interval: T) -> Self {
        self.sample_interval = interval;
        self
    }

    pub fn snapshots(mut self, times: Vec<T>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_amplitudes(mut self) -> Self {
        self.snapshot_amplitudes = true;
        self
    }

    pub fn monitor(mut self, monitor: BoundaryMonitor<T>) -> Self {
        self.boundary = Some(monitor);
        self
    }

    pub fn watch(mut self, name: impl Into<String>, sites: Vec<usize>) -> Self {
        self.watch.push((name.into(), sites));
        self
    }

    pub fn filter(mut self, filter: &'a dyn StateFilter<T>, interval: T) -> Self {
        self.filter = Some(filter);
        self.filter_interval = interval;
        self
    }
}

fn steps_for<T: Real>(span: T, dt: T) -> usize {
    (span / dt).round().to_usize().unwrap_or(0)
}

/// Integrates `i dψ/dt = Hψ` from `t = 0` to `t_final` with the classical
/// fourth-order Runge-Kutta step. For a constant linear generator the stage
/// combination collapses to the degree-4 Taylor polynomial of `e^{-iH dt}`,
/// which is what is evaluated.
pub fn evolve<T: Real>(
    h: &HamiltonianMatrix<T>,
    state: &[Cx<T>],
    t_final: T,
    opts: &EvolveOptions<'_, T>,
) -> Result<EvolutionTrace<T>, DynamicsError> {
    let dim = h.dim();
    if state.len() != dim {
        return Err(DynamicsError::Precondition(format!("state has {} entries for a {dim}-site lattice", state.len())));
    }
    let dt = opts.dt;
    let scale = h.energy_scale();
    let max_dt = opts.guard.max_dt_kappa / scale;
    if dt.is_nan() || dt <= T::zero() || dt > max_dt * (T::one() + T::lit(1e-12)) {
        return Err(DynamicsError::StepTooLarge { dt: dt.to_f64_lossy(), max: max_dt.to_f64_lossy() });
    }
    let op = SparseOperator::from_dense(h);
    let estimate = (dt * op.gershgorin()).powi(5) / T::lit(120.0);
    if estimate > opts.guard.tolerance {
        return Err(DynamicsError::StepSize { estimate: estimate.to_f64_lossy() });
    }

    let n_steps = steps_for(t_final, dt);
    let sample_every = steps_for(opts.sample_interval, dt).max(1);
    let filter_every = steps_for(opts.filter_interval, dt).max(1);
    let mut snap_steps: Vec<(usize, usize)> =
        opts.snapshot_times.iter().enumerate().map(|(i, &t)| (steps_for(t, dt), i)).collect();
    snap_steps.sort();

    let mut trace = EvolutionTrace {
        times: vec![],
        total_probability: vec![],
        snapshots: vec![],
        labels: h.labels().to_vec(),
        watch: opts
            .watch
            .iter()
            .map(|(name, sites)| WatchSeries { name: name.clone(), sites: sites.clone(), values: vec![] })
            .collect(),
        events: vec![],
        platform_height: None,
        boundary_contamination: false,
        final_state: vec![],
    };

    let mut psi = state.to_vec();
    if let Some(f) = opts.filter {
        f.apply(&mut psi);
    }
    let mut z = vec![Cx::<T>::default(); dim];
    let mut w = vec![Cx::<T>::default(); dim];
    let mut next_snap = 0;
    let minus_i_dt = cx(T::zero(), -dt);

    for step in 0..=n_steps {
        let t = T::count(step) * dt;
        let sample = step % sample_every == 0 || step == n_steps;
        let snap = next_snap < snap_steps.len() && snap_steps[next_snap].0 == step;
        if sample || snap {
            let probs: Vec<T> = psi.iter().map(|z| z.norm_sqr()).collect();
            if probs.iter().any(|p| !p.is_finite()) {
                return Err(DynamicsError::NonFinite(t.to_f64_lossy()));
            }
            if let Some(m) = &opts.boundary {
                let edge = m.sites.iter().fold(T::zero(), |a, &i| a + probs[i]);
                if edge > m.threshold {
                    match m.policy {
                        BoundaryPolicy::Abort => {
                            return Err(DynamicsError::BoundaryContamination {
                                time: t.to_f64_lossy(),
                                probability: edge.to_f64_lossy(),
                            })
                        }
                        BoundaryPolicy::Flag => trace.boundary_contamination = true,
                    }
                }
            }
            if sample {
                trace.times.push(t);
                trace.total_probability.push(probs.iter().fold(T::zero(), |a, &b| a + b));
                for ws in trace.watch.iter_mut() {
                    ws.values.push(ws.sites.iter().fold(T::zero(), |a, &i| a + probs[i]));
                }
            }
            while next_snap < snap_steps.len() && snap_steps[next_snap].0 == step {
                let amplitudes = opts.snapshot_amplitudes.then(|| psi.clone());
                trace.snapshots.push(Snapshot { time: t, probabilities: probs.clone(), amplitudes });
                next_snap += 1;
            }
        }
        if step == n_steps {
            break;
        }
        // ψ += Σ_{m=1..4} (-i dt H)^m ψ / m!
        z.copy_from_slice(&psi);
        for m in 1..=4 {
            op.apply_scaled(&z, &mut w, minus_i_dt / cx(T::count(m), T::zero()));
            std::mem::swap(&mut z, &mut w);
            for (p, q) in psi.iter_mut().zip(&z) {
                *p = *p + *q;
            }
        }
        if let Some(f) = opts.filter {
            if (step + 1) % filter_every == 0 {
                f.apply(&mut psi);
            }
        }
    }
    trace.final_state = psi;
    Ok(trace)
}
