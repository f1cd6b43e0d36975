//! Parallel trajectory ensembles with order-independent reduction.
//!
//! Trajectory `k` always uses noise stream `(base_seed, k)`. Per-trajectory
//! series are kept until every trajectory has finished and are then folded
//! into [`RunningStats`] in trajectory-id order, so the finalized numbers do
//! not depend on the worker count or on scheduling.

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dynamics::{self, ObserverConfig, SimParams, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::lattice::LatticeGeometry;
use crate::noise::NoiseStream;
use crate::observables::Observable;
use crate::stats::RunningStats;

#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub geometry: LatticeGeometry,
    pub params: SimParams,
    pub base_seed: u64,
    pub trajectories: u64,
    pub t_max: f64,
    pub record_times: Vec<f64>,
    pub observables: Vec<Observable>,
    pub observer: ObserverConfig,
}

impl EnsembleSpec {
    /// SHA-256 over a canonical rendering of every input that affects the output.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let g = &self.geometry;
        let p = &self.params;
        h.update(format!(
            "d={};N={};tau={:016x};gamma={:016x};dt={:016x};model={};renorm={};seed={};M={};t_max={:016x};floor={:016x};",
            g.dim(),
            g.n(),
            p.tau.to_bits(),
            p.gamma.to_bits(),
            p.dt.to_bits(),
            p.model,
            p.renormalize_local,
            self.base_seed,
            self.trajectories,
            self.t_max.to_bits(),
            self.observer.floor.to_bits(),
        ));
        for t in &self.record_times {
            h.update(t.to_bits().to_le_bytes());
        }
        for o in &self.observables {
            h.update(o.name());
            h.update(b";");
        }
        hex::encode(h.finalize())
    }
}

/// Ensemble statistics of each observable at each record time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSeries {
    pub record_times: Vec<f64>,
    pub observables: Vec<Observable>,
    /// `stats[o][k]`: observable `o` at record time `k`.
    pub stats: Vec<Vec<RunningStats>>,
    pub params_fingerprint: String,
    pub floored_total: u64,
}

impl EnsembleSeries {
    pub fn observable_index(&self, o: Observable) -> Option<usize> {
        self.observables.iter().position(|&x| x == o)
    }

    pub fn series(&self, o: Observable) -> Option<&[RunningStats]> {
        self.observable_index(o).map(|i| self.stats[i].as_slice())
    }

    /// `(t, mean)` pairs of one observable.
    pub fn means(&self, o: Observable) -> Option<Vec<(f64, f64)>> {
        self.series(o).map(|s| {
            self.record_times
                .iter()
                .zip(s)
                .map(|(&t, st)| (t, st.mean))
                .collect()
        })
    }

    /// Folds trajectory records, in the order given, into ensemble statistics.
    pub fn from_records(records: &[TrajectoryRecord], fingerprint: String) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::contract("ensemble needs at least one trajectory"))?;
        let n_obs = first.observables.len();
        let n_t = first.record_times.len();
        let mut stats = vec![vec![RunningStats::new(); n_t]; n_obs];
        let mut floored_total = 0;
        for rec in records {
            for (o, row) in rec.values.iter().enumerate() {
                for (k, &v) in row.iter().enumerate() {
                    stats[o][k].push(v);
                }
            }
            floored_total += rec.floored_total;
        }
        Ok(Self {
            record_times: first.record_times.clone(),
            observables: first.observables.clone(),
            stats,
            params_fingerprint: fingerprint,
            floored_total,
        })
    }
}

/// Runs `spec.trajectories` trajectories on `workers` threads (0 = rayon default).
pub fn run_ensemble(spec: &EnsembleSpec, workers: usize) -> Result<EnsembleSeries> {
    let records = run_records(spec, workers)?;
    EnsembleSeries::from_records(&records, spec.fingerprint())
}

/// Runs every trajectory and returns the raw records in trajectory-id order.
pub fn run_records(spec: &EnsembleSpec, workers: usize) -> Result<Vec<TrajectoryRecord>> {
    if spec.trajectories < 1 {
        return Err(Error::contract("trajectory count M must be >= 1"));
    }
    spec.params.validate(spec.geometry.dim())?;
    dynamics::validate_record_times(&spec.record_times, spec.t_max)?;

    let run_one = |id: u64| {
        let mut stream = NoiseStream::new(spec.base_seed, id);
        let mut rec = dynamics::run_trajectory(
            &spec.geometry,
            &spec.params,
            &mut stream,
            spec.t_max,
            &spec.record_times,
            &spec.observables,
            spec.observer,
        )?;
        // The ensemble keeps only the series; final states can be large.
        rec.final_state.amplitudes = Vec::new();
        Ok::<_, Error>(rec)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::contract(format!("cannot build worker pool: {e}")))?;
    let results: Vec<Result<TrajectoryRecord>> = pool.install(|| {
        (0..spec.trajectories)
            .into_par_iter()
            .map(run_one)
            .collect()
    });

    let mut records = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(Error::BlowUp {
                step,
                trajectory_id,
                detail,
            }) => {
                let p = &spec.params;
                return Err(Error::BlowUp {
                    step,
                    trajectory_id,
                    detail: format!(
                        "{detail} [d={}, N={}, model={}, tau={}, gamma={}, dt={}]",
                        spec.geometry.dim(),
                        spec.geometry.n(),
                        p.model,
                        p.tau,
                        p.gamma,
                        p.dt
                    ),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(records)
}
