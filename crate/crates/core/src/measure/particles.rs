//! Monte Carlo particle clouds.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::maps::MapFamily;
use crate::rng::particle_stream;
use crate::schedule::SamplingMeasure;

use super::DiscreteMeasure;

/// `N` equally weighted particles at within-epoch step `step` of epoch `epoch`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleCloud {
    dim: usize,
    points: Vec<f64>,
    pub epoch: usize,
    pub step: usize,
}

impl ParticleCloud {
    pub fn new(dim: usize, points: Vec<f64>, epoch: usize, step: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::invalid("cloud needs at least one point of dimension >= 1"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("cloud points must be finite"));
        }
        Ok(Self {
            dim,
            points,
            epoch,
            step,
        })
    }

    /// `n` copies of `x`.
    pub fn replicate(x: &[f64], n: usize, epoch: usize) -> Result<Self> {
        Self::new(x.len(), x.repeat(n), epoch, 0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Empirical measure (weight `1/N` per particle, coincident points merged).
    pub fn to_measure(&self) -> DiscreteMeasure {
        DiscreteMeasure::uniform(self.dim, self.points.clone()).expect("cloud is valid")
    }

    /// Empirical measure of the particles at `indices`.
    pub fn subsample_measure(&self, indices: &[usize]) -> DiscreteMeasure {
        let pts = indices.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        DiscreteMeasure::uniform(self.dim, pts).expect("cloud is valid")
    }

    /// Same points relabelled as the start of another epoch.
    pub fn handoff(&self, epoch: usize) -> Self {
        Self {
            epoch,
            step: 0,
            ..self.clone()
        }
    }
}

/// Which intermediate clouds to keep during a long epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecordPlan {
    /// Steps (in `0..=steps`) whose cloud is kept. Sorted and deduplicated internally.
    pub steps: Vec<usize>,
    /// Record the whole trajectory of this particle.
    pub track_particle: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct EpochRecording {
    /// Clouds at the requested steps, in increasing step order.
    pub snapshots: Vec<ParticleCloud>,
    /// Cloud after the last step.
    pub last: ParticleCloud,
    /// Positions of the tracked particle after steps `1..=steps`, flattened.
    pub path: Vec<f64>,
}

/// Runs every particle for `steps` steps and returns all `steps + 1` clouds.
///
/// Particle `p` draws from the stream keyed `(seed, start.epoch, p)`.
pub fn simulate_epoch(
    start: &ParticleCloud,
    family: &MapFamily,
    mu: &SamplingMeasure,
    steps: usize,
    seed: u64,
) -> Result<Vec<ParticleCloud>> {
    let plan = RecordPlan {
        steps: (0..=steps).collect(),
        track_particle: None,
    };
    Ok(simulate_epoch_recorded(start, family, mu, steps, seed, &plan, 1)?.snapshots)
}

/// Streaming variant of [`simulate_epoch`] that keeps only planned clouds.
///
/// Particles are split into contiguous shards across `threads` workers;
/// the output does not depend on `threads`.
pub fn simulate_epoch_recorded(
    start: &ParticleCloud,
    family: &MapFamily,
    mu: &SamplingMeasure,
    steps: usize,
    seed: u64,
    plan: &RecordPlan,
    threads: usize,
) -> Result<EpochRecording> {
    if mu.len() != family.len() {
        return Err(Error::invalid("sampling measure and family sizes differ"));
    }
    if start.dim() != family.dimension() {
        return Err(Error::invalid("cloud and family dimensions differ"));
    }
    let mut record: Vec<usize> = plan.steps.iter().copied().filter(|s| *s <= steps).collect();
    record.sort_unstable();
    record.dedup();
    if let Some(p) = plan.track_particle {
        if p >= start.len() {
            return Err(Error::invalid(format!("tracked particle {p} out of range")));
        }
    }

    let d = start.dim();
    let n = start.len();
    let epoch = start.epoch;
    let maps: Vec<_> = family.iter().collect();

    struct Shard {
        snaps: Vec<Vec<f64>>,
        last: Vec<f64>,
        path: Vec<f64>,
    }

    let run_shard = |range: std::ops::Range<usize>| -> Shard {
        let mut snaps = vec![Vec::with_capacity(range.len() * d); record.len()];
        let mut last = Vec::with_capacity(range.len() * d);
        let mut path = Vec::new();
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        for p in range {
            let mut rng = particle_stream(seed, epoch, p);
            x.copy_from_slice(start.point(p));
            let tracked = plan.track_particle == Some(p);
            if tracked {
                path.reserve(steps * d);
            }
            let mut next_rec = 0;
            if record.first() == Some(&0) {
                snaps[0].extend_from_slice(&x);
                next_rec = 1;
            }
            for s in 1..=steps {
                let j = mu.sample_index(&mut rng);
                maps[j - 1].apply_into(&x, &mut y);
                std::mem::swap(&mut x, &mut y);
                if tracked {
                    path.extend_from_slice(&x);
                }
                if next_rec < record.len() && record[next_rec] == s {
                    snaps[next_rec].extend_from_slice(&x);
                    next_rec += 1;
                }
            }
            last.extend_from_slice(&x);
        }
        Shard { snaps, last, path }
    };

    let threads = threads.max(1);
    let shards: Vec<Shard> = if threads == 1 || n < 2 {
        vec![run_shard(0..n)]
    } else {
        let chunk = n.div_ceil(threads);
        let ranges: Vec<_> = (0..n).step_by(chunk).map(|a| a..(a + chunk).min(n)).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| ranges.into_par_iter().map(run_shard).collect())
    };

    let mut snapshots = Vec::with_capacity(record.len());
    for (r, &s) in record.iter().enumerate() {
        let pts: Vec<f64> = shards.iter().flat_map(|sh| sh.snaps[r].iter().copied()).collect();
        snapshots.push(ParticleCloud {
            dim: d,
            points: pts,
            epoch,
            step: s,
        });
    }
    let last = ParticleCloud {
        dim: d,
        points: shards.iter().flat_map(|sh| sh.last.iter().copied()).collect(),
        epoch,
        step: steps,
    };
    let path = shards.into_iter().flat_map(|sh| sh.path).collect();
    Ok(EpochRecording {
        snapshots,
        last,
        path,
    })
}
