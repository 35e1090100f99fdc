//! Generalization bounds driven by moments of the pDP loss, and Monte-Carlo
//! estimates of the on-average generalization gap they control.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::accounting::ops_pdp_bound;
use crate::data::{DataPoint, Dataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::mechanisms::MechanismSpec;
use crate::ridge::fit_ridge;
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::stats::{pairwise_sum, MeanEstimate};
use crate::Vector;

/// Draws of `(ε(Z, z), δ(Z, z))`, optionally labelled by the data set `Z`
/// they were computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct PdpSampleSet {
    eps: Vec<f64>,
    delta: Vec<f64>,
    groups: Option<Vec<usize>>,
}

impl PdpSampleSet {
    pub fn new(eps: Vec<f64>, delta: Vec<f64>, groups: Option<Vec<usize>>) -> Result<Self> {
        if eps.len() != delta.len() {
            return Err(Error::Dimension { expected: eps.len(), found: delta.len() });
        }
        if let Some(g) = &groups {
            if g.len() != eps.len() {
                return Err(Error::Dimension { expected: eps.len(), found: g.len() });
            }
        }
        if let Some(e) = eps.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return Err(Error::param(format!("eps samples must be finite and nonnegative, found {e}")));
        }
        if let Some(d) = delta.iter().find(|d| !(0.0..1.0).contains(*d)) {
            return Err(Error::param(format!("delta samples must lie in [0, 1), found {d}")));
        }
        Ok(Self { eps, delta, groups })
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// Indices per group, keyed by group id. Ungrouped sets form one group.
    fn partition(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..self.len() {
            let g = self.groups.as_ref().map_or(0, |g| g[i]);
            map.entry(g).or_default().push(i);
        }
        map
    }

    fn mean_over(&self, idx: &[usize], f: impl Fn(f64, f64) -> f64) -> f64 {
        let v: Vec<f64> = idx.iter().map(|&i| f(self.eps[i], self.delta[i])).collect();
        pairwise_sum(&v) / v.len() as f64
    }

    fn mean(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.mean_over(&idx, f)
    }
}

/// Nonnegative importance weights `ρᵢ = D′(zᵢ)/D(zᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceWeights {
    rho: Vec<f64>,
}

impl ImportanceWeights {
    pub fn new(rho: Vec<f64>) -> Result<Self> {
        if let Some(r) = rho.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(Error::param(format!("importance weights must be finite and nonnegative, found {r}")));
        }
        Ok(Self { rho })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rho
    }
}

/// Plug-in value of `E_Z(E[e^ε | Z])² − 1 + E δ + E_Z[E(e^ε | Z)·E(δ | Z)]`.
pub fn gen_bound(samples: &PdpSampleSet) -> Result<f64> {
    if samples.groups.is_none() {
        return Err(Error::param("generalization bound needs samples grouped by data set"));
    }
    if samples.is_empty() {
        return Err(Error::param("empty sample set"));
    }
    let parts = samples.partition();
    let mut first = Vec::with_capacity(parts.len());
    let mut third = Vec::with_capacity(parts.len());
    for idx in parts.values() {
        let m_exp = samples.mean_over(idx, |e, _| e.exp());
        let m_delta = samples.mean_over(idx, |_, d| d);
        first.push(m_exp * m_exp);
        third.push(m_exp * m_delta);
    }
    let g = parts.len() as f64;
    Ok(pairwise_sum(&first) / g - 1.0 + samples.mean(|_, d| d) + pairwise_sum(&third) / g)
}

/// The cross-domain bound in its pairwise form and in the simplified form
/// with a common δ, plus the order-2 Taylor truncation of the latter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossDomainBound {
    pub pairwise: f64,
    pub simplified: f64,
    pub simplified_taylor2: f64,
}

/// Base samples have `z ∼ D`, target samples `z ∼ D′`. The pairwise form
/// averages `e^{ε′+ε″} − 1 + δ′ + e^{ε′}δ″` over pairs drawn on the same `Z`
/// (matched by group id; ungrouped sets share a single `Z`). The simplified
/// form is `½[E_D e^{2ε} + E_D′ e^{2ε}] − 1 + 2δ` with `δ` the largest δ seen.
pub fn crossdomain_bound(samples_base: &PdpSampleSet, samples_target: &PdpSampleSet) -> Result<CrossDomainBound> {
    if samples_base.is_empty() || samples_target.is_empty() {
        return Err(Error::param("empty sample set"));
    }
    if samples_base.groups.is_some() != samples_target.groups.is_some() {
        return Err(Error::param("base and target samples must both be grouped or both ungrouped"));
    }
    let pb = samples_base.partition();
    let pt = samples_target.partition();
    if !pb.keys().eq(pt.keys()) {
        return Err(Error::param("base and target samples cover different data sets"));
    }
    let terms: Vec<f64> = pb
        .iter()
        .map(|(g, ib)| {
            let it = &pt[g];
            let eb = samples_base.mean_over(ib, |e, _| e.exp());
            let et = samples_target.mean_over(it, |e, _| e.exp());
            let db = samples_base.mean_over(ib, |_, d| d);
            let dt = samples_target.mean_over(it, |_, d| d);
            eb * et - 1.0 + db + eb * dt
        })
        .collect();
    let pairwise = pairwise_sum(&terms) / terms.len() as f64;

    let delta = samples_base.delta.iter().chain(&samples_target.delta).fold(0.0f64, |a, &b| a.max(b));
    let simplified =
        0.5 * (samples_base.mean(|e, _| (2.0 * e).exp()) + samples_target.mean(|e, _| (2.0 * e).exp())) - 1.0
            + 2.0 * delta;
    let m1 = samples_base.mean(|e, _| e) + samples_target.mean(|e, _| e);
    let m2 = samples_base.mean(|e, _| e * e) + samples_target.mean(|e, _| e * e);
    let simplified_taylor2 = 0.5 * (2.0 * m1 + 2.0 * m2) + 2.0 * delta;
    Ok(CrossDomainBound { pairwise, simplified, simplified_taylor2 })
}

/// Monte-Carlo estimate of a generalization gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEstimate {
    pub gap: f64,
    pub stderr: f64,
    pub trials: usize,
}

fn clipped_loss(theta: &Vector, z: &DataPoint, cap: f64) -> f64 {
    (z.y - z.x.dot(theta)).powi(2).min(cap)
}

fn check_cap(loss_cap: f64) -> Result<()> {
    if !(loss_cap > 0.0 && loss_cap <= 1.0) {
        return Err(Error::param(format!("loss cap must lie in (0, 1], got {loss_cap}")));
    }
    Ok(())
}

fn trial_data(cfg: &SyntheticConfig, trial_seed: u64) -> Result<Dataset> {
    let mut c = cfg.clone();
    c.seed = derive_seed(trial_seed, 0);
    Ok(crate::data::generate_linear_gaussian(&c)?.0)
}

fn summarize(diffs: &[f64]) -> GapEstimate {
    let m = MeanEstimate::from_samples(diffs);
    GapEstimate { gap: m.mean.abs(), stderr: m.stderr, trials: diffs.len() }
}

/// `|E[train loss − fresh loss]|` for the releases of `spec` on data from
/// `cfg`, with losses clipped at `loss_cap`.
pub fn empirical_gap(
    spec: &MechanismSpec,
    cfg: &SyntheticConfig,
    loss_cap: f64,
    trials: usize,
    seed: u64,
) -> Result<GapEstimate> {
    empirical_gap_with(cfg, loss_cap, trials, seed, |ds, s| Ok(spec.release(ds, s)?.theta_tilde))
}

/// [`empirical_gap`] for an arbitrary release rule `mechanism(data, seed)`.
pub fn empirical_gap_with<F>(cfg: &SyntheticConfig, loss_cap: f64, trials: usize, seed: u64, mechanism: F) -> Result<GapEstimate>
where
    F: Fn(&Dataset, u64) -> Result<Vector> + Sync,
{
    check_cap(loss_cap)?;
    cfg.validate()?;
    let diffs: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let ts = derive_seed(seed, t as u64);
            let ds = trial_data(cfg, ts)?;
            let theta = mechanism(&ds, derive_seed(ts, 1))?;
            let mut rng = rng_from_seed(derive_seed(ts, 2));
            let train: Vec<f64> = ds.iter().map(|z| clipped_loss(&theta, z, loss_cap)).collect();
            let fresh: Vec<f64> =
                (0..cfg.n).map(|_| clipped_loss(&theta, &cfg.sample_point(&mut rng), loss_cap)).collect();
            Ok(pairwise_sum(&train) / train.len() as f64 - pairwise_sum(&fresh) / fresh.len() as f64)
        })
        .collect::<Result<_>>()?;
    Ok(summarize(&diffs))
}

/// Target domain `D′` with density ratio `ρ(x) = 1 + a·x₁` to the base
/// synthetic distribution (`|a| ≤ 1`; `E_D ρ = 1` by symmetry of the
/// feature law).
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedDomain {
    pub base: SyntheticConfig,
    pub tilt: f64,
}

impl TiltedDomain {
    pub fn new(base: SyntheticConfig, tilt: f64) -> Result<Self> {
        base.validate()?;
        if !(tilt.abs() <= 1.0) || base.d == 0 {
            return Err(Error::param(format!("tilt must lie in [-1, 1] with d >= 1, got {tilt}")));
        }
        Ok(Self { base, tilt })
    }

    pub fn weight(&self, x: &Vector) -> f64 {
        1.0 + self.tilt * x[0]
    }

    pub fn weights(&self, ds: &Dataset) -> ImportanceWeights {
        ImportanceWeights { rho: ds.iter().map(|z| self.weight(&z.x)).collect() }
    }

    /// One draw from `D′` by rejection from `D`.
    pub fn sample_target(&self, rng: &mut SimRng) -> DataPoint {
        let bound = 1.0 + self.tilt.abs();
        loop {
            let z = self.base.sample_point(rng);
            if rng.random::<f64>() * bound <= self.weight(&z.x) {
                return z;
            }
        }
    }
}

/// Importance-weighted cross-domain gap
/// `|E[(1/n)Σρᵢℓ(θ, zᵢ) − ℓ(θ, z)]|`, `z ∼ D′`.
pub fn crossdomain_gap_with<F>(
    domain: &TiltedDomain,
    loss_cap: f64,
    trials: usize,
    seed: u64,
    mechanism: F,
) -> Result<GapEstimate>
where
    F: Fn(&Dataset, u64) -> Result<Vector> + Sync,
{
    check_cap(loss_cap)?;
    let cfg = &domain.base;
    let diffs: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let ts = derive_seed(seed, t as u64);
            let ds = trial_data(cfg, ts)?;
            let theta = mechanism(&ds, derive_seed(ts, 1))?;
            let rho = domain.weights(&ds);
            let train: Vec<f64> =
                ds.iter().zip(rho.as_slice()).map(|(z, r)| r * clipped_loss(&theta, z, loss_cap)).collect();
            let mut rng = rng_from_seed(derive_seed(ts, 2));
            let fresh: Vec<f64> =
                (0..cfg.n).map(|_| clipped_loss(&theta, &domain.sample_target(&mut rng), loss_cap)).collect();
            Ok(pairwise_sum(&train) / train.len() as f64 - pairwise_sum(&fresh) / fresh.len() as f64)
        })
        .collect::<Result<_>>()?;
    Ok(summarize(&diffs))
}

/// OPS pDP samples `ε(Z, z)` at fixed δ for `groups` data sets `Z` from
/// `cfg`, each with `per_group` fresh targets (drawn from `target` when
/// given, else from the base distribution).
#[allow(clippy::too_many_arguments)]
pub fn ops_sample_set(
    cfg: &SyntheticConfig,
    lambda: f64,
    gamma: f64,
    delta: f64,
    groups: usize,
    per_group: usize,
    seed: u64,
    target: Option<&TiltedDomain>,
) -> Result<PdpSampleSet> {
    let rows: Vec<Vec<f64>> = (0..groups)
        .into_par_iter()
        .map(|g| {
            let gs = derive_seed(seed, g as u64);
            let ds = trial_data(cfg, gs)?;
            let sol = fit_ridge(&ds, lambda)?;
            let mut rng = rng_from_seed(derive_seed(gs, 3));
            (0..per_group)
                .map(|_| {
                    let z = match target {
                        Some(t) => t.sample_target(&mut rng),
                        None => cfg.sample_point(&mut rng),
                    };
                    Ok(ops_pdp_bound(&sol, &z, gamma, delta)?.eps)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let ids = (0..groups).flat_map(|g| std::iter::repeat_n(g, per_group)).collect();
    let eps: Vec<f64> = rows.into_iter().flatten().collect();
    let n = eps.len();
    PdpSampleSet::new(eps, vec![delta; n], Some(ids))
}
