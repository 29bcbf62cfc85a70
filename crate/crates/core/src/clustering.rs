//! Offline Lloyd K-means compression of a PSS template.
//!
//! The `N` complex template samples are partitioned into `K` clusters by
//! minimising the weighted within-cluster sum of squares
//! `Σ_k w_k Σ_{n∈P_k} |s(n) - μ_k|²`. The correlator then only needs the `K`
//! cluster leaders `μ_k` plus a permutation LUT that groups template
//! positions by cluster.

use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pss::{conjugate_root, PssWaveform};
use crate::{Error, Result, C64};

pub const TABLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansOptions {
    pub max_iters: usize,
    /// Extra runs from random initial means, keeping the lowest WWCSS.
    /// Zero runs only the deterministic farthest-point initialisation.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            restarts: 0,
            seed: 0,
        }
    }
}

/// A converged (or iteration-capped) partition of a template.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTable {
    root: u32,
    means: Vec<C64>,
    sizes: Vec<usize>,
    weights: Vec<f64>,
    lut: Vec<usize>,
    assignment: Vec<usize>,
    final_wwcss: f64,
    converged: bool,
}

impl ClusterTable {
    pub fn root(&self) -> u32 {
        self.root
    }

    /// Template length `N`.
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[C64] {
        &self.means
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Template positions grouped by cluster: cluster `k` occupies
    /// `lut[offset(k)..offset(k) + sizes[k]]`, ascending within the cluster.
    pub fn lut(&self) -> &[usize] {
        &self.lut
    }

    /// Cluster index `k(n)` of every template position.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn final_wwcss(&self) -> f64 {
        self.final_wwcss
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Start of cluster `k` in the LUT.
    pub fn offsets(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .scan(0, |acc, &s| {
                let start = *acc;
                *acc += s;
                Some(start)
            })
            .collect()
    }

    /// The clustered template `μ_{k(n)}`.
    pub fn quantized_template(&self) -> Vec<C64> {
        self.assignment.iter().map(|&k| self.means[k]).collect()
    }

    /// Builds a table from an explicit assignment, with means set to the
    /// cluster centroids.
    pub fn from_assignment(
        root: u32,
        samples: &[C64],
        assignment: Vec<usize>,
        weights: Vec<f64>,
        converged: bool,
    ) -> Result<Self> {
        let k = weights.len();
        if assignment.len() != samples.len() {
            return Err(Error::LengthMismatch {
                expected: samples.len(),
                got: assignment.len(),
            });
        }
        if assignment.iter().any(|&a| a >= k) {
            return Err(Error::param("assignment", "cluster index out of range"));
        }
        let means = centroids(samples, &assignment, k)
            .ok_or_else(|| Error::param("assignment", "empty cluster"))?;
        let final_wwcss = wwcss(samples, &assignment, &means, &weights);
        let mut sizes = vec![0usize; k];
        for &a in &assignment {
            sizes[a] += 1;
        }
        let lut = (0..k)
            .flat_map(|c| {
                let assignment = &assignment;
                (0..assignment.len()).filter(move |&n| assignment[n] == c)
            })
            .collect();
        Ok(Self {
            root,
            means,
            sizes,
            weights,
            lut,
            assignment,
            final_wwcss,
            converged,
        })
    }

    /// Checks the structural invariants: non-empty clusters summing to `N`,
    /// a permutation LUT that agrees with the assignment, positive weights.
    pub fn validate(&self) -> Result<()> {
        let n = self.assignment.len();
        let k = self.means.len();
        let schema = |msg: String| Err(Error::Schema(msg));
        if k == 0 || k > n {
            return schema(format!("K = {k} invalid for N = {n}"));
        }
        if self.sizes.len() != k || self.weights.len() != k {
            return schema("sizes/weights length differs from K".into());
        }
        if self.sizes.iter().any(|&s| s == 0) {
            return schema("empty cluster".into());
        }
        if self.sizes.iter().sum::<usize>() != n {
            return schema(format!("cluster sizes do not sum to N = {n}"));
        }
        if self.weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return schema("weights must be positive".into());
        }
        if self.lut.len() != n {
            return schema("lut_pi length differs from N".into());
        }
        let mut seen = vec![false; n];
        for &p in &self.lut {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return schema(format!("lut_pi is not a permutation (index {p})"));
            }
        }
        for (k, (start, size)) in self.offsets().into_iter().zip(&self.sizes).enumerate() {
            if self.lut[start..start + size]
                .iter()
                .any(|&p| self.assignment[p] != k)
            {
                return schema(format!("lut_pi disagrees with assignment in cluster {k}"));
            }
        }
        Ok(())
    }

    /// True when no sample would prefer another cluster leader under the
    /// weighted assignment rule.
    pub fn is_lloyd_fixed_point(&self, samples: &[C64]) -> bool {
        samples.iter().zip(&self.assignment).all(|(s, &k)| {
            let own = self.weights[k] * (s - self.means[k]).norm_sqr();
            self.means
                .iter()
                .zip(&self.weights)
                .all(|(m, w)| own <= w * (s - m).norm_sqr())
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(&TableFile::from(self))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&TableFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TableFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        file.try_into()
    }
}

/// On-disk layout of a cluster table.
#[derive(Debug, Serialize, Deserialize)]
struct TableFile {
    schema_version: u32,
    root_u: u32,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    weights: Vec<f64>,
    means: Vec<[f64; 2]>,
    sizes: Vec<usize>,
    lut_pi: Vec<usize>,
    assignment: Vec<usize>,
    final_wwcss: f64,
    converged: bool,
}

impl From<&ClusterTable> for TableFile {
    fn from(t: &ClusterTable) -> Self {
        Self {
            schema_version: TABLE_SCHEMA_VERSION,
            root_u: t.root,
            n: t.len(),
            k: t.num_clusters(),
            weights: t.weights.clone(),
            means: t.means.iter().map(|m| [m.re, m.im]).collect(),
            sizes: t.sizes.clone(),
            lut_pi: t.lut.clone(),
            assignment: t.assignment.clone(),
            final_wwcss: t.final_wwcss,
            converged: t.converged,
        }
    }
}

impl TryFrom<TableFile> for ClusterTable {
    type Error = Error;

    fn try_from(f: TableFile) -> Result<Self> {
        if f.schema_version != TABLE_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "schema_version {} (expected {TABLE_SCHEMA_VERSION})",
                f.schema_version
            )));
        }
        if f.means.len() != f.k {
            return Err(Error::Schema(format!("{} means for K = {}", f.means.len(), f.k)));
        }
        if f.assignment.len() != f.n {
            return Err(Error::Schema(format!(
                "{} assignments for N = {}",
                f.assignment.len(),
                f.n
            )));
        }
        if f.assignment.iter().any(|&a| a >= f.k) {
            return Err(Error::Schema("assignment index out of range".into()));
        }
        let table = ClusterTable {
            root: f.root_u,
            means: f.means.iter().map(|&[re, im]| C64::new(re, im)).collect(),
            sizes: f.sizes,
            weights: f.weights,
            lut: f.lut_pi,
            assignment: f.assignment,
            final_wwcss: f.final_wwcss,
            converged: f.converged,
        };
        table.validate()?;
        Ok(table)
    }
}

/// Result of a Lloyd run, with the per-iteration objective.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub table: ClusterTable,
    /// WWCSS after each assignment + centroid update.
    pub wwcss_history: Vec<f64>,
    pub iterations: usize,
}

/// Clusters the template of `w` into `k` clusters with uniform weights.
pub fn cluster_waveform(w: &PssWaveform, k: usize, opts: &KMeansOptions) -> Result<ClusterTable> {
    kmeans_cluster(w.root(), w.body(), k, &vec![1.0; k], opts)
}

/// Partitions `samples` into `k` clusters; see [`lloyd`].
pub fn kmeans_cluster(
    root: u32,
    samples: &[C64],
    k: usize,
    weights: &[f64],
    opts: &KMeansOptions,
) -> Result<ClusterTable> {
    lloyd(root, samples, k, weights, opts).map(|run| run.table)
}

/// Lloyd's algorithm: alternate weighted nearest-leader assignment and
/// centroid update until the assignment repeats or `max_iters` is reached.
///
/// Initial means come from greedy farthest-point seeding starting at sample
/// 0. Ties in assignment go to the lowest cluster index. A cluster left
/// empty by the assignment step receives the sample farthest from its own
/// leader.
pub fn lloyd(
    root: u32,
    samples: &[C64],
    k: usize,
    weights: &[f64],
    opts: &KMeansOptions,
) -> Result<LloydRun> {
    let n = samples.len();
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if k > n {
        return Err(Error::param("k", format!("{k} exceeds sample count {n}")));
    }
    if weights.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::param("weights", "must be positive and finite"));
    }
    if opts.max_iters == 0 {
        return Err(Error::param("max_iters", "must be at least 1"));
    }

    let mut best = run_from(root, samples, farthest_point_init(samples, k, weights), weights, opts.max_iters)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        let init = index::sample(&mut rng, n, k)
            .into_iter()
            .map(|i| samples[i])
            .collect();
        let run = run_from(root, samples, init, weights, opts.max_iters)?;
        if run.table.final_wwcss < best.table.final_wwcss {
            best = run;
        }
    }
    Ok(best)
}

fn run_from(
    root: u32,
    samples: &[C64],
    mut means: Vec<C64>,
    weights: &[f64],
    max_iters: usize,
) -> Result<LloydRun> {
    let k = means.len();
    let mut history = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let assignment = assign_step(samples, &means, weights);
        means = centroids(samples, &assignment, k).expect("repair leaves no empty cluster");
        history.push(wwcss(samples, &assignment, &means, weights));
        let same = previous.as_ref() == Some(&assignment);
        previous = Some(assignment);
        if same {
            converged = true;
            break;
        }
    }
    let assignment = previous.expect("at least one iteration");
    let table = ClusterTable::from_assignment(root, samples, assignment, weights.to_vec(), converged)?;
    Ok(LloydRun {
        table,
        wwcss_history: history,
        iterations,
    })
}

/// One assignment step (with empty-cluster repair) against a table's leaders.
pub fn lloyd_step(samples: &[C64], table: &ClusterTable) -> Vec<usize> {
    assign_step(samples, &table.means, &table.weights)
}

fn weighted_dist(s: C64, mean: C64, w: f64) -> f64 {
    w * (s - mean).norm_sqr()
}

fn farthest_point_init(samples: &[C64], k: usize, weights: &[f64]) -> Vec<C64> {
    let mut chosen = vec![false; samples.len()];
    chosen[0] = true;
    let mut means = vec![samples[0]];
    // Weighted distance of every sample to its nearest chosen mean.
    let mut nearest: Vec<f64> = samples
        .iter()
        .map(|&s| weighted_dist(s, samples[0], weights[0]))
        .collect();
    while means.len() < k {
        let mut pick = None;
        for (i, &d) in nearest.iter().enumerate() {
            if chosen[i] {
                continue;
            }
            match pick {
                Some((_, best)) if d <= best => {}
                _ => pick = Some((i, d)),
            }
        }
        let (i, _) = pick.expect("k <= n leaves an unchosen sample");
        chosen[i] = true;
        let j = means.len();
        means.push(samples[i]);
        for (d, &s) in nearest.iter_mut().zip(samples) {
            *d = d.min(weighted_dist(s, samples[i], weights[j]));
        }
    }
    means
}

fn assign_step(samples: &[C64], means: &[C64], weights: &[f64]) -> Vec<usize> {
    let k = means.len();
    let mut assignment: Vec<usize> = samples
        .iter()
        .map(|&s| {
            let mut best = 0;
            let mut best_d = weighted_dist(s, means[0], weights[0]);
            for j in 1..k {
                let d = weighted_dist(s, means[j], weights[j]);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            best
        })
        .collect();

    let mut sizes = vec![0usize; k];
    for &a in &assignment {
        sizes[a] += 1;
    }
    let mut moved = vec![false; samples.len()];
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut pick: Option<(usize, f64)> = None;
        for (i, &a) in assignment.iter().enumerate() {
            if moved[i] || sizes[a] < 2 {
                continue;
            }
            let d = weighted_dist(samples[i], means[a], weights[a]);
            match pick {
                Some((_, best)) if d <= best => {}
                _ => pick = Some((i, d)),
            }
        }
        let (i, _) = pick.expect("k <= n leaves a cluster with two members");
        sizes[assignment[i]] -= 1;
        sizes[empty] += 1;
        assignment[i] = empty;
        moved[i] = true;
    }
    assignment
}

fn centroids(samples: &[C64], assignment: &[usize], k: usize) -> Option<Vec<C64>> {
    let mut sums = vec![C64::new(0.0, 0.0); k];
    let mut counts = vec![0usize; k];
    for (&s, &a) in samples.iter().zip(assignment) {
        sums[a] += s;
        counts[a] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(sum, c)| (c > 0).then(|| sum / c as f64))
        .collect()
}

fn wwcss(samples: &[C64], assignment: &[usize], means: &[C64], weights: &[f64]) -> f64 {
    samples
        .iter()
        .zip(assignment)
        .map(|(&s, &a)| weighted_dist(s, means[a], weights[a]))
        .sum()
}

/// WWCSS of an arbitrary partition with centroid leaders.
pub fn partition_wwcss(samples: &[C64], assignment: &[usize], weights: &[f64]) -> Option<f64> {
    let means = centroids(samples, assignment, weights.len())?;
    Some(wwcss(samples, assignment, &means, weights))
}

/// Table for the conjugate root: leaders conjugated, everything else kept.
///
/// Only 29 and 34 are conjugates among the LTE roots, so a table for 25 is
/// rejected.
pub fn conjugate_table(t: &ClusterTable) -> Result<ClusterTable> {
    let root = conjugate_root(t.root).ok_or(Error::NoConjugatePartner(t.root))?;
    Ok(ClusterTable {
        root,
        means: t.means.iter().map(|m| m.conj()).collect(),
        ..t.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pss::pss_time_domain;
    use rand::Rng;

    fn s(root: u32) -> Vec<C64> {
        pss_time_domain(root, 128).unwrap().body().to_vec()
    }

    #[test]
    fn rejects_bad_parameters() {
        let x = s(25);
        let o = KMeansOptions::default();
        assert!(kmeans_cluster(25, &x, 0, &[], &o).is_err());
        assert!(kmeans_cluster(25, &x, 129, &vec![1.0; 129], &o).is_err());
        assert!(kmeans_cluster(25, &x, 2, &[1.0, 0.0], &o).is_err());
        assert!(kmeans_cluster(25, &x, 2, &[1.0, -1.0], &o).is_err());
        assert!(kmeans_cluster(25, &x, 2, &[1.0], &o).is_err());
    }

    #[test]
    fn singleton_clusters_when_k_equals_n() {
        let x = s(25);
        let t = kmeans_cluster(25, &x, 128, &vec![1.0; 128], &KMeansOptions::default()).unwrap();
        assert!(t.converged());
        assert!(t.sizes().iter().all(|&n| n == 1));
        assert_eq!(t.final_wwcss(), 0.0);
        for (n, &k) in t.assignment().iter().enumerate() {
            assert_eq!(t.means()[k], x[n]);
        }
        t.validate().unwrap();
    }

    #[test]
    fn single_cluster_is_global_mean() {
        let x = s(29);
        let t = kmeans_cluster(29, &x, 1, &[1.0], &KMeansOptions::default()).unwrap();
        let mean = x.iter().sum::<C64>() / 128.0;
        assert!((t.means()[0] - mean).norm() < 1e-15);
        assert_eq!(t.lut(), (0..128).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn table_invariants_and_monotone_objective() {
        for &root in &[25, 29] {
            let x = s(root);
            for &k in &[6, 8, 16] {
                let run = lloyd(root, &x, k, &vec![1.0; k], &KMeansOptions::default()).unwrap();
                let t = &run.table;
                assert!(t.converged(), "u={root} K={k}");
                t.validate().unwrap();
                for w in run.wwcss_history.windows(2) {
                    assert!(w[1] <= w[0], "u={root} K={k}: {w:?}");
                }
                for c in 0..k {
                    let members: Vec<C64> =
                        (0..128).filter(|&n| t.assignment()[n] == c).map(|n| x[n]).collect();
                    let mean = members.iter().sum::<C64>() / members.len() as f64;
                    assert!((mean - t.means()[c]).norm() <= 1e-12);
                }
                assert!(t.is_lloyd_fixed_point(&x));
                assert_eq!(lloyd_step(&x, t), t.assignment());
            }
        }
    }

    #[test]
    fn better_than_random_partitions() {
        // Oracle: WWCSS of 1000 seeded random partitions into 16 groups.
        let x = s(25);
        let t = kmeans_cluster(25, &x, 16, &[1.0; 16], &KMeansOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut best_random = f64::INFINITY;
        let mut evaluated = 0;
        while evaluated < 1000 {
            let a: Vec<usize> = (0..128).map(|_| rng.random_range(0..16)).collect();
            if let Some(w) = partition_wwcss(&x, &a, &[1.0; 16]) {
                best_random = best_random.min(w);
                evaluated += 1;
            }
        }
        assert!(t.final_wwcss() <= best_random);
    }

    #[test]
    fn weighted_assignment_respects_weights() {
        let x = s(25);
        let w = [1.0, 2.0, 0.5, 1.5, 1.0, 3.0];
        let t = kmeans_cluster(25, &x, 6, &w, &KMeansOptions::default()).unwrap();
        t.validate().unwrap();
        assert!(t.is_lloyd_fixed_point(&x));
    }

    #[test]
    fn clustering_is_conjugation_equivariant() {
        let x = s(29);
        let xc: Vec<C64> = x.iter().map(|v| v.conj()).collect();
        for &k in &[6, 8, 16] {
            let a = kmeans_cluster(29, &x, k, &vec![1.0; k], &KMeansOptions::default()).unwrap();
            let b = kmeans_cluster(34, &xc, k, &vec![1.0; k], &KMeansOptions::default()).unwrap();
            assert_eq!(conjugate_table(&a).unwrap(), b);
        }
    }

    #[test]
    fn conjugate_table_pairs_29_and_34() {
        let t = kmeans_cluster(29, &s(29), 8, &[1.0; 8], &KMeansOptions::default()).unwrap();
        let c = conjugate_table(&t).unwrap();
        assert_eq!(c.root(), 34);
        assert_eq!(c.sizes(), t.sizes());
        assert_eq!(c.lut(), t.lut());
        for (a, b) in c.means().iter().zip(t.means()) {
            assert_eq!(*a, b.conj());
        }
        assert_eq!(conjugate_table(&c).unwrap(), t);

        let t25 = kmeans_cluster(25, &s(25), 8, &[1.0; 8], &KMeansOptions::default()).unwrap();
        assert!(matches!(conjugate_table(&t25), Err(Error::NoConjugatePartner(25))));
    }

    #[test]
    fn restarts_never_worsen_objective() {
        let x = s(25);
        let base = kmeans_cluster(25, &x, 8, &[1.0; 8], &KMeansOptions::default()).unwrap();
        let opts = KMeansOptions { restarts: 5, seed: 3, ..Default::default() };
        let r = kmeans_cluster(25, &x, 8, &[1.0; 8], &opts).unwrap();
        assert!(r.final_wwcss() <= base.final_wwcss());
        assert_eq!(r, kmeans_cluster(25, &x, 8, &[1.0; 8], &opts).unwrap());
    }

    #[test]
    fn json_round_trip_and_rejections() {
        let t = kmeans_cluster(25, &s(25), 16, &[1.0; 16], &KMeansOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        t.save(&path).unwrap();
        assert_eq!(ClusterTable::load(&path).unwrap(), t);

        let mut v: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        v["sizes"][0] = (t.sizes()[0] + 1).into();
        assert!(matches!(ClusterTable::from_json(&v.to_string()), Err(Error::Schema(_))));

        let mut v: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        let first = v["lut_pi"][0].clone();
        v["lut_pi"][1] = first;
        assert!(matches!(ClusterTable::from_json(&v.to_string()), Err(Error::Schema(_))));

        let mut v: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        v["schema_version"] = 99.into();
        assert!(matches!(ClusterTable::from_json(&v.to_string()), Err(Error::Schema(_))));

        assert!(matches!(ClusterTable::from_json("{not json"), Err(Error::Schema(_))));
    }
}
