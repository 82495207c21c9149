//! Value-agreement clusters over the important features, approximate labels,
//! and the sampling-dispersion study.
//!
//! Clusters are never stored as member lists. A cluster is identified by the
//! values of its sample on the masked features; members are produced by mixed
//! radix arithmetic over the unmasked features.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::importance::ImportanceMask;
use crate::space::{Dataset, ParameterSpace, Sample};

/// Projection of a sample onto the masked feature indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterKey(pub Vec<u32>);

pub fn cluster_key(s: &Sample, mask: &ImportanceMask) -> ClusterKey {
    ClusterKey(s.0.iter().zip(mask.bits()).filter(|(_, &b)| b).map(|(&v, _)| v).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    space: ParameterSpace,
    mask: ImportanceMask,
    masked: Vec<usize>,
    unmasked: Vec<usize>,
    counts: Vec<usize>,
    clusters: u64,
    cluster_size: u64,
}

pub fn partition(space: &ParameterSpace, mask: &ImportanceMask) -> Result<Partition> {
    if mask.len() != space.dims() {
        return Err(Error::Cluster(format!("mask has {} bits, space has {} features", mask.len(), space.dims())));
    }
    // ImportanceMask guarantees non-degeneracy; re-check for masks built by hand.
    let mask = ImportanceMask::new(mask.bits().to_vec()).map_err(|e| Error::Cluster(e.to_string()))?;
    let counts = space.option_counts();
    let masked: Vec<usize> = (0..space.dims()).filter(|&q| mask.bits()[q]).collect();
    let unmasked: Vec<usize> = (0..space.dims()).filter(|&q| !mask.bits()[q]).collect();
    let clusters = masked.iter().map(|&q| counts[q] as u64).product();
    let cluster_size = unmasked.iter().map(|&q| counts[q] as u64).product();
    Ok(Partition { space: space.clone(), mask, masked, unmasked, counts, clusters, cluster_size })
}

impl Partition {
    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn mask(&self) -> &ImportanceMask {
        &self.mask
    }

    /// Number of clusters `m`.
    pub fn len(&self) -> u64 {
        self.clusters
    }

    pub fn is_empty(&self) -> bool {
        self.clusters == 0
    }

    /// Every cluster has the same number of members.
    pub fn cluster_size(&self) -> u64 {
        self.cluster_size
    }

    pub fn member_count(&self, key: &ClusterKey) -> u64 {
        if self.contains_key(key) {
            self.cluster_size
        } else {
            0
        }
    }

    pub fn key_of(&self, s: &Sample) -> ClusterKey {
        cluster_key(s, &self.mask)
    }

    fn contains_key(&self, key: &ClusterKey) -> bool {
        let counts = &self.counts;
        key.0.len() == self.masked.len() && key.0.iter().zip(&self.masked).all(|(&v, &q)| (v as usize) < counts[q])
    }

    /// Lexicographic position of a cluster key among all keys.
    pub fn cluster_id(&self, key: &ClusterKey) -> u64 {
        let counts = &self.counts;
        key.0.iter().zip(&self.masked).fold(0u64, |acc, (&v, &q)| acc * counts[q] as u64 + v as u64)
    }

    pub fn key_at(&self, mut id: u64) -> ClusterKey {
        let counts = &self.counts;
        let mut out = vec![0u32; self.masked.len()];
        for (slot, &q) in out.iter_mut().zip(&self.masked).rev() {
            let n = counts[q] as u64;
            *slot = (id % n) as u32;
            id /= n;
        }
        ClusterKey(out)
    }

    /// All cluster keys in lexicographic order.
    pub fn keys(&self) -> impl Iterator<Item = ClusterKey> + '_ {
        (0..self.clusters).map(move |id| self.key_at(id))
    }

    fn compose(&self, key: &ClusterKey, mut within: u64) -> Sample {
        let counts = &self.counts;
        let mut out = vec![0u32; self.space.dims()];
        for (&q, &v) in self.masked.iter().zip(&key.0) {
            out[q] = v;
        }
        for &q in self.unmasked.iter().rev() {
            let n = counts[q] as u64;
            out[q] = (within % n) as u32;
            within /= n;
        }
        Sample(out)
    }

    /// Members of a cluster in lexicographic order.
    pub fn members<'a>(&'a self, key: &'a ClusterKey) -> impl Iterator<Item = Sample> + 'a {
        (0..self.cluster_size).map(move |w| self.compose(key, w))
    }

    pub fn random_member<R: Rng + ?Sized>(&self, key: &ClusterKey, rng: &mut R) -> Sample {
        let w = rng.gen_range(0..self.cluster_size);
        self.compose(key, w)
    }

    /// `count` distinct members drawn uniformly without replacement.
    pub fn random_members<R: Rng + ?Sized>(&self, key: &ClusterKey, count: usize, rng: &mut R) -> Vec<Sample> {
        index::sample(rng, self.cluster_size as usize, count).into_iter().map(|w| self.compose(key, w as u64)).collect()
    }
}

/// Approximate labels: one representative and its label per labeled cluster.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ApproxLabelStore {
    entries: BTreeMap<ClusterKey, (Sample, Vec<f64>)>,
}

impl ApproxLabelStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: &ClusterKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get(&self, key: &ClusterKey) -> Option<(&Sample, &[f64])> {
        self.entries.get(key).map(|(s, l)| (s, l.as_slice()))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ClusterKey, &Sample, &[f64])> {
        self.entries.iter().map(|(k, (s, l))| (k, s, l.as_slice()))
    }

    /// Every member of every labeled cluster with its cluster's label.
    pub fn virtual_rows<'a>(&'a self, partition: &'a Partition) -> impl Iterator<Item = (Sample, &'a [f64])> + 'a {
        self.entries.iter().flat_map(move |(k, (_, l))| partition.members(k).map(move |s| (s, l.as_slice())))
    }

    pub fn virtual_len(&self, partition: &Partition) -> u64 {
        self.entries.len() as u64 * partition.cluster_size()
    }
}

/// Labels the representative's whole cluster with the representative's
/// objective values. Returns the number of virtually labeled members.
pub fn apply_approx_labels(
    store: &mut ApproxLabelStore,
    partition: &Partition,
    representative: &Sample,
    label: Vec<f64>,
) -> Result<u64> {
    partition.space().validate(representative)?;
    let key = partition.key_of(representative);
    if store.entries.contains_key(&key) {
        return Err(Error::Cluster(format!("cluster {:?} already has a representative", key.0)));
    }
    store.entries.insert(key, (representative.clone(), label));
    Ok(partition.cluster_size())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaReport {
    pub sigma_random: f64,
    pub sigma_in_cluster: f64,
    pub sigma_cross_cluster: f64,
}

/// Mean population standard deviation of `group_size` objective values under
/// three sampling modes: uniform over the space, within one uniformly chosen
/// cluster, and one sample from each of `group_size` distinct clusters.
///
/// Draws within a group are without replacement. Clusters smaller than
/// `group_size` are not eligible for the in-cluster mode.
pub fn sigma_analysis<R: Rng + ?Sized>(
    data: &Dataset,
    partition: &Partition,
    objective: &str,
    group_size: usize,
    trials: usize,
    rng: &mut R,
) -> Result<SigmaReport> {
    if data.space() != partition.space() {
        return Err(Error::Cluster("dataset and partition use different spaces".into()));
    }
    if group_size < 2 || trials == 0 {
        return Err(Error::Cluster("sigma analysis needs group_size >= 2 and trials >= 1".into()));
    }
    let j = data.objective_index(objective)?;
    let values = data.dense_column(j)?;
    let space = data.space();
    if (space.size() as usize) < group_size {
        return Err(Error::Cluster("space is smaller than the group size".into()));
    }
    if partition.cluster_size() < group_size as u64 {
        return Err(Error::Cluster(format!(
            "no eligible cluster: clusters have {} members, group size is {}",
            partition.cluster_size(),
            group_size
        )));
    }
    if partition.len() < group_size as u64 {
        return Err(Error::Cluster(format!(
            "cross-cluster sampling needs {} clusters, partition has {}",
            group_size,
            partition.len()
        )));
    }

    let mut group = Vec::with_capacity(group_size);
    let std_of = |group: &Vec<f64>| crate::importance::population_variance(group).sqrt();

    let mut sum_random = 0.0;
    let mut sum_in = 0.0;
    let mut sum_cross = 0.0;
    for _ in 0..trials {
        group.clear();
        group.extend(index::sample(rng, space.size() as usize, group_size).into_iter().map(|i| values[i]));
        sum_random += std_of(&group);

        group.clear();
        let key = partition.key_at(rng.gen_range(0..partition.len()));
        group
            .extend(partition.random_members(&key, group_size, rng).iter().map(|s| values[space.index_of(s) as usize]));
        sum_in += std_of(&group);

        group.clear();
        for id in index::sample(rng, partition.len() as usize, group_size) {
            let key = partition.key_at(id as u64);
            let s = partition.random_member(&key, rng);
            group.push(values[space.index_of(&s) as usize]);
        }
        sum_cross += std_of(&group);
    }
    let t = trials as f64;
    Ok(SigmaReport { sigma_random: sum_random / t, sigma_in_cluster: sum_in / t, sigma_cross_cluster: sum_cross / t })
}
