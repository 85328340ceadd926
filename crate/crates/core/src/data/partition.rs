use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Client shards of a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    assignment: Vec<Vec<usize>>,
    ratios: Vec<f64>,
}

impl Partition {
    /// Builds a partition from explicit shards. Shards must be non-empty.
    pub fn from_shards(assignment: Vec<Vec<usize>>) -> Result<Self> {
        if assignment.is_empty() || assignment.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("every client needs at least one sample".into()));
        }
        let total: usize = assignment.iter().map(Vec::len).sum();
        let ratios = assignment.iter().map(|s| s.len() as f64 / total as f64).collect();
        Ok(Self { assignment, ratios })
    }

    pub fn num_clients(&self) -> usize {
        self.assignment.len()
    }

    pub fn shard(&self, client: usize) -> &[usize] {
        &self.assignment[client]
    }

    pub fn shards(&self) -> &[Vec<usize>] {
        &self.assignment
    }

    pub fn count(&self, client: usize) -> usize {
        self.assignment[client].len()
    }

    /// Data ratio `n_i / sum_j n_j`.
    pub fn ratio(&self, client: usize) -> f64 {
        self.ratios[client]
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    /// Per-client label histograms, `[client][class]`.
    pub fn label_histograms(&self, ds: &Dataset) -> Vec<Vec<usize>> {
        self.assignment
            .iter()
            .map(|shard| {
                let mut h = vec![0; ds.num_classes()];
                for &i in shard {
                    h[ds.label(i)] += 1;
                }
                h
            })
            .collect()
    }
}

/// Label-skew partition. For every class a proportion vector over clients is
/// drawn from `Dir(alpha * 1_N)`; the class's shuffled samples are then cut
/// at the cumulative proportions. Clients left empty receive one sample from
/// the currently largest client.
pub fn dirichlet_partition(ds: &Dataset, num_clients: usize, alpha: f64, seed: u64) -> Result<Partition> {
    if num_clients == 0 {
        return Err(Error::InvalidArgument("need at least one client".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    if num_clients > ds.len() {
        return Err(Error::TooManyClients { clients: num_clients, samples: ds.len() });
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = stream_rng(seed, Stream::Partition, &[]);
    let mut assignment = vec![Vec::new(); num_clients];

    for class in 0..ds.num_classes() {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i) == class).collect();
        idx.shuffle(&mut rng);
        let draws: Vec<f64> = (0..num_clients).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = draws.iter().sum();
        let n = idx.len();
        let mut start = 0;
        let mut cum = 0.0;
        for (client, draw) in draws.iter().enumerate() {
            let end = if client + 1 == num_clients {
                n
            } else if total > 0.0 {
                cum += draw / total;
                ((cum * n as f64).floor() as usize).clamp(start, n)
            } else {
                // all draws underflowed: spread evenly
                (client + 1) * n / num_clients
            };
            assignment[client].extend_from_slice(&idx[start..end]);
            start = end;
        }
    }

    while let Some(empty) = assignment.iter().position(Vec::is_empty) {
        let donor = (0..num_clients)
            .max_by(|&a, &b| assignment[a].len().cmp(&assignment[b].len()).then(b.cmp(&a)))
            .expect("at least one client");
        let moved = assignment[donor].pop().expect("donor holds more than one sample");
        assignment[empty].push(moved);
    }
    for shard in &mut assignment {
        shard.sort_unstable();
    }
    Partition::from_shards(assignment)
}

/// Local mini-batch size. `Full` uses the whole shard as one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchSize {
    Fixed(usize),
    Full(FullBatch),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FullBatch {
    Full,
}

impl BatchSize {
    pub const FULL: BatchSize = BatchSize::Full(FullBatch::Full);

    /// Number of batches one epoch over `n` samples produces.
    pub fn batches_per_epoch(self, n: usize) -> usize {
        match self {
            BatchSize::Fixed(b) => n.div_ceil(b),
            BatchSize::Full(_) => usize::from(n > 0),
        }
    }
}

/// Splits a shard into the batches of one local epoch.
///
/// Fixed-size batches follow a shuffle keyed by `(seed, client, round, epoch)`
/// and keep the trailing partial batch. A full batch keeps shard order.
pub fn epoch_batches(
    shard: &[usize],
    batch_size: BatchSize,
    seed: u64,
    client: usize,
    round: usize,
    epoch: usize,
) -> Result<Vec<Vec<usize>>> {
    if shard.is_empty() {
        return Err(Error::InvalidArgument("cannot batch an empty shard".into()));
    }
    match batch_size {
        BatchSize::Fixed(0) => Err(Error::InvalidArgument("batch size must be at least 1".into())),
        BatchSize::Fixed(b) => {
            let mut order = shard.to_vec();
            let mut rng = stream_rng(seed, Stream::Batches, &[client as u64, round as u64, epoch as u64]);
            order.shuffle(&mut rng);
            Ok(order.chunks(b).map(<[usize]>::to_vec).collect())
        }
        BatchSize::Full(_) => Ok(vec![shard.to_vec()]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;
    use proptest::prelude::*;

    fn labels_only(num_classes: usize, per_class: usize) -> Dataset {
        let labels: Vec<usize> = (0..num_classes).flat_map(|k| std::iter::repeat_n(k, per_class)).collect();
        Dataset::new(vec![0.0; labels.len()], 1, labels, num_classes).unwrap()
    }

    fn assert_set_partition(p: &Partition, n: usize) {
        let mut all: Vec<usize> = p.shards().iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        assert!(p.shards().iter().all(|s| !s.is_empty()));
        let sum: f64 = p.ratios().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_client_owns_everything() {
        let ds = labels_only(3, 7);
        let p = dirichlet_partition(&ds, 1, 0.1, 4).unwrap();
        assert_eq!(p.shard(0), (0..21).collect::<Vec<_>>().as_slice());
        assert_eq!(p.ratio(0), 1.0);
    }

    #[test]
    fn too_many_clients_is_an_error() {
        let ds = labels_only(2, 2);
        assert!(matches!(dirichlet_partition(&ds, 5, 1.0, 0), Err(Error::TooManyClients { .. })));
        assert!(dirichlet_partition(&ds, 0, 1.0, 0).is_err());
        assert!(dirichlet_partition(&ds, 2, 0.0, 0).is_err());
    }

    #[test]
    fn repair_fills_every_client_when_clients_equal_samples() {
        let ds = labels_only(2, 5);
        for seed in 0..20 {
            let p = dirichlet_partition(&ds, 10, 0.05, seed).unwrap();
            assert_set_partition(&p, 10);
            assert!(p.shards().iter().all(|s| s.len() == 1));
        }
    }

    #[test]
    fn huge_alpha_is_near_uniform() {
        let ds = labels_only(10, 500);
        for seed in 0..5 {
            let p = dirichlet_partition(&ds, 10, 1e6, seed).unwrap();
            for h in p.label_histograms(&ds) {
                let n: usize = h.iter().sum();
                let tv: f64 = h.iter().map(|&c| (c as f64 / n as f64 - 0.1).abs()).sum::<f64>() / 2.0;
                assert!(tv < 0.1, "tv {tv}");
            }
        }
    }

    fn mean_entropy(p: &Partition, ds: &Dataset) -> f64 {
        let hs = p.label_histograms(ds);
        hs.iter()
            .map(|h| {
                let n: usize = h.iter().sum();
                -h.iter()
                    .filter(|&&c| c > 0)
                    .map(|&c| {
                        let q = c as f64 / n as f64;
                        q * q.ln()
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            / hs.len() as f64
    }

    #[test]
    fn heterogeneity_grows_as_alpha_shrinks() {
        let ds = gen_synthetic(10, 2, 60, 1.0, 0).unwrap();
        let avg = |alpha: f64| {
            (0..20).map(|s| mean_entropy(&dirichlet_partition(&ds, 20, alpha, s).unwrap(), &ds)).sum::<f64>() / 20.0
        };
        assert!(avg(10.0) > avg(0.1));
    }

    #[test]
    fn deterministic_per_seed() {
        let ds = labels_only(4, 30);
        assert_eq!(dirichlet_partition(&ds, 6, 0.3, 11).unwrap(), dirichlet_partition(&ds, 6, 0.3, 11).unwrap());
    }

    #[test]
    fn batches_keep_partial_tail() {
        let shard: Vec<usize> = (0..10).collect();
        let b = epoch_batches(&shard, BatchSize::Fixed(3), 0, 0, 0, 0).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        assert_eq!(BatchSize::Fixed(3).batches_per_epoch(10), 4);
        assert_eq!(BatchSize::FULL.batches_per_epoch(10), 1);
    }

    #[test]
    fn epochs_reorder_same_multiset() {
        let shard: Vec<usize> = (100..140).collect();
        let a = epoch_batches(&shard, BatchSize::Fixed(8), 5, 2, 3, 0).unwrap();
        let b = epoch_batches(&shard, BatchSize::Fixed(8), 5, 2, 3, 1).unwrap();
        assert_ne!(a, b);
        let mut fa: Vec<usize> = a.concat();
        let mut fb: Vec<usize> = b.concat();
        fa.sort_unstable();
        fb.sort_unstable();
        assert_eq!(fa, fb);
        assert_eq!(fa, shard);
    }

    #[test]
    fn batching_errors() {
        assert!(epoch_batches(&[], BatchSize::Fixed(2), 0, 0, 0, 0).is_err());
        assert!(epoch_batches(&[1], BatchSize::Fixed(0), 0, 0, 0, 0).is_err());
    }

    #[test]
    fn full_batch_keeps_order() {
        assert_eq!(epoch_batches(&[4, 2, 9], BatchSize::FULL, 0, 0, 0, 0).unwrap(), vec![vec![4, 2, 9]]);
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_cover(
            classes in 2usize..6,
            per_class in 1usize..30,
            clients in 1usize..12,
            alpha in prop_oneof![Just(0.01), Just(0.1), Just(1.0), Just(100.0)],
            seed in 0u64..1000,
        ) {
            let ds = labels_only(classes, per_class);
            prop_assume!(clients <= ds.len());
            let p = dirichlet_partition(&ds, clients, alpha, seed).unwrap();
            assert_set_partition(&p, ds.len());
        }

        #[test]
        fn batching_is_a_bijection(n in 1usize..200, b in 1usize..40, epoch in 0usize..5) {
            let shard: Vec<usize> = (0..n).map(|i| 3 * i + 1).collect();
            let batches = epoch_batches(&shard, BatchSize::Fixed(b), 1, 2, 3, epoch).unwrap();
            prop_assert_eq!(batches.len(), n.div_ceil(b));
            let mut flat = batches.concat();
            flat.sort_unstable();
            prop_assert_eq!(flat, shard);
        }
    }
}
