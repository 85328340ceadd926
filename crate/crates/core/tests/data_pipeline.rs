use fedgrid::data::{dirichlet_partition, gen_synthetic, Dataset};
use fedgrid::model::{evaluate, loss_and_grad, ModelSpec};
use fedgrid::ParamVector;

/// Plain full-batch gradient descent, independent of the federated path.
fn centralized_train(ds: &Dataset, steps: usize, lr: f64) -> (ModelSpec, ParamVector) {
    let spec = ModelSpec::logistic(ds.dim(), ds.num_classes());
    let mut w = ParamVector::zeros(spec.param_count());
    for _ in 0..steps {
        let (_, g) = loss_and_grad(&spec, &w, &ds.all()).unwrap();
        w = w.add_scaled(&g, -lr).unwrap();
    }
    (spec, w)
}

#[test]
fn tight_blobs_are_learnable_centrally() {
    let ds = gen_synthetic(2, 2, 50, 0.01, 1).unwrap();
    let (spec, w) = centralized_train(&ds, 200, 0.5);
    let (_, acc) = evaluate(&spec, &w, &ds.all()).unwrap();
    assert!(acc >= 0.99, "{acc}");
}

fn labels_needed_for_90_percent(hist: &[usize]) -> usize {
    let total: usize = hist.iter().sum();
    let mut sorted = hist.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let mut acc = 0;
    for (i, c) in sorted.iter().enumerate() {
        acc += c;
        if acc as f64 >= 0.9 * total as f64 {
            return i + 1;
        }
    }
    sorted.len()
}

#[test]
fn small_alpha_concentrates_labels() {
    let labels: Vec<usize> = (0..10).flat_map(|k| std::iter::repeat_n(k, 500)).collect();
    let ds = Dataset::new(vec![0.0; labels.len()], 1, labels, 10).unwrap();
    let p = dirichlet_partition(&ds, 100, 0.1, 3).unwrap();
    let mut needed: Vec<usize> = p.label_histograms(&ds).iter().map(|h| labels_needed_for_90_percent(h)).collect();
    needed.sort_unstable();
    assert!(needed[50] <= 3, "median {}", needed[50]);
}
