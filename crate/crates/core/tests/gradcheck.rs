use dementia_mm::check::{check_all_graphs, check_graph, check_layers, toy_batch};
use dementia_mm::models::{build_model, ModelKind};

const TOL: f64 = 1e-6;

#[test]
fn every_layer_matches_finite_differences() {
    for seed in [1, 2, 3] {
        for (name, err) in check_layers(seed).unwrap() {
            assert!(err < TOL, "seed {seed} {name}: relative error {err:e}");
        }
    }
}

#[test]
fn every_graph_matches_finite_differences() {
    for (name, err) in check_all_graphs(4, 3, 11).unwrap() {
        assert!(err < TOL, "{name}: relative error {err:e}");
    }
}

#[test]
fn per_tensor_errors_for_the_full_graph() {
    let batch = toy_batch(4, 3, &[2, 5], &[4, 1], 5);
    let g = build_model(ModelKind::AudioTextTime, 4, 3, 5).unwrap();
    let report = check_graph(&g, &batch, true, 5).unwrap();
    let names: Vec<&str> = report.iter().map(|(n, _)| *n).collect();
    assert_eq!(
        names,
        [
            "lstm.kernel",
            "lstm.recurrent_kernel",
            "lstm.bias",
            "dense.kernel",
            "dense.bias"
        ]
    );
    for (name, err) in report {
        assert!(err < TOL, "{name}: {err:e}");
    }
}
