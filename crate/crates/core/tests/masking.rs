use dementia_mm::check::{padding_deviation, toy_batch};
use dementia_mm::models::{build_model, ModelKind};

#[test]
fn padding_changes_no_output() {
    let batch = toy_batch(4, 3, &[3, 1, 5], &[2, 6, 4], 21);
    for kind in ModelKind::ALL {
        let g = build_model(kind, 4, 3, 8).unwrap();
        for (extra_l, extra_t) in [(1, 0), (0, 3), (4, 7)] {
            let dev = padding_deviation(&g, &batch, extra_l, extra_t, 3).unwrap();
            assert!(dev <= 1e-12, "{kind} +{extra_l}/+{extra_t}: {dev:e}");
        }
    }
}

#[test]
fn padded_steps_hold_the_last_state() {
    use dementia_mm::nn::{lstm_forward, LstmParams, Tensor};
    use dementia_mm::seed::rng_for;
    let mut rng = rng_for(4, &[]);
    let p = LstmParams::new(2, 3, 0.0, 0.0, &mut rng);
    let x = Tensor::from_vec(&[1, 4, 2], vec![0.5, -1.0, 0.2, 0.3, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let (out, _) = lstm_forward(&x, &[true, true, false, false], &p, false, &mut rng).unwrap();
    let h = out.h_seq.row(0);
    assert_eq!(&h[3..6], &h[6..9]);
    assert_eq!(&h[3..6], &h[9..12]);
    assert_eq!(out.h_last.row(0), &h[3..6]);
}

#[test]
fn interior_padding_is_rejected() {
    use dementia_mm::nn::lstm::prefix_len;
    assert_eq!(prefix_len(&[true, true, false]).unwrap(), 2);
    assert!(prefix_len(&[true, false, true]).is_err());
}
