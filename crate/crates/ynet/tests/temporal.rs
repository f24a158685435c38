use dan_tensor::{Activation, Padding, ParamStore, Tape, Tensor};
use dan_ynet::temporal::{GatedTcn, GatedTcnConfig};
use dan_ynet::{dilated_causal_conv, Initializer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight transcription of `y(t) = sum_s g(s) x(t - d s)` with zero history.
fn naive_conv(x: &[f64], g: &[f64], d: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for t in 0..x.len() {
        let mut acc = 0.0;
        for s in 0..g.len() {
            let back = d * s;
            if back <= t {
                acc += g[s] * x[t - back];
            }
        }
        y[t] = acc;
    }
    y
}

fn random_triple(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, usize) {
    let t = rng.random_range(1..=40);
    let k = rng.random_range(1..=5);
    let d = rng.random_range(1..=6);
    let x = (0..t).map(|_| rng.random_range(-3.0..3.0)).collect();
    let g = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
    (x, g, d)
}

#[test]
fn conv_matches_double_loop_on_500_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..500 {
        let (x, g, d) = random_triple(&mut rng);
        let want = naive_conv(&x, &g, d);
        let got = dilated_causal_conv(&x, &g, d);
        assert_eq!(got.len(), x.len());
        for (t, (a, b)) in got.iter().zip(&want).enumerate() {
            assert!((a - b).abs() <= 1e-12, "case {case} t {t}: {a} vs {b}");
        }

        // The tensor primitive used by the network agrees on (T, 1, 1) inputs.
        let xt = Tensor::new(vec![x.len(), 1, 1], x.clone()).unwrap();
        let gt = Tensor::new(vec![g.len(), 1, 1], g.clone()).unwrap();
        let yt = dan_tensor::ops::causal_conv(&xt, &gt, d, Padding::CausalLeft).unwrap();
        for (a, b) in yt.data().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12, "case {case}: tensor conv {a} vs {b}");
        }
    }
}

#[test]
fn perturbing_the_future_never_changes_the_past() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for _ in 0..100 {
        let (x, g, d) = random_triple(&mut rng);
        let base = dilated_causal_conv(&x, &g, d);
        for t in 0..x.len() {
            let mut bumped = x.clone();
            bumped[t] += 1.0 + rng.random::<f64>();
            let y = dilated_causal_conv(&bumped, &g, d);
            assert_eq!(&y[..t], &base[..t], "output before {t} moved");
        }
    }
}

#[test]
fn gated_tcn_is_causal_across_channels() {
    let mut store = ParamStore::new();
    let mut init = Initializer::new(3);
    let cfg = GatedTcnConfig {
        kernel: 3,
        dilation: 2,
        padding: Padding::CausalLeft,
        activation: Activation::Tanh,
    };
    let tcn = GatedTcn::new(&mut store, "tcn", 2, 4, cfg, &mut init);
    let x = Tensor::from_fn(&[9, 3, 2], |i| (i as f64 * 0.37).sin());
    let base = tcn.apply(&store, &x).unwrap();
    assert_eq!(base.shape(), &[9, 3, 4]);
    for t in 0..9 {
        let mut bumped = x.clone();
        for j in 0..6 {
            bumped.data_mut()[t * 6 + j] += 0.5;
        }
        let y = tcn.apply(&store, &bumped).unwrap();
        assert_eq!(&y.data()[..t * 12], &base.data()[..t * 12]);
        assert_ne!(&y.data()[t * 12..(t + 1) * 12], &base.data()[t * 12..(t + 1) * 12]);
    }
}

#[test]
fn valid_padding_shortens_by_the_receptive_span() {
    let mut store = ParamStore::new();
    let mut init = Initializer::new(4);
    let cfg = GatedTcnConfig {
        kernel: 3,
        dilation: 2,
        padding: Padding::Valid,
        activation: Activation::Tanh,
    };
    let tcn = GatedTcn::new(&mut store, "tcn", 1, 1, cfg, &mut init);
    assert_eq!(tcn.output_len(9), Some(5));
    assert_eq!(tcn.output_len(4), None);
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::ones(&[9, 3, 3]));
    let y = tcn.forward_adjacency(&store, &mut tape, a).unwrap();
    assert_eq!(tape.shape(y), &[5, 3, 3]);
}
