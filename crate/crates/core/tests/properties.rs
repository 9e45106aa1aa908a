use proptest::prelude::*;

use scratchnet::criteria::{Criterion, Target};
use scratchnet::data::{one_hot, parse_idx_images, parse_idx_labels, serialize_idx_images, serialize_idx_labels, BatchCursor};
use scratchnet::nn::{Activation, ActivationKind, Checkpoint, Linear};
use scratchnet::parity::{DeepParityNet, ShallowParityNet};
use scratchnet::report::{accuracy, sample_separation_surface, ConfusionMatrix, Region};
use scratchnet::training::early_stop_check;
use scratchnet::{Module, Rng, Sequential, Tensor};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-5.0f64..5.0, rows * cols).prop_map(move |v| Tensor::from_vec(vec![rows, cols], v).unwrap())
}

fn batch_and_width() -> impl Strategy<Value = (usize, usize)> {
    (1usize..8, 2usize..7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cross_entropy_ignores_row_shifts(
        (logits, shift, labels) in batch_and_width().prop_flat_map(|(b, w)| (
            matrix(b, w),
            prop::collection::vec(-50.0f64..50.0, b),
            prop::collection::vec(0..w, b),
        ))
    ) {
        let w = logits.row_len();
        let mut shifted = logits.clone();
        for (r, row) in shifted.data_mut().chunks_mut(w).enumerate() {
            row.iter_mut().for_each(|v| *v += shift[r]);
        }
        let ce = Criterion::cross_entropy();
        let a = ce.forward(&logits, Target::Classes(&labels)).unwrap();
        let b = ce.forward(&shifted, Target::Classes(&labels)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        let dense = one_hot(&labels, w).unwrap();
        let c = ce.forward(&logits, Target::Dense(&dense)).unwrap();
        prop_assert!((a - c).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn sum_squared_is_batch_times_width_times_mean(
        (p, t) in batch_and_width().prop_flat_map(|(b, w)| (matrix(b, w), matrix(b, w)))
    ) {
        let n = p.len() as f64;
        let mean = Criterion::mse().forward(&p, Target::Dense(&t)).unwrap();
        let sum = Criterion::sum_squared().forward(&p, Target::Dense(&t)).unwrap();
        prop_assert!((sum - n * mean).abs() <= 1e-9 * sum.max(1.0));
        let gm = Criterion::mse().backward(&p, Target::Dense(&t)).unwrap();
        let gs = Criterion::sum_squared().backward(&p, Target::Dense(&t)).unwrap();
        for (a, b) in gm.data().iter().zip(gs.data()) {
            prop_assert!((a * n - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn matmul_matches_triple_loop(
        (a, b) in (1usize..9, 1usize..9, 1usize..9).prop_flat_map(|(m, k, n)| (matrix(m, k), matrix(k, n)))
    ) {
        let c = a.matmul(&b).unwrap();
        let (m, k, n) = (a.rows(), a.row_len(), b.row_len());
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.data()[i * k + p] * b.data()[p * n + j];
                }
                prop_assert_eq!(c.data()[i * n + j].to_bits(), s.to_bits());
            }
        }
    }

    #[test]
    fn softmax_rows_are_distributions(x in matrix(4, 5)) {
        let mut s = Activation::new(ActivationKind::Softmax);
        let y = s.forward(&x).unwrap();
        for row in y.data().chunks(5) {
            prop_assert!(row.iter().all(|&v| v > 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn confusion_marginals_and_accuracy(
        (pred, truth, classes) in (1usize..60, 2usize..8).prop_flat_map(|(n, c)| (
            prop::collection::vec(0..c, n),
            prop::collection::vec(0..c, n),
            Just(c),
        ))
    ) {
        let cm = ConfusionMatrix::from_labels(&pred, &truth, classes).unwrap();
        prop_assert_eq!(cm.total(), truth.len());
        let mut hist = vec![0; classes];
        truth.iter().for_each(|&t| hist[t] += 1);
        prop_assert_eq!(cm.true_counts(), hist);
        let mut phist = vec![0; classes];
        pred.iter().for_each(|&p| phist[p] += 1);
        prop_assert_eq!(cm.predicted_counts(), phist);
        let hits = pred.iter().zip(&truth).filter(|(a, b)| a == b).count();
        prop_assert_eq!(cm.trace(), hits);
        let hard = one_hot(&pred, classes).unwrap();
        let acc = accuracy(&hard, Target::Classes(&truth)).unwrap();
        prop_assert!((cm.accuracy() - acc).abs() < 1e-15);
    }

    #[test]
    fn argmax_one_hot_keeps_accuracy(
        (p, labels) in (1usize..30, 2usize..6).prop_flat_map(|(n, c)| (matrix(n, c), prop::collection::vec(0..c, n)))
    ) {
        let c = p.row_len();
        let hard = one_hot(&p.argmax(1).unwrap(), c).unwrap();
        prop_assert_eq!(
            accuracy(&hard, Target::Classes(&labels)).unwrap(),
            accuracy(&p, Target::Classes(&labels)).unwrap()
        );
    }

    #[test]
    fn deep_and_shallow_parity_agree(n in 2usize..9, rows in prop::collection::vec(any::<u16>(), 1..40)) {
        let x: Vec<f64> = rows
            .iter()
            .flat_map(|&r| (0..n).map(move |b| f64::from((r >> b) & 1)))
            .collect();
        let x = Tensor::from_vec(vec![rows.len(), n], x).unwrap();
        let mut deep = DeepParityNet::new(n).unwrap();
        let mut shallow = ShallowParityNet::new(n).unwrap();
        let a = deep.forward(&x).unwrap().clone();
        let b = shallow.forward(&x).unwrap().clone();
        prop_assert_eq!(a.data(), b.data());
        for (i, &r) in rows.iter().enumerate() {
            let odd = (r & ((1u16 << n) - 1)).count_ones() % 2 == 1;
            prop_assert_eq!(a.data()[i], if odd { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn early_stop_counter_moves_by_one_or_resets(
        prev in 0.0f64..10.0, curr in 0.0f64..10.0, counter in 0usize..20, patience in 1usize..20
    ) {
        let (c, stop) = early_stop_check(prev, curr, counter, 0.9999, patience);
        prop_assert!(c == 0 || c == counter + 1);
        prop_assert_eq!(c == counter + 1, curr >= prev * 0.9999);
        prop_assert_eq!(stop, c >= patience);
    }

    #[test]
    fn batch_cursor_covers_each_pass_once(n in 1usize..50, size_seed in 1usize..50, seed in any::<u64>()) {
        let size = 1 + size_seed % n;
        let mut cur = BatchCursor::new(n, Rng::new(seed));
        let mut seen = Vec::new();
        while seen.len() < 3 * n {
            seen.extend(cur.next_indices(size).unwrap());
        }
        for pass in seen[..3 * n].chunks(n) {
            let mut p = pass.to_vec();
            p.sort_unstable();
            prop_assert_eq!(p, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn idx_round_trip(
        (images, labels) in (1usize..6, 1usize..5, 1usize..5).prop_flat_map(|(n, r, c)| (
            prop::collection::vec(any::<u8>(), n * r * c).prop_map(move |v| {
                Tensor::from_vec(vec![n, r, c], v.into_iter().map(f64::from).collect()).unwrap()
            }),
            prop::collection::vec(0usize..10, n),
        ))
    ) {
        let back = parse_idx_images(&serialize_idx_images(&images).unwrap()).unwrap();
        prop_assert_eq!(back, images);
        prop_assert_eq!(parse_idx_labels(&serialize_idx_labels(&labels).unwrap()).unwrap(), labels);
    }

    #[test]
    fn gradients_accumulate_across_backward_calls(x in matrix(3, 4), seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let mut lin = Linear::uniform(4, 2, -1.0, 1.0, &mut rng).unwrap();
        let g = Tensor::ones(&[3, 2]);
        lin.forward(&x).unwrap();
        lin.backward(&x, &g).unwrap();
        let once = lin.grad_weight().clone();
        lin.backward(&x, &g).unwrap();
        for (a, b) in lin.grad_weight().data().iter().zip(once.data()) {
            prop_assert_eq!(*a, 2.0 * b);
        }
        lin.zero_grad_parameters();
        prop_assert!(lin.grad_weight().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkpoint_restores_parameters(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let mut net = Sequential::new()
            .with(Linear::uniform(3, 4, -1.0, 1.0, &mut rng).unwrap())
            .with(Activation::new(ActivationKind::Tanh))
            .with(Linear::uniform(4, 1, -1.0, 1.0, &mut rng).unwrap());
        let snap = Checkpoint::capture(&net);
        let before: Vec<f64> = net.parameters().iter().flat_map(|p| p.value.data().to_vec()).collect();
        net.parameters_mut().iter_mut().for_each(|p| p.value.fill(0.0));
        snap.restore(&mut net).unwrap();
        let after: Vec<f64> = net.parameters().iter().flat_map(|p| p.value.data().to_vec()).collect();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn surface_points_reevaluate_into_band(w0 in -2.0f64..2.0, w1 in -2.0f64..2.0, b in -0.5f64..0.5, seed in any::<u64>()) {
        let lin = Linear::from_parts(Tensor::from_rows(&[[w0, w1]]).unwrap(), Tensor::from_vec(vec![1], vec![b]).unwrap()).unwrap();
        let mut m = Sequential::new().with(lin).with(Activation::new(ActivationKind::Sigmoid));
        let band = (0.45, 0.55);
        let s = sample_separation_surface(&mut m, Region::square(-1.0, 1.0), 2000, band, &mut Rng::new(seed)).unwrap();
        if !s.points.is_empty() {
            let flat: Vec<f64> = s.points.iter().flat_map(|p| p.iter().copied()).collect();
            let y = m.forward(&Tensor::from_vec(vec![s.points.len(), 2], flat).unwrap()).unwrap();
            prop_assert!(y.data().iter().all(|&v| v >= band.0 && v <= band.1));
        }
    }
}
