mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cadseq::cad::{
    dataset_to_string, dequantize, emit_matrix, parse_dataset, parse_sequence, quantize, split_pairs, CadCommand,
    CommandType, ParamFamily, TokenMatrix,
};

proptest! {
    #[test]
    fn emit_then_parse_is_identity(seed in any::<u64>(), seq_len in 30usize..=60) {
        let s = common::random_sequence(&mut ChaCha8Rng::seed_from_u64(seed), seq_len);
        let m = emit_matrix(&s);
        prop_assert_eq!(m.n_rows(), seq_len);
        let back = parse_sequence(&m).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(emit_matrix(&back), m);
    }

    #[test]
    fn pairs_concatenate_to_the_prefix(seed in any::<u64>()) {
        let s = common::random_sequence(&mut ChaCha8Rng::seed_from_u64(seed), 60);
        let flat: Vec<CadCommand> = split_pairs(&s).unwrap().iter().flat_map(|p| p.commands()).collect();
        prop_assert_eq!(flat.as_slice(), s.commands());
    }

    #[test]
    fn quantization_error_is_at_most_half_a_bin(fam in 0usize..6, t in 0.0f64..=1.0) {
        let (lo, hi) = ParamFamily::ALL[fam].range();
        let v = lo + t * (hi - lo);
        let back = dequantize(quantize(v, lo, hi).unwrap(), lo, hi).unwrap();
        prop_assert!((back - v).abs() <= (hi - lo) / 512.0);
    }

    #[test]
    fn out_of_range_values_clamp(fam in 0usize..6, over in 0.0f64..10.0) {
        let (lo, hi) = ParamFamily::ALL[fam].range();
        prop_assert_eq!(quantize(hi + over, lo, hi).unwrap(), 255);
        prop_assert_eq!(quantize(lo - over, lo, hi).unwrap(), 0);
    }

    #[test]
    fn row_corruption_is_rejected(seed in any::<u64>(), row in 0usize..60, col in 1usize..17) {
        let s = common::random_sequence(&mut ChaCha8Rng::seed_from_u64(seed), 60);
        let m = emit_matrix(&s);
        let mut rows = m.rows().to_vec();
        let used = CommandType::from_index(i64::from(rows[row][0])).unwrap().used_mask()[col - 1];
        rows[row][col] = if used { -1 } else { 0 };
        prop_assert!(parse_sequence(&TokenMatrix::from_rows(rows)).is_err());
    }
}

#[test]
fn slot_table() {
    let expect: [(CommandType, &[usize]); 6] = [
        (CommandType::Line, &[0, 1]),
        (CommandType::Arc, &[0, 1, 2, 3]),
        (CommandType::Circle, &[0, 1, 4]),
        (CommandType::Eos, &[]),
        (CommandType::Sol, &[]),
        (CommandType::Extrude, &[5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15]),
    ];
    for (t, used) in expect {
        let mask = t.used_mask();
        for (s, &u) in mask.iter().enumerate() {
            assert_eq!(u, used.contains(&s), "{t:?} slot {s}");
        }
    }
}

#[test]
fn dataset_text_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let records: Vec<_> = (0..25)
        .map(|i| (format!("r{i}"), common::random_sequence(&mut rng, 60)))
        .collect();
    let text = dataset_to_string(&records);
    assert_eq!(parse_dataset(&text, 60).unwrap(), records);
    assert_eq!(dataset_to_string(&parse_dataset(&text, 60).unwrap()), text);
}
