use eigenstrat::experiments::{Dataset, Record, Schema};
use eigenstrat::graphs::{bottom_eigenbasis, WeightedGraph};
use eigenstrat::model::{anll, decode, encode, load, save, serialized_size_report, Metadata, StratParams};
use eigenstrat::proximal::BaseKind;
use eigenstrat::LoadError;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn factorized(k: usize, m: usize, n: usize, values: &[f64]) -> StratParams {
    let g = WeightedGraph::cycle(k, 1.5).unwrap();
    let basis = bottom_eigenbasis(&g, m).unwrap();
    let z = DMatrix::from_fn(n, m, |i, j| values[(i * m + j) % values.len()]);
    let mut meta = Metadata {
        graph: g.spec_string().unwrap(),
        hyper: vec![],
    };
    meta.set("gamma1", 0.25);
    StratParams::factorized(z, basis, BaseKind::DiscreteDistribution)
        .unwrap()
        .with_metadata(meta)
}

#[test]
fn cardio_shape_storage() {
    let g = WeightedGraph::path(2, 15.0)
        .unwrap()
        .cartesian_product(&WeightedGraph::path(27, 175.0).unwrap());
    let basis = bottom_eigenbasis(&g, 5).unwrap();
    let p = StratParams::factorized(DMatrix::from_element(14, 5, 0.5), basis, BaseKind::Logistic).unwrap();
    let d = p.to_dense();
    assert_eq!(p.parameter_count(), 340);
    assert_eq!(d.parameter_count(), 756);
    let dir = tempfile::tempdir().unwrap();
    save(&p, dir.path().join("f.esm")).unwrap();
    save(&d, dir.path().join("d.esm")).unwrap();
    let fs = std::fs::metadata(dir.path().join("f.esm")).unwrap().len();
    let ds = std::fs::metadata(dir.path().join("d.esm")).unwrap().len();
    assert!(fs < ds);
    assert_eq!(serialized_size_report(&d).payload_bytes, 756 * 8);
}

#[test]
fn truncated_files_never_load() {
    let bytes = encode(&factorized(6, 3, 4, &[0.1, -2.0, 3.5]));
    for cut in 0..bytes.len() {
        assert!(decode(&bytes[..cut]).is_err(), "prefix of {cut} bytes decoded");
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(decode(&extra), Err(LoadError::Malformed(_))));
}

#[test]
fn missing_file_is_io_error() {
    assert!(matches!(
        load("/nonexistent/model.esm"),
        Err(eigenstrat::Error::Io { .. })
    ));
}

proptest! {
    #[test]
    fn factorized_round_trip(k in 3usize..12, m_frac in 0.0f64..1.0, n in 1usize..5,
                             values in proptest::collection::vec(-1e3f64..1e3, 1..20)) {
        let m = 1 + ((k - 1) as f64 * m_frac) as usize;
        let p = factorized(k, m, n, &values);
        prop_assert_eq!(decode(&encode(&p)).unwrap(), p);
    }

    #[test]
    fn single_bit_flips_are_caught(pos_frac in 0.0f64..1.0, bit in 0u8..8) {
        let bytes = encode(&factorized(5, 2, 3, &[0.3, 1.7]));
        let mut b = bytes.clone();
        let pos = ((bytes.len() - 1) as f64 * pos_frac) as usize;
        b[pos] ^= 1 << bit;
        prop_assert!(decode(&b).is_err());
    }

    #[test]
    fn factorized_and_dense_anll_agree(values in proptest::collection::vec(-3.0f64..3.0, 1..10), seed in 0usize..100) {
        let p = factorized(7, 3, 4, &values);
        let records = (0..30).map(|i| Record { z: 1 + (i * 3 + seed) % 7, x: None, y: 1 + (i + seed) % 4 }).collect();
        let data = Dataset::new(Schema::Discrete { n: 4 }, 7, records).unwrap();
        let a = anll(&p, &data).unwrap();
        prop_assert_eq!(a, anll(&p.to_dense(), &data).unwrap());
        prop_assert_eq!(a, anll(&p, &data).unwrap());
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn size_strictly_increases_with_m(k in 4usize..15) {
        let sizes: Vec<usize> = (1..=k).map(|m| encode(&factorized(k, m, 3, &[1.0])).len()).collect();
        prop_assert!(sizes.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn logistic_nll_nonnegative() {
    let p = StratParams::dense(DMatrix::from_element(2, 2, 3.0), BaseKind::Logistic);
    let records = [
        Record {
            z: 1,
            x: Some(DVector::from_vec(vec![1.0, 1.0])),
            y: 0,
        },
        Record {
            z: 2,
            x: Some(DVector::from_vec(vec![-1.0, 0.0])),
            y: 1,
        },
    ];
    let s = p.score(records.iter()).unwrap();
    assert!(s.nll.iter().all(|v| *v >= 0.0));
    assert!((s.anll - s.nll.iter().sum::<f64>() / 2.0).abs() < 1e-15);
}
