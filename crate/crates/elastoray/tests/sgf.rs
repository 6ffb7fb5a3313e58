use elastoray::sgf::{decode, encode, SgfData, SgfError};
use elastoray_core::Grid3;
use proptest::prelude::*;

fn data() -> impl Strategy<Value = SgfData> {
    (1usize..5, 1usize..5, 1usize..5, prop::sample::select(vec![1usize, 3, 6, 21]), any::<bool>(), -1e3f64..1e3, 1e-3f64..10.0)
        .prop_flat_map(|(nx, ny, nz, ncomp, masked, o, h)| {
            let n = nx * ny * nz;
            (
                prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), n * ncomp),
                prop::collection::vec(any::<bool>(), n),
            )
                .prop_map(move |(values, mask)| SgfData {
                    grid: Grid3::new([o, -o, 0.5 * o], h, [nx, ny, nz]).unwrap(),
                    ncomp,
                    values,
                    mask: masked.then_some(mask),
                })
        })
}

proptest! {
    #[test]
    fn encode_decode_is_byte_identical(d in data()) {
        let bytes = encode(&d);
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(back.grid, d.grid);
        prop_assert_eq!(back.mask.clone(), d.mask.clone());
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back.values), bits(&d.values));
        prop_assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn any_truncation_is_rejected(d in data(), cut in 1usize..64) {
        let bytes = encode(&d);
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(decode(&bytes[..keep]).is_err());
    }
}

#[test]
fn trailing_bytes_are_rejected() {
    let d = SgfData { grid: Grid3::cube(0.0, 1.0, 2), ncomp: 1, values: vec![0.5; 8], mask: None };
    let mut bytes = encode(&d);
    bytes.extend_from_slice(&[0, 0]);
    assert_eq!(decode(&bytes), Err(SgfError::Trailing { extra: 2 }));
}
