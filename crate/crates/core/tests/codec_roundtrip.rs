use proptest::prelude::*;
use rfsq::codec::{decode_stream, encode_stream, stream_len};
use rfsq::pipeline::{rfsq_dequantize, rfsq_quantize};
use rfsq::tensor::{gen_synthetic, Distribution};
use rfsq::{Error, LevelsSpec, RfsqConfig};

fn config() -> impl proptest::strategy::Strategy<Value = RfsqConfig> {
    (
        prop::collection::vec(2u32..=255, 1..6),
        prop::sample::select(vec![1usize, 2, 4]),
        0u8..3,
        prop::collection::vec(0.25f64..64.0, 4),
        1e-7f64..1e-2,
    )
        .prop_filter_map("codebook above 2^20", |(mut levels, k, strat, alphas, eps)| {
            while levels.iter().map(|&l| l as u64).product::<u64>() > 1 << 20 {
                levels.pop();
            }
            let s = LevelsSpec::new(levels).ok()?;
            let all = vec![s; k];
            match strat {
                0 => RfsqConfig::none(all).ok(),
                1 => RfsqConfig::scaled(all, alphas[..k].to_vec()).ok(),
                _ => RfsqConfig::layernorm(all, eps).ok(),
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn decode_inverts_encode(cfg in config(), m in 0usize..50, seed in any::<u64>(), spread in 0.01f64..3.0) {
        let z = gen_synthetic(Distribution::Gaussian { mean: 0.1, std: spread, clip: 0.0 }, m, cfg.dim(), seed).unwrap();
        let out = rfsq_quantize(&z, &cfg).unwrap();
        let bytes = encode_stream(&out, &cfg).unwrap();
        prop_assert_eq!(bytes.len(), stream_len(&cfg, m));
        let back = decode_stream(&bytes).unwrap();
        prop_assert_eq!(&back.cfg, &cfg);
        prop_assert_eq!(&back.indices, &out.indices);
        prop_assert_eq!(&back.side_info, &out.side_info);
        // index-only decode reproduces the encoder's reconstruction exactly
        let q = rfsq_dequantize(&back.indices, &back.side_info, &back.cfg).unwrap();
        prop_assert_eq!(q.data(), out.q_total.data());
        for (spec, idx) in cfg.levels().iter().zip(&out.indices) {
            prop_assert!(idx.iter().all(|&i| i < 1u64 << spec.packed_bits()));
        }
    }

    #[test]
    fn garbage_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..80)) {
        let _ = decode_stream(&bytes);
    }

    #[test]
    fn truncation_is_a_format_error(cfg in config(), m in 1usize..20, cut_frac in 0.0f64..1.0) {
        let z = gen_synthetic(Distribution::Uniform { lo: -1.0, hi: 1.0 }, m, cfg.dim(), 3).unwrap();
        let bytes = encode_stream(&rfsq_quantize(&z, &cfg).unwrap(), &cfg).unwrap();
        let cut = ((bytes.len() as f64) * cut_frac) as usize;
        let truncated = matches!(decode_stream(&bytes[..cut]), Err(Error::Format { .. }));
        prop_assert!(truncated);
    }
}
