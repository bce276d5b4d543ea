//! Hand-assembled streams checked against the encoder and decoder.

use rfsq::codec::{decode_stream, encode_stream, stream_len};
use rfsq::pipeline::{rfsq_dequantize, RfsqOutput};
use rfsq::{FeatureBlock, InverseState, LevelsSpec, RfsqConfig, Strategy};

const SINGLE_MAX: &[u8] = include_bytes!("fixtures/single_max_index.rfsq");
const TWO_INDICES: &[u8] = include_bytes!("fixtures/two_indices.rfsq");
const SCALE: &[u8] = include_bytes!("fixtures/scale_two_stage.rfsq");
const LAYERNORM: &[u8] = include_bytes!("fixtures/layernorm_one_stage.rfsq");

fn output(indices: Vec<Vec<u64>>, side_info: Vec<InverseState>, d: usize) -> RfsqOutput {
    let m = indices[0].len();
    let zero = FeatureBlock::zeros(m, d).unwrap();
    RfsqOutput {
        q_total: zero.clone(),
        contributions: vec![zero.clone(); indices.len()],
        final_residual: zero,
        side_info,
        indices,
    }
}

fn reencode(bytes: &[u8]) -> Vec<u8> {
    let s = decode_stream(bytes).unwrap();
    let d = s.cfg.dim();
    encode_stream(&output(s.indices, s.side_info, d), &s.cfg).unwrap()
}

#[test]
fn single_max_index_golden() {
    let cfg = RfsqConfig::none(vec![LevelsSpec::new(vec![8, 8, 8, 8]).unwrap()]).unwrap();
    let bytes = encode_stream(&output(vec![vec![4095]], vec![InverseState::None], 4), &cfg).unwrap();
    assert_eq!(bytes, SINGLE_MAX);
    assert_eq!(&SINGLE_MAX[SINGLE_MAX.len() - 2..], &[0xFF, 0xF0]);
    let s = decode_stream(SINGLE_MAX).unwrap();
    assert_eq!(s.indices, vec![vec![4095]]);
    assert_eq!(rfsq_dequantize(&s.indices, &s.side_info, &s.cfg).unwrap().data(), &[1.0; 4]);
}

#[test]
fn two_indices_golden() {
    let s = decode_stream(TWO_INDICES).unwrap();
    assert_eq!(s.indices, vec![vec![1, 2]]);
    assert_eq!(&TWO_INDICES[16..], &[0x00, 0x10, 0x02]);
    assert_eq!(reencode(TWO_INDICES), TWO_INDICES);
}

#[test]
fn scale_golden() {
    let s = decode_stream(SCALE).unwrap();
    assert_eq!(s.cfg.strategy(), Strategy::Scale);
    assert_eq!(s.cfg.scales().iter().map(|p| p.alpha()).collect::<Vec<_>>(), vec![2.0, 0.5]);
    assert_eq!(s.indices, vec![vec![8, 0, 4], vec![1, 2, 3]]);
    let q = rfsq_dequantize(&s.indices, &s.side_info, &s.cfg).unwrap();
    assert_eq!(q.data(), &[0.5, -1.5, 1.5, -2.5, -2.0, 0.0]);
    assert_eq!(reencode(SCALE), SCALE);
    assert_eq!(SCALE.len(), stream_len(&s.cfg, 3));
}

#[test]
fn layernorm_golden() {
    let s = decode_stream(LAYERNORM).unwrap();
    assert_eq!(s.cfg.ln_eps(), Some(1e-5f32 as f64));
    assert_eq!(s.indices, vec![vec![15, 0]]);
    let InverseState::LayerNorm(ln) = &s.side_info[0] else {
        panic!("expected layernorm side information")
    };
    assert_eq!(ln.mu(), &[0.5, -1.0]);
    assert_eq!(ln.sigma(), &[2.0, 0.25]);
    let q = rfsq_dequantize(&s.indices, &s.side_info, &s.cfg).unwrap();
    assert_eq!(q.data(), &[2.5, 2.5, -1.25, -1.25]);
    assert_eq!(reencode(LAYERNORM), LAYERNORM);
}
