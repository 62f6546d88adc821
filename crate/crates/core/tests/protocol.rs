mod common;

use parkbarrier::protocol::{crc16_ccitt, decode, encode, DecodeErrorKind, FrameCodec, FrameDecoder};
use proptest::prelude::*;

#[test]
fn crc_matches_bitwise_reference() {
    assert_eq!(common::crc16_bitwise(b"123456789"), 0x29B1);
    assert_eq!(crc16_ccitt(b"123456789"), 0x29B1);
    let mut r = common::rng(3);
    for len in 0..300 {
        let data: Vec<u8> = (0..len).map(|_| rand::Rng::random(&mut r)).collect();
        assert_eq!(crc16_ccitt(&data), common::crc16_bitwise(&data));
    }
}

#[test]
fn generated_messages_round_trip_bit_exactly() {
    common::check_round_trip(10_000);
}

#[test]
fn every_single_byte_mutation_is_detected() {
    common::check_mutations(500);
}

#[test]
fn decoder_resynchronizes_after_payload_corruption() {
    let mut r = common::rng(4);
    let a = common::random_message(&mut r);
    let b = common::random_message(&mut r);
    let mut bad = encode(&a).unwrap();
    bad[6] ^= 0x40;
    let mut stream = vec![0x00, 0xA5, 0x13];
    stream.extend_from_slice(&bad);
    stream.extend_from_slice(&encode(&b).unwrap());
    let out = decode(&stream);
    assert_eq!(out.messages, vec![b]);
    assert!(out.errors.iter().any(|e| e.kind == DecodeErrorKind::CrcMismatch));
    assert!(out.errors.iter().any(|e| e.kind == DecodeErrorKind::BadMagic));
}

#[test]
fn oversize_length_field_is_skipped() {
    let mut r = common::rng(5);
    let good = encode(&common::random_message(&mut r)).unwrap();
    let mut stream = vec![0xA5, 0x5A, 0xFF, 0x00];
    stream.extend_from_slice(&good);
    let out = FrameCodec::default().decode(&stream);
    assert_eq!(out.messages.len(), 1);
    assert_eq!(out.errors[0].kind, DecodeErrorKind::BadLength);
}

proptest! {
    #[test]
    fn chunking_does_not_change_the_result(seed in any::<u64>(), cuts in prop::collection::vec(1usize..40, 1..30)) {
        let mut r = common::rng(seed);
        let msgs: Vec<_> = (0..5).map(|_| common::random_message(&mut r)).collect();
        let mut stream = Vec::new();
        for m in &msgs {
            stream.extend_from_slice(&[0x11, 0xA5]);
            stream.extend_from_slice(&encode(m).unwrap());
        }
        let mut dec = FrameDecoder::default();
        let mut got = Vec::new();
        let mut rest = &stream[..];
        for c in cuts.iter().cycle() {
            if rest.is_empty() {
                break;
            }
            let (head, tail) = rest.split_at((*c).min(rest.len()));
            got.extend(dec.feed(head).messages);
            rest = tail;
        }
        prop_assert_eq!(got, msgs);
        prop_assert_eq!(dec.pending(), 0);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..600)) {
        let out = decode(&bytes);
        prop_assert!(out.consumed <= bytes.len());
    }
}
