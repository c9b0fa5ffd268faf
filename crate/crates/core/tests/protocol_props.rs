//! Property tests for the wire protocol: round-trip identity over
//! random valid messages, self-delimiting frame streams, and decode
//! robustness against mutated and random input.

use proptest::prelude::*;

use picluster::protocol::{decode, encode, Message, ProtocolError, HEADER_LEN};

fn arb_f64() -> impl Strategy<Value = f64> {
    // Arbitrary bit patterns, NaNs and infinities included; the wire
    // format is a bit pattern, so everything must survive.
    any::<u64>().prop_map(f64::from_bits)
}

fn arb_message() -> impl Strategy<Value = Message> {
    prop_oneof![
        Just(Message::Ping),
        Just(Message::Pong),
        Just(Message::Warmup),
        Just(Message::WarmupDone),
        (any::<u32>(), 1u32..12, 1u32..12).prop_flat_map(|(start_row, rows, cols)| {
            (
                proptest::collection::vec(arb_f64(), (rows * cols) as usize),
                proptest::collection::vec(arb_f64(), cols as usize),
            )
                .prop_map(move |(row_data, vector)| Message::MatvecRequest {
                    start_row,
                    rows,
                    cols,
                    row_data,
                    vector,
                })
        }),
        (any::<u32>(), 0u32..32).prop_flat_map(|(start_row, rows)| {
            proptest::collection::vec(arb_f64(), rows as usize).prop_map(move |result| {
                Message::MatvecResponse {
                    start_row,
                    rows,
                    result,
                }
            })
        }),
        (any::<u64>(), any::<u32>(), any::<u64>(), any::<u64>()).prop_map(
            |(samples, threads, base_seed, stream_base)| Message::PiRequest {
                samples,
                threads,
                base_seed,
                stream_base,
            }
        ),
        (arb_f64(), any::<u64>()).prop_map(|(estimate, samples)| Message::PiResponse {
            estimate,
            samples
        }),
        (any::<u16>(), ".{0,64}").prop_map(|(code, message)| Message::ErrorReply {
            code,
            message
        }),
    ]
}

proptest! {
    #[test]
    fn round_trip_is_identity(msg in arb_message()) {
        let bytes = encode(&msg).unwrap();
        let (decoded, consumed) = decode(&bytes).unwrap();
        prop_assert_eq!(consumed, bytes.len());
        // Compare re-encoded bytes rather than values so NaN payloads
        // count as equal when their bit patterns are.
        prop_assert_eq!(encode(&decoded).unwrap(), bytes);
    }

    #[test]
    fn frames_are_self_delimiting(msgs in proptest::collection::vec(arb_message(), 1..5)) {
        let mut stream = Vec::new();
        for m in &msgs {
            stream.extend_from_slice(&encode(m).unwrap());
        }
        let mut off = 0;
        for m in &msgs {
            let (decoded, used) = decode(&stream[off..]).unwrap();
            prop_assert_eq!(encode(&decoded).unwrap(), encode(m).unwrap());
            off += used;
        }
        prop_assert_eq!(off, stream.len());
    }

    #[test]
    fn mutated_frames_never_panic(msg in arb_message(), flips in proptest::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..8)) {
        let mut bytes = encode(&msg).unwrap();
        for (idx, val) in flips {
            let pos = idx.index(bytes.len());
            bytes[pos] ^= val;
        }
        // Any outcome is fine except a crash; errors must be typed.
        let _ = decode(&bytes);
    }

    #[test]
    fn random_bytes_never_panic(data in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode(&data);
    }

    #[test]
    fn truncations_yield_typed_errors(msg in arb_message(), cut in any::<prop::sample::Index>()) {
        let bytes = encode(&msg).unwrap();
        let keep = cut.index(bytes.len().max(1));
        if keep < bytes.len() {
            match decode(&bytes[..keep]) {
                Err(ProtocolError::Truncated { .. }) => {}
                Err(other) => prop_assert!(
                    keep >= HEADER_LEN,
                    "short header must report truncation, got {other}"
                ),
                Ok(_) => prop_assert!(false, "decoding a truncated frame cannot succeed"),
            }
        }
    }
}

#[test]
fn encode_is_injective_across_kinds() {
    let msgs = [
        Message::Ping,
        Message::Pong,
        Message::Warmup,
        Message::WarmupDone,
        Message::PiRequest {
            samples: 0,
            threads: 0,
            base_seed: 0,
            stream_base: 0,
        },
        Message::PiResponse {
            estimate: 0.0,
            samples: 0,
        },
        Message::ErrorReply {
            code: 0,
            message: String::new(),
        },
    ];
    let encodings: Vec<Vec<u8>> = msgs.iter().map(|m| encode(m).unwrap()).collect();
    for i in 0..encodings.len() {
        for j in 0..encodings.len() {
            if i != j {
                assert_ne!(encodings[i], encodings[j]);
            }
        }
    }
}
