use proptest::prelude::*;
use serde_json::{Map, Number, Value as Json};

use heprep_net::wire::{self, FrameError, Kind, WireMessage};

fn json_leaf() -> impl Strategy<Value = Json> {
    prop_oneof![
        Just(Json::Null),
        any::<bool>().prop_map(Json::Bool),
        any::<i64>().prop_map(|i| Json::Number(i.into())),
        any::<u64>().prop_map(|i| Json::Number(i.into())),
        any::<f64>()
            .prop_filter_map("finite", Number::from_f64)
            .prop_map(Json::Number),
        ".*".prop_map(Json::String),
    ]
}

fn json_value() -> impl Strategy<Value = Json> {
    json_leaf().prop_recursive(4, 64, 8, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..8).prop_map(Json::Array),
            prop::collection::vec((".*", inner), 0..8)
                .prop_map(|kv| Json::Object(kv.into_iter().collect::<Map<_, _>>())),
        ]
    })
}

fn message() -> impl Strategy<Value = WireMessage> {
    (
        any::<u64>(),
        prop_oneof![
            Just(Kind::Request),
            Just(Kind::Reply),
            Just(Kind::Error),
            Just(Kind::Notification)
        ],
        proptest::option::of(".*"),
        json_value(),
    )
        .prop_map(|(id, kind, method, payload)| WireMessage {
            id,
            kind,
            method,
            payload,
        })
}

proptest! {
    #[test]
    fn frame_round_trip(msg in message()) {
        prop_assert_eq!(wire::decode(&wire::encode(&msg)).unwrap(), msg);
    }

    #[test]
    fn stream_of_frames(msgs in prop::collection::vec(message(), 0..6)) {
        let bytes: Vec<u8> = msgs.iter().flat_map(wire::encode).collect();
        let mut r = &bytes[..];
        let mut out = Vec::new();
        while let Some(m) = wire::read_message(&mut r).unwrap() {
            out.push(m);
        }
        prop_assert_eq!(out, msgs);
    }

    #[test]
    fn truncated_frames_are_errors(msg in message(), cut in any::<prop::sample::Index>()) {
        let bytes = wire::encode(&msg);
        let at = 1 + cut.index(bytes.len() - 1);
        prop_assert!(matches!(wire::decode(&bytes[..at]), Err(FrameError::Truncated)));
    }

    #[test]
    fn length_prefix_is_body_length(msg in message()) {
        let bytes = wire::encode(&msg);
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        prop_assert_eq!(len, bytes.len() - 4);
        prop_assert!(std::str::from_utf8(&bytes[4..]).is_ok());
    }
}
