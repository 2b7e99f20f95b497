#![no_main]

use econgrasp::label_store::{decode_economic, encode_economic};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(labels) = decode_economic(data) {
        let bytes = encode_economic(&labels).expect("decoded labels re-encode");
        assert_eq!(bytes, data);
    }
});
