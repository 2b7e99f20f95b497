#![no_main]

use econgrasp::dataset::SceneRecord;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(record) = SceneRecord::parse(text) {
        let again = SceneRecord::parse(&record.to_text()).expect("written record parses");
        assert_eq!(again, record);
    }
});
