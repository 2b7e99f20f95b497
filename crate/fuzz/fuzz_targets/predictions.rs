#![no_main]

use econgrasp::eval::{format_prediction, parse_predictions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(parsed) = parse_predictions(text) {
        let mut out = String::new();
        for (scene, grasps) in &parsed {
            for g in grasps {
                out.push_str(&format_prediction(scene, g));
                out.push('\n');
            }
        }
        assert_eq!(parse_predictions(&out).expect("written lines parse"), parsed);
    }
});
