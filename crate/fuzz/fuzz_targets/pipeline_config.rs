#![no_main]

use econgrasp::config::PipelineConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = PipelineConfig::parse(text) {
        let _ = cfg.validate();
        let again = PipelineConfig::parse(&cfg.to_text()).expect("echo parses");
        assert_eq!(again, cfg);
    }
});
