#![no_main]

use libfuzzer_sys::fuzz_target;
use proctor_core::rasch::CalibrationResult;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(result) = CalibrationResult::from_json(text) {
        // loaded difficulties round-trip through the means accessor
        let means = result.difficulty_means();
        assert_eq!(means.len(), result.difficulties.len());
    }
});
