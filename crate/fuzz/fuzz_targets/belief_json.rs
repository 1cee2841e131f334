#![no_main]

use libfuzzer_sys::fuzz_target;
use mcbrl::belief::BeliefState;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(bel) = BeliefState::from_json(text) {
            let _ = bel.mean_mdp(0.9);
        }
    }
});
