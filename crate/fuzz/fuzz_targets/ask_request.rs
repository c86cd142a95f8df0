#![no_main]

use kgqa_service::AskRequest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(request) = serde_json::from_slice::<AskRequest>(data) {
        let text = serde_json::to_vec(&request).unwrap();
        let again: AskRequest = serde_json::from_slice(&text).unwrap();
        assert_eq!(again, request);
    }
});
