#![no_main]

use kgqa_core::gazetteer::Gazetteer;
use kgqa_core::kg::KgBuilder;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let mut b = KgBuilder::new();
    b.add_triple("A", "r", "B");
    let kg = b.build();
    let mut gz = Gazetteer::build(&kg);
    if gz.add_synonyms(&kg, data).is_ok() {
        for form in gz.forms() {
            assert!(form.entities.iter().all(|&e| e < kg.num_entities()));
        }
    }
});
