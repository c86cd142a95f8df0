#![no_main]

use kgqa_core::kg::KgBuilder;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let mut b = KgBuilder::new();
    b.add_triple("A", "r", "B");
    if b.read_nodes(data).is_ok() {
        let kg = b.build();
        for e in 0..kg.num_entities() {
            let _ = kg.display_name(e);
        }
    }
});
