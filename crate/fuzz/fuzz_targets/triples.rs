#![no_main]

use kgqa_core::kg::{write_triples, KgBuilder};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let mut b = KgBuilder::new();
    if b.read_triples(data).is_err() {
        return;
    }
    let kg = b.build();
    let mut out = Vec::new();
    write_triples(&mut out, &kg).unwrap();

    let mut again = KgBuilder::new();
    again.read_triples(out.as_slice()).expect("written triples must parse");
    let again = again.build();
    assert_eq!(again.num_triples(), kg.num_triples());
    assert_eq!(again.entity_hash(), kg.entity_hash());
});
