#![no_main]

use std::sync::OnceLock;

use kgqa_core::gazetteer::Gazetteer;
use kgqa_core::kg::{KgBuilder, NodeMeta};
use libfuzzer_sys::fuzz_target;

fn gazetteer() -> &'static Gazetteer {
    static GAZETTEER: OnceLock<Gazetteer> = OnceLock::new();
    GAZETTEER.get_or_init(|| {
        let mut b = KgBuilder::new();
        for (id, name) in [
            ("GO:0060426", "lung vasculature development"),
            ("UBERON:0002048", "lung"),
            ("DOID:1324", "lung cancer"),
            ("GENE:1", "IL-6"),
            ("GENE:2", "Mercury"),
            ("CHEM:1", "Mercury"),
        ] {
            b.add_node(
                id,
                NodeMeta {
                    name: name.into(),
                    kind: "node".into(),
                    synonyms: Vec::new(),
                },
            );
            b.add_triple(id, "r", "GENE:1");
        }
        Gazetteer::build(&b.build())
    })
}

fuzz_target!(|data: &[u8]| {
    let question = String::from_utf8_lossy(data);
    if let Ok(found) = gazetteer().extract_head(&question) {
        let chars = question.chars().count();
        assert!(found.span.start < found.span.end && found.span.end <= chars);
        assert!(!found.candidates.is_empty());
    }
});
