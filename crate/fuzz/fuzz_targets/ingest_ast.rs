#![no_main]

use libfuzzer_sys::fuzz_target;
use scg_core::ast::CanonicalAst;
use scg_core::{build_scg, read_scg_line, write_scg_line, Variant};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(doc) = CanonicalAst::parse(text) else { return };
    let (Ok(tree), Ok(tokens)) = (doc.tree(), doc.raw_tokens()) else { return };
    if let Ok(g) = build_scg(&tree, &tokens, Variant::Standard) {
        g.validate().unwrap();
        assert_eq!(read_scg_line(&write_scg_line(&g)).unwrap(), g);
    }
});
