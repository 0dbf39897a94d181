#![no_main]

use libfuzzer_sys::fuzz_target;
use scg_core::{build_scg, lex, parse_mini, Variant};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(tree) = parse_mini(text) else { return };
    // Anything the parser accepts must lex and yield a valid graph.
    let tokens = lex(text).expect("parsed source lexes");
    for variant in [Variant::Standard, Variant::Variant1] {
        let g = build_scg(&tree, &tokens, variant).expect("parsed source builds");
        g.validate().unwrap();
    }
});
