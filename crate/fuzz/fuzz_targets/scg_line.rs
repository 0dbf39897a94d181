#![no_main]

use libfuzzer_sys::fuzz_target;
use scg_core::{encode_graph, read_scg_line, write_scg_line, Vocab};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(g) = read_scg_line(text) else { return };
    assert_eq!(read_scg_line(&write_scg_line(&g)).unwrap(), g);
    if let Ok(vocab) = Vocab::build(std::slice::from_ref(&g), 100, 100) {
        let e = encode_graph(&g, &vocab);
        assert_eq!(e.len(), g.nodes.len());
    }
});
