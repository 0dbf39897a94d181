#![no_main]

use libfuzzer_sys::fuzz_target;
use scg_model::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(ckpt) = Checkpoint::from_json(text) else { return };
    // Keep allocations bounded.
    let d = &ckpt.dims;
    if ckpt.config.param_count() > 1 << 20 || d.tokens.max(d.ast_types).max(d.targets).max(ckpt.config.max_positions) > 1 << 12 {
        return;
    }
    if let Ok(model) = ckpt.to_model() {
        let again = Checkpoint::from_model(&model, ckpt.vocab.as_ref());
        assert_eq!(again.to_model().unwrap().store, model.store);
    }
});
