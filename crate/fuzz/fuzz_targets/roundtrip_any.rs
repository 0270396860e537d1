#![no_main]

use contlim_core::formats::{
    canonical_form_to_value, channel_to_value, gcmps_to_value, lindblad_to_value, parse_any,
    tensor_to_value, to_json_string, InputFile,
};
use libfuzzer_sys::fuzz_target;

// Anything that parses must serialize to text that parses again as the same kind.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(file) = parse_any(text) else { return };
    let value = match &file {
        InputFile::Channel(c) => channel_to_value(c),
        InputFile::Tensor(t) => tensor_to_value(t),
        InputFile::CanonicalForm(cf) => canonical_form_to_value(cf),
        InputFile::Lindblad(g) => lindblad_to_value(g),
        InputFile::Gcmps(g) => gcmps_to_value(g),
    };
    let written = to_json_string(&value).expect("serializable");
    let again = parse_any(&written).expect("written file parses");
    assert_eq!(again.kind(), file.kind());
});
