//! Replays the checked-in fuzz corpus through the parsers.

use std::fs;
use std::path::PathBuf;

use contlim_core::formats::{
    canonical_form_to_value, channel_to_value, gcmps_to_value, lindblad_to_value, parse_any,
    parse_canonical_form, parse_channel, parse_gcmps, parse_lindblad, parse_tensor, tensor_to_value,
    to_json_string, InputFile,
};

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|entry| {
            let path = entry.unwrap().path();
            let text = fs::read_to_string(&path).unwrap();
            (path.file_name().unwrap().to_string_lossy().into_owned(), text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

/// Seeds parse except the malformed ones, which sit at the end of each list.
fn check(target: &str, valid: usize, parse: impl Fn(&str) -> bool) {
    for (i, (name, text)) in seeds(target).iter().enumerate() {
        assert_eq!(parse(text), i < valid, "{target}/{name}");
    }
}

#[test]
fn typed_parsers_accept_valid_seeds() {
    check("parse_channel", 2, |t| parse_channel(t).is_ok());
    check("parse_lindblad", 2, |t| parse_lindblad(t).is_ok());
    check("parse_canonical_form", 2, |t| parse_canonical_form(t).is_ok());
    check("parse_tensor", 2, |t| parse_tensor(t).is_ok());
    check("parse_gcmps", 3, |t| parse_gcmps(t).is_ok());
    check("parse_any", 11, |t| parse_any(t).is_ok());
}

#[test]
fn seeds_round_trip() {
    for (name, text) in seeds("roundtrip_any") {
        let file = parse_any(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let value = match &file {
            InputFile::Channel(c) => channel_to_value(c),
            InputFile::Tensor(t) => tensor_to_value(t),
            InputFile::CanonicalForm(cf) => canonical_form_to_value(cf),
            InputFile::Lindblad(g) => lindblad_to_value(g),
            InputFile::Gcmps(g) => gcmps_to_value(g),
        };
        let again = parse_any(&to_json_string(&value).unwrap()).unwrap();
        assert_eq!(again.kind(), file.kind(), "{name}");
    }
}

#[test]
fn truncated_seeds_do_not_panic() {
    for (_, text) in seeds("parse_any") {
        for cut in (0..text.len()).step_by(7) {
            if text.is_char_boundary(cut) {
                let _ = parse_any(&text[..cut]);
            }
        }
    }
}
