//! Byte-level mutations for parser fuzzing.

use rand::Rng as _;

use crate::Rng;

const TOKENS: &[&[u8]] = &[
    b"<", b">", b"/>", b"</", b"\"", b"&", b"&#0;", b"&#xD800;", b"&bogus;", b"<![CDATA[x]]>",
    b"<!--", b"-->", b"<instance type=\"", b"<point x=\"1\" y=\"2\" z=\"3\"/>", b"<type name=\"",
    b"</heprep>", b"<heprep>", b"\xff\xfe", b"\x1f\x8b", b"NaN", b"1e999", b",", b"=",
    b"<attvalue name=\"c\" type=\"color\" value=\"2,0,0\"/>",
];

/// Applies 1..=4 random edits: byte flips, insertions of random bytes or
/// XML-ish tokens, deletions, duplications of a slice, or truncation.
pub fn mutate(rng: &mut Rng, input: &[u8]) -> Vec<u8> {
    let mut out = input.to_vec();
    for _ in 0..rng.gen_range(1..=4) {
        let len = out.len();
        let at = if len == 0 { 0 } else { rng.gen_range(0..len) };
        match rng.gen_range(0..7) {
            0 if len > 0 => out[at] ^= 1 << rng.gen_range(0..8),
            1 => {
                let b: u8 = rng.gen();
                out.insert(at, b);
            }
            2 => {
                let tok = TOKENS[rng.gen_range(0..TOKENS.len())];
                out.splice(at..at, tok.iter().copied());
            }
            3 if len > 0 => {
                let end = (at + rng.gen_range(1..32)).min(len);
                out.drain(at..end);
            }
            4 if len > 0 => {
                let end = (at + rng.gen_range(1..64)).min(len);
                let chunk = out[at..end].to_vec();
                let dest = rng.gen_range(0..=len);
                out.splice(dest..dest, chunk);
            }
            5 => out.truncate(at),
            _ if len > 0 => out[at] = rng.gen(),
            _ => out.push(rng.gen()),
        }
    }
    out
}
