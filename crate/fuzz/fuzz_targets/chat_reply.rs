#![no_main]

use libfuzzer_sys::fuzz_target;
use proctor_core::session::first_token_group;

fuzz_target!(|data: &[u8]| {
    let Ok(reply) = std::str::from_utf8(data) else {
        return;
    };
    let token = first_token_group(reply);
    // the token is a contiguous alphanumeric run from the reply
    assert!(token.chars().all(|c| c.is_alphanumeric()));
    assert!(reply.contains(token));
    let _ = token.eq_ignore_ascii_case("A");
});
