//! Emoji-aware word tokenizer.
//!
//! Text is lowercased, ASCII punctuation is deleted (not replaced by a
//! space), every character in the emoji/symbol ranges below is isolated as
//! its own token, and the result is split on whitespace.

/// Inclusive codepoint ranges isolated as single-character tokens.
///
/// Ranges overlap in places; membership is a plain union.
pub const EMOJI_RANGES: &[(u32, u32)] = &[
    (0x1F600, 0x1F64F), // emoticons
    (0x1F300, 0x1F5FF), // symbols & pictographs
    (0x1F680, 0x1F6FF), // transport & map
    (0x1F700, 0x1F77F), // alchemical
    (0x1F780, 0x1F7FF), // geometric shapes extended
    (0x1F800, 0x1F8FF), // supplemental arrows-c
    (0x1F900, 0x1F9FF), // supplemental symbols & pictographs
    (0x1FA00, 0x1FA6F), // chess
    (0x1FA70, 0x1FAFF), // symbols & pictographs extended-a
    (0x1FB00, 0x1FBFF),
    (0x1FC00, 0x1FCFF),
    (0x1FD00, 0x1FDFF),
    (0x1FE00, 0x1FEFF),
    (0x1FF00, 0x1FFFF),
    (0x2600, 0x26FF),   // misc symbols
    (0x2700, 0x27BF),   // dingbats
    (0xFE00, 0xFE0F),   // variation selectors
    (0x1F000, 0x1F02F), // mahjong
    (0x1F0A0, 0x1F0FF), // playing cards
    (0x1F100, 0x1F1FF), // enclosed alphanumeric supplement
    (0x1F200, 0x1F2FF), // enclosed ideographic supplement
    (0x1F170, 0x1F251),
    (0x2000, 0x206F),   // general punctuation, includes ZWJ
    (0x2100, 0x2BFF),   // letterlike, arrows, math operators, ...
    (0x3000, 0x303F),   // CJK symbols & punctuation
    (0x1F3FB, 0x1F3FF), // skin tones
    (0x1F1E0, 0x1F1FF), // regional indicators
];

pub fn is_emoji_char(c: char) -> bool {
    let cp = c as u32;
    EMOJI_RANGES.iter().any(|&(lo, hi)| (lo..=hi).contains(&cp))
}

/// Whitespace as understood by Python's `str.split()` with no separator.
///
/// This is Unicode `White_Space` plus the four ASCII information separators
/// (U+001C..U+001F), which Python treats as whitespace via their bidi class.
pub fn is_split_whitespace(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

pub fn tokenize_with_emojis(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut spaced = String::with_capacity(lowered.len() + 8);
    for c in lowered.chars().filter(|c| !c.is_ascii_punctuation()) {
        if is_emoji_char(c) {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else {
            spaced.push(c);
        }
    }
    spaced
        .split(is_split_whitespace)
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolates_emojis_and_lowercases() {
        assert_eq!(
            tokenize_with_emojis("Hi!! 🌹🌹 Call me"),
            vec!["hi", "🌹", "🌹", "call", "me"]
        );
    }

    #[test]
    fn empty_input() {
        assert!(tokenize_with_emojis("").is_empty());
        assert!(tokenize_with_emojis("  \t\n").is_empty());
    }

    #[test]
    fn punctuation_is_deleted_not_spaced() {
        assert_eq!(tokenize_with_emojis("a.b,c"), vec!["abc"]);
        assert!(tokenize_with_emojis("***-****").is_empty());
    }

    #[test]
    fn unicode_punctuation_outside_ascii_survives() {
        assert_eq!(tokenize_with_emojis("¡hola!"), vec!["¡hola"]);
    }

    #[test]
    fn general_punctuation_whitespace_splits() {
        // U+2003 EM SPACE is in the isolated range and is also whitespace.
        assert_eq!(tokenize_with_emojis("a\u{2003}b"), vec!["a", "b"]);
        assert_eq!(tokenize_with_emojis("a\u{1f}b"), vec!["a", "b"]);
    }

    #[test]
    fn variation_selector_is_its_own_token() {
        assert_eq!(tokenize_with_emojis("❤\u{fe0f}x"), vec!["❤", "\u{fe0f}", "x"]);
    }
}
