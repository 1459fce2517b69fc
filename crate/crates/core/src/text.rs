//! Character-offset text utilities shared by matching, tokenization and
//! summarization. All offsets in this crate count Unicode scalar values.

/// Lowercases a single char when the lowercase form is itself one char;
/// otherwise returns it unchanged, so folding never shifts offsets.
pub fn fold_char(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

pub fn fold(s: &str) -> String {
    s.chars().map(fold_char).collect()
}

pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Substring by char offsets `[start, end)`. Returns `None` when out of range.
pub fn char_slice(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
    let b0 = indices.nth(start)?;
    let b1 = if end == start {
        b0
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&s[b0..b1])
}

/// First case-folded occurrence of `needle` in `haystack`, as char offsets.
pub fn find_folded(haystack: &str, needle: &str) -> Option<(usize, usize)> {
    let hay: Vec<char> = haystack.chars().map(fold_char).collect();
    let pat: Vec<char> = needle.chars().map(fold_char).collect();
    if pat.is_empty() || pat.len() > hay.len() {
        return None;
    }
    (0..=hay.len() - pat.len())
        .find(|&i| hay[i..i + pat.len()] == pat[..])
        .map(|i| (i, i + pat.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_by_chars() {
        let s = "Zürich Hbf";
        assert_eq!(char_slice(s, 0, 6), Some("Zürich"));
        assert_eq!(char_slice(s, 7, 10), Some("Hbf"));
        assert_eq!(char_slice(s, 10, 10), Some(""));
        assert_eq!(char_slice(s, 7, 11), None);
    }

    #[test]
    fn folding_preserves_length() {
        let s = "İstanbul CAFÉ";
        assert_eq!(char_len(&fold(s)), char_len(s));
        assert_eq!(find_folded("Visit the TECH museum", "Tech Museum"), Some((10, 21)));
    }
}
