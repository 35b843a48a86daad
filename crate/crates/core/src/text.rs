/// Case-folds, trims and collapses internal whitespace runs to one space.
///
/// Used wherever answers are compared as strings: truth filtering during
/// negative sampling and exact-match judging during evaluation.
pub fn normalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}
