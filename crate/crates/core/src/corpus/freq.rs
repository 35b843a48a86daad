use std::collections::BTreeMap;

/// Per-category objects ranked by count, descending, ties lexicographic.
pub type CategoryTable = BTreeMap<String, Vec<(String, u64)>>;

/// Ranks `(category, object, count)` entries; repeated keys are summed.
pub fn category_frequency_table<'a, I>(entries: I, top_m: usize) -> CategoryTable
where
    I: IntoIterator<Item = (&'a str, &'a str, u64)>,
{
    let mut counts: BTreeMap<&str, BTreeMap<&str, u64>> = BTreeMap::new();
    for (cat, obj, n) in entries {
        *counts.entry(cat).or_default().entry(obj).or_default() += n;
    }
    counts
        .into_iter()
        .map(|(cat, objs)| {
            let mut ranked: Vec<(String, u64)> =
                objs.into_iter().map(|(o, n)| (o.to_string(), n)).collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            ranked.truncate(top_m.max(1));
            (cat.to_string(), ranked)
        })
        .collect()
}
