use super::SubwordVocabulary;

/// Greedy longest-match-first WordPiece decomposition.
///
/// The first piece is matched bare, every later piece with the continuation
/// prefix. If any position has no matching piece the whole term becomes
/// `[unk_id]`.
pub fn tokenize_wordpiece(term: &str, subvocab: &SubwordVocabulary) -> Vec<u32> {
    if term.is_empty() {
        return vec![subvocab.unk_id()];
    }
    let prefix = subvocab.continuation_prefix();
    // Char boundaries, so slicing never splits a code point.
    let bounds: Vec<usize> = term
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(term.len()))
        .collect();

    let mut ids = Vec::new();
    let mut candidate = String::with_capacity(term.len() + prefix.len());
    let mut start = 0usize;
    while start + 1 < bounds.len() {
        let mut end = bounds.len() - 1;
        let mut found = None;
        while end > start {
            candidate.clear();
            if start > 0 {
                candidate.push_str(prefix);
            }
            candidate.push_str(&term[bounds[start]..bounds[end]]);
            if let Some(id) = subvocab.id(&candidate) {
                found = Some(id);
                break;
            }
            end -= 1;
        }
        match found {
            Some(id) => {
                ids.push(id);
                start = end;
            }
            None => return vec![subvocab.unk_id()],
        }
    }
    ids
}
