//! Character error rate.

/// Levenshtein distance with unit substitution/insertion/deletion costs.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Per-line CER: edit distance divided by reference length. An empty
/// reference maps every hypothesis char to an error of 1 per char via the
/// corpus accumulator; the per-line form returns edits over max(1, |ref|)
/// only for reporting convenience.
pub fn cer(hypothesis: &str, reference: &str) -> f64 {
    let edits = levenshtein(hypothesis, reference);
    let len = reference.chars().count();
    edits as f64 / len.max(1) as f64
}

/// Corpus-level CER: total edit distance over total reference length. Lines
/// with empty references contribute only their edit distance to the numerator.
#[derive(Debug, Clone, Default)]
pub struct CorpusCer {
    pub total_edits: usize,
    pub total_ref_chars: usize,
    pub lines: usize,
}

impl CorpusCer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, hypothesis: &str, reference: &str) {
        self.total_edits += levenshtein(hypothesis, reference);
        self.total_ref_chars += reference.chars().count();
        self.lines += 1;
    }

    pub fn merge(&mut self, other: &CorpusCer) {
        self.total_edits += other.total_edits;
        self.total_ref_chars += other.total_ref_chars;
        self.lines += other.lines;
    }

    pub fn cer(&self) -> f64 {
        if self.total_ref_chars == 0 {
            if self.total_edits == 0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.total_edits as f64 / self.total_ref_chars as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_match_is_zero() {
        assert_eq!(cer("abc", "abc"), 0.0);
        assert_eq!(levenshtein("", ""), 0);
    }

    #[test]
    fn single_insertion() {
        assert!((cer("ab", "abc") - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_hypothesis_is_all_deletions() {
        assert_eq!(cer("", "abc"), 1.0);
    }

    #[test]
    fn zero_iff_equal() {
        for (h, r) in [("a", "b"), ("ab", "ba"), ("", "x"), ("x", "")] {
            assert!(cer(h, r) > 0.0, "{h:?} vs {r:?}");
        }
    }

    #[test]
    fn distance_is_symmetric_with_unit_costs() {
        for (a, b) in [("kitten", "sitting"), ("abc", ""), ("flaw", "lawn")] {
            assert_eq!(levenshtein(a, b), levenshtein(b, a));
        }
        assert_eq!(levenshtein("kitten", "sitting"), 3);
    }

    #[test]
    fn corpus_accumulates_and_handles_empty_refs() {
        let mut c = CorpusCer::new();
        c.add("ab", "abc"); // 1 edit / 3
        c.add("xy", ""); // 2 edits / 0
        assert_eq!(c.total_edits, 3);
        assert_eq!(c.total_ref_chars, 3);
        assert!((c.cer() - 1.0).abs() < 1e-12);
    }
}
