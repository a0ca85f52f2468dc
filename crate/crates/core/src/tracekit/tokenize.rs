//! Token counting interface.

/// Counts tokens in a text. Implementations must be deterministic.
pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Maximal alphanumeric runs plus every other non-whitespace character.
#[derive(Debug, Clone, Copy, Default)]
pub struct ApproxTokenizer;

impl Tokenizer for ApproxTokenizer {
    fn count(&self, text: &str) -> usize {
        let mut n = 0;
        let mut in_word = false;
        for c in text.chars() {
            if c.is_alphanumeric() {
                if !in_word {
                    n += 1;
                    in_word = true;
                }
            } else {
                in_word = false;
                if !c.is_whitespace() {
                    n += 1;
                }
            }
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_runs_and_symbols() {
        let t = ApproxTokenizer;
        assert_eq!(t.count(""), 0);
        assert_eq!(t.count("   \n\t"), 0);
        assert_eq!(t.count("hello world"), 2);
        assert_eq!(t.count("x = 1"), 3);
        assert_eq!(t.count("current_weight"), 3);
        assert_eq!(t.count("print(len(items))"), 7);
        assert_eq!(t.count(r#"{"a": 12}"#), 7);
    }
}
