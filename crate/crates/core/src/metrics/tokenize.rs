//! mteval-v13a style tokenization.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

static PUNCT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([\{-~\[-` -&\(-\+:-@/])").expect("valid regex"));
static PERIOD_COMMA_AFTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([^0-9])([\.,])").expect("valid regex"));
static PERIOD_COMMA_BEFORE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([\.,])([^0-9])").expect("valid regex"));
static DASH: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([0-9])(-)").expect("valid regex"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
}

impl TokenizerConfig {
    /// Identifier recorded in reports.
    pub fn id(&self) -> String {
        format!("tok:13a|case:{}", if self.lowercase { "lc" } else { "mixed" })
    }
}

/// Splits `text` into tokens: punctuation and symbols become separate
/// tokens, periods and commas are split off unless they sit between
/// digits, and whitespace runs collapse.
pub fn tokenize(text: &str, cfg: TokenizerConfig) -> Vec<String> {
    let mut line = text.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    if line.contains('&') {
        line = line
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    let line = format!(" {line} ");
    let line = PUNCT.replace_all(&line, " $1 ");
    let line = PERIOD_COMMA_AFTER.replace_all(&line, "$1 $2 ");
    let line = PERIOD_COMMA_BEFORE.replace_all(&line, " $1 $2");
    let line = DASH.replace_all(&line, "$1 $2 ");
    let line = if cfg.lowercase {
        line.to_lowercase()
    } else {
        line.into_owned()
    };
    line.split_whitespace().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(s: &str) -> Vec<String> {
        tokenize(s, TokenizerConfig::default())
    }

    #[test]
    fn punctuation_split() {
        assert_eq!(tok("Hello, world!"), vec!["Hello", ",", "world", "!"]);
        assert_eq!(tok("a  b"), vec!["a", "b"]);
        assert!(tok("").is_empty());
    }

    #[test]
    fn numbers_keep_separators() {
        assert_eq!(tok("It costs 3.50 or 1,000."), vec!["It", "costs", "3.50", "or", "1,000", "."]);
        assert_eq!(tok("1990-2000"), vec!["1990", "-", "2000"]);
        assert_eq!(tok("e-mail"), vec!["e-mail"]);
    }

    #[test]
    fn entities_and_case() {
        assert_eq!(tok("a &amp; b"), vec!["a", "&", "b"]);
        assert_eq!(
            tokenize("Hello World", TokenizerConfig { lowercase: true }),
            vec!["hello", "world"]
        );
    }

    #[test]
    fn non_ascii_text_untouched() {
        assert_eq!(tok("Gepäck versehen."), vec!["Gepäck", "versehen", "."]);
        assert_eq!(tok("«Привет»"), vec!["«Привет»"]);
    }
}
