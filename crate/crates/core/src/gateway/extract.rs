use crate::corpus::LangPair;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("no hypothesis left after stripping the model output")]
pub struct ExtractError;

const COMMENTARY: [&str; 6] = ["Explanation:", "Note:", "Notes:", "Comment:", "Improve the translation", "Translate from"];

const QUOTES: [(char, char); 5] = [('"', '"'), ('“', '”'), ('„', '“'), ('«', '»'), ('\'', '\'')];

/// Pulls the edited translation out of raw model output.
///
/// Drops a leading `Improved {Tgt}:` or `{Tgt}:` cue, keeps lines up to the
/// first blank line, `###` header, commentary label or prompt-style
/// language cue, then trims whitespace and one pair of enclosing quotes.
pub fn extract_hypothesis(raw: &str, lang: &LangPair) -> Result<String, ExtractError> {
    let improved_cue = format!("Improved {}:", lang.tgt());
    let tgt_cue = format!("{}:", lang.tgt());
    let src_cue = format!("{}:", lang.src());

    let mut text = raw.trim_start();
    if let Some(rest) = text.strip_prefix(&improved_cue) {
        text = rest;
    } else if let Some(rest) = text.strip_prefix(&tgt_cue) {
        text = rest;
    }
    let text = text.trim_start();

    let mut kept = Vec::new();
    for line in text.lines() {
        let t = line.trim_start();
        let stop = t.is_empty()
            || t.starts_with("###")
            || COMMENTARY.iter().any(|c| t.starts_with(c))
            || t.starts_with(&improved_cue)
            || t.starts_with(&tgt_cue)
            || t.starts_with(&src_cue);
        if stop {
            break;
        }
        kept.push(line);
    }
    let mut out = kept.join("\n").trim().to_string();
    for (open, close) in QUOTES {
        let n = out.chars().count();
        if n >= 2 && out.starts_with(open) && out.ends_with(close) {
            let inner: String = out.chars().skip(1).take(n - 2).collect();
            out = inner.trim().to_string();
            break;
        }
    }
    if out.is_empty() {
        Err(ExtractError)
    } else {
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn en() -> LangPair {
        LangPair::from_code("zh-en").unwrap()
    }

    fn de() -> LangPair {
        LangPair::from_code("en-de").unwrap()
    }

    #[test]
    fn strips_cue() {
        assert_eq!(extract_hypothesis("Improved English: Hello there.", &en()).unwrap(), "Hello there.");
        assert_eq!(extract_hypothesis("English: Hello there.", &en()).unwrap(), "Hello there.");
        assert_eq!(extract_hypothesis("  Improved German:\n Hallo.", &de()).unwrap(), "Hallo.");
    }

    #[test]
    fn truncates_commentary() {
        assert_eq!(extract_hypothesis("Hello there.\n\nNote: I fixed…", &en()).unwrap(), "Hello there.");
        assert_eq!(extract_hypothesis("Improved German: X\nExplanation: …", &de()).unwrap(), "X");
        assert_eq!(extract_hypothesis("Hallo.\n### English: next", &de()).unwrap(), "Hallo.");
        assert_eq!(
            extract_hypothesis(" Hallo Welt.\nEnglish: The next shot\nGerman: x", &de()).unwrap(),
            "Hallo Welt."
        );
    }

    #[test]
    fn strips_quotes() {
        assert_eq!(extract_hypothesis("\"Hello there.\"", &en()).unwrap(), "Hello there.");
        assert_eq!(extract_hypothesis("„Hallo.“", &de()).unwrap(), "Hallo.");
        assert_eq!(extract_hypothesis("He said \"hi\"", &en()).unwrap(), "He said \"hi\"");
    }

    #[test]
    fn empty_is_failure() {
        assert_eq!(extract_hypothesis("", &en()), Err(ExtractError));
        assert_eq!(extract_hypothesis("Improved English:   \n\n", &en()), Err(ExtractError));
        assert_eq!(extract_hypothesis("\"\"", &en()), Err(ExtractError));
    }
}
