#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mtpe::corpus::Corpus;
use mtpe::gateway::mock::{MockMode, MockOptions, MockServer};
use mtpe::sampling;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn mtpe<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtpe"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn mtpe")
}

/// Runs mtpe and panics with its stderr unless the exit code matches.
pub fn mtpe_ok<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    let out = mtpe(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "mtpe failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> String {
    p.display().to_string()
}

pub struct GenSpan {
    pub text: String,
    pub category: &'static str,
    pub severity: &'static str,
}

pub struct GenSegment {
    pub seg_id: usize,
    pub source: String,
    pub hypothesis: String,
    pub reference: String,
    pub spans: Vec<GenSpan>,
}

const CATEGORIES: [(&str, &str); 6] = [
    ("Accuracy/Mistranslation", "Major"),
    ("Fluency/Grammar", "Minor"),
    ("Style/Awkward", "Minor"),
    ("Terminology/Inappropriate for context", "Major"),
    ("Accuracy/Omission", "Minor"),
    ("Non-translation!", "Major"),
];

/// Deterministic synthetic MQM data: random sentences over a small
/// vocabulary, references that replace about a third of the words, and
/// zero to two marked spans per segment.
pub fn synthetic_mqm(n: usize, seed: u64) -> Vec<GenSegment> {
    let mut rng = sampling::rng(seed);
    let mut draw = |k: u64| sampling::uniform_below(&mut rng, k) as usize;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let len = 8 + draw(7);
        let words: Vec<String> = (0..len).map(|_| format!("wort{}", draw(40))).collect();
        let reference: Vec<String> = words
            .iter()
            .map(|w| if draw(3) == 0 { format!("ersatz{}", draw(40)) } else { w.clone() })
            .collect();
        let mut spans = Vec::new();
        for _ in 0..draw(3) {
            let start = draw(len as u64 - 2);
            let width = 1 + draw(3);
            let text = words[start..(start + width).min(len)].join(" ");
            let (category, severity) = CATEGORIES[draw(CATEGORIES.len() as u64)];
            spans.push(GenSpan {
                text,
                category,
                severity,
            });
        }
        out.push(GenSegment {
            seg_id: i + 1,
            source: format!("Source sentence {i} about topic {}.", draw(1000)),
            hypothesis: format!("{} .", words.join(" ")),
            reference: format!("{} .", reference.join(" ")),
            spans,
        });
    }
    out
}

/// WMT-style TSV with one row per error, or one No-error row.
pub fn to_tsv(segs: &[GenSegment]) -> String {
    let mut out = String::from("system\tdoc\tseg_id\trater\tsource\ttarget\tcategory\tseverity\treference\n");
    for g in segs {
        if g.spans.is_empty() {
            out.push_str(&format!(
                "sys-a\tdoc\t{}\trater1\t{}\t{}\tNo-error\tNo-error\t{}\n",
                g.seg_id, g.source, g.hypothesis, g.reference
            ));
        }
        for sp in &g.spans {
            let pos = g.hypothesis.find(&sp.text).expect("span from hypothesis");
            let marked = format!(
                "{}<v>{}</v>{}",
                &g.hypothesis[..pos],
                sp.text,
                &g.hypothesis[pos + sp.text.len()..]
            );
            out.push_str(&format!(
                "sys-a\tdoc\t{}\trater1\t{}\t{}\t{}\t{}\t{}\n",
                g.seg_id, g.source, marked, sp.category, sp.severity, g.reference
            ));
        }
    }
    out
}

/// Mock server on an ephemeral port, owned by its own runtime.
pub struct Served {
    runtime: tokio::runtime::Runtime,
    server: Option<MockServer>,
}

impl Served {
    pub fn start(corpus: &Corpus, mode: MockMode) -> Self {
        let runtime = tokio::runtime::Runtime::new().unwrap();
        let server = runtime
            .block_on(MockServer::start(corpus, MockOptions::new(mode), "127.0.0.1:0"))
            .unwrap();
        Served {
            runtime,
            server: Some(server),
        }
    }

    pub fn url(&self) -> String {
        self.server.as_ref().unwrap().base_url()
    }
}

impl Drop for Served {
    fn drop(&mut self) {
        if let Some(s) = self.server.take() {
            self.runtime.block_on(s.shutdown());
        }
    }
}
