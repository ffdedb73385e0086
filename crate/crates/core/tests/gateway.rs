use std::collections::HashMap;

use mtpe::corpus::{AnnotationSource, Corpus, LangPair, Segment};
use mtpe::feedback::{build_postedit_prompt, FeedbackSpec};
use mtpe::gateway::mock::{MockMode, MockOptions, MockServer};
use mtpe::gateway::{ApiShape, Gateway, GatewayError, GenerationConfig, PromptJob};

fn corpus(n: usize) -> Corpus {
    let segs = (0..n)
        .map(|i| Segment {
            id: format!("seg-{i}"),
            lang: LangPair::from_code("en-de").unwrap(),
            system: "sys".into(),
            source: format!("Source sentence number {i}."),
            hypothesis: format!("Hypothese Nummer {i}."),
            reference: Some(format!("Referenzsatz Nummer {i}.")),
            errors: vec![],
            annotated_by: vec![AnnotationSource::Mqm],
        })
        .collect();
    Corpus::from_segments(segs).unwrap()
}

fn jobs(c: &Corpus) -> Vec<PromptJob> {
    c.segments()
        .iter()
        .map(|s| PromptJob {
            segment_id: s.id.clone(),
            lang: s.lang.clone(),
            feedback: "generic".into(),
            k: 0,
            prompt: build_postedit_prompt(s, &FeedbackSpec::Generic, &[], 0, 0).unwrap(),
        })
        .collect()
}

fn config(endpoint: String) -> GenerationConfig {
    GenerationConfig {
        endpoint,
        max_in_flight: 8,
        backoff_ms: 1,
        timeout_secs: 5,
        api_key_env: "MTPE_TEST_NO_SUCH_KEY".into(),
        ..Default::default()
    }
}

#[tokio::test]
async fn echo_reference_in_order() {
    let c = corpus(50);
    let server = MockServer::start(&c, MockOptions::new(MockMode::EchoReference), "127.0.0.1:0")
        .await
        .unwrap();
    let gw = Gateway::new(config(server.base_url())).unwrap();
    let recs = gw.postedit_batch(jobs(&c)).await.unwrap();
    assert_eq!(recs.len(), 50);
    for (rec, seg) in recs.iter().zip(c.segments()) {
        assert_eq!(rec.segment_id, seg.id);
        assert_eq!(rec.hypothesis.as_deref(), seg.reference.as_deref());
        assert!(!rec.failed);
        assert_eq!(rec.attempts, 1);
    }
    server.shutdown().await;
}

#[tokio::test]
async fn retries_then_succeeds() {
    let c = corpus(5);
    let mut opts = MockOptions::new(MockMode::Identity);
    opts.fail_first = 2;
    opts.with_cue = true;
    let server = MockServer::start(&c, opts, "127.0.0.1:0").await.unwrap();
    let gw = Gateway::new(config(server.base_url())).unwrap();
    let recs = gw.postedit_batch(jobs(&c)).await.unwrap();
    for (rec, seg) in recs.iter().zip(c.segments()) {
        assert_eq!(rec.attempts, 3);
        assert_eq!(rec.hypothesis.as_deref(), Some(seg.hypothesis.as_str()));
    }
    assert_eq!(server.request_count(), 15);
    server.shutdown().await;
}

#[tokio::test]
async fn retries_are_bounded() {
    let c = corpus(3);
    let mut opts = MockOptions::new(MockMode::Identity);
    opts.fail_first = 100;
    let server = MockServer::start(&c, opts, "127.0.0.1:0").await.unwrap();
    let mut cfg = config(server.base_url());
    cfg.max_retries = 2;
    let recs = Gateway::new(cfg).unwrap().postedit_batch(jobs(&c)).await.unwrap();
    assert!(recs.iter().all(|r| r.failed && r.attempts == 3 && r.hypothesis.is_none()));
    assert!(recs[0].error.as_deref().unwrap().contains("500"));
    server.shutdown().await;
}

#[tokio::test]
async fn client_error_aborts_batch() {
    let c = corpus(10);
    let mut opts = MockOptions::new(MockMode::Identity);
    opts.force_status = Some(401);
    let server = MockServer::start(&c, opts, "127.0.0.1:0").await.unwrap();
    let err = Gateway::new(config(server.base_url()))
        .unwrap()
        .postedit_batch(jobs(&c))
        .await
        .unwrap_err();
    assert!(matches!(err, GatewayError::Rejected { status: 401, .. }));
    server.shutdown().await;
}

#[tokio::test]
async fn unreachable_server_marks_all_failed() {
    let c = corpus(4);
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let mut cfg = config(format!("http://{addr}/v1"));
    cfg.max_retries = 1;
    let recs = Gateway::new(cfg).unwrap().postedit_batch(jobs(&c)).await.unwrap();
    assert!(recs.iter().all(|r| r.failed && r.attempts == 2 && r.raw_output.is_none()));
}

#[tokio::test]
async fn chat_shape_and_prompt_lookup() {
    let c = corpus(3);
    let scripted: HashMap<String, String> = c
        .segments()
        .iter()
        .map(|s| (s.id.clone(), format!("\"Ausgabe {}\"\n\nNote: changed words", s.id)))
        .collect();
    let server = MockServer::start(&c, MockOptions::new(MockMode::Scripted(scripted)), "127.0.0.1:0")
        .await
        .unwrap();
    let mut cfg = config(server.base_url());
    cfg.api_shape = ApiShape::Chat;
    let mut js = jobs(&c);
    // An id the server does not know forces lookup by prompt text.
    js[1].segment_id = "unknown".into();
    let recs = Gateway::new(cfg).unwrap().postedit_batch(js).await.unwrap();
    assert_eq!(recs[0].hypothesis.as_deref(), Some("Ausgabe seg-0"));
    assert_eq!(recs[1].hypothesis.as_deref(), Some("Ausgabe seg-1"));
    server.shutdown().await;
}
