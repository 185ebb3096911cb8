use std::path::Path;
use std::sync::Arc;

use ade_client::{Client, ClientError};
use ade_core::glyph::Styles;
use ade_core::ingestion::read_dataset;
use ade_core::taxonomy::{Lang, NodeKind};
use ade_server::{router, AppState};

async fn spawn_server() -> Client {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/pain/dataset");
    let ds = read_dataset(&dir).unwrap();
    let app = router(Arc::new(AppState::new(ds, Styles::builtin())), None);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Client::new(&format!("http://{addr}")).unwrap()
}

#[tokio::test]
async fn client_round_trips_against_a_live_server() {
    let client = spawn_server().await;
    assert_eq!(client.health().await.unwrap(), "ok");
    assert_eq!(client.summary().await.unwrap().trials, 10);

    let response = client.search("group_1_ap=elagolix&group_2_ap=placebo&set=mixed").await.unwrap();
    assert_eq!(response.groups.len(), 2);
    assert!(!response.empty);
    assert!(client.explain("group_1_ap=elagolix&group_2_ap=placebo").await.unwrap().starts_with("record,"));
    assert!(client.overlay("group_1_ap=elagolix&group_2_ap=placebo", 0, 1).await.unwrap().starts_with("<svg"));

    let suggestions = client.autocomplete("tap", Some(NodeKind::ActivePrinciple), Lang::En, 5).await.unwrap();
    assert_eq!(suggestions[0].id, "tapentadol");

    let detail = client.trial("NCT00000001", Lang::En).await.unwrap().unwrap();
    assert_eq!((detail.n_groups, detail.n_events), (2, 8));
    assert!(client.trial("NCT99999999", Lang::En).await.unwrap().is_none());
}

#[tokio::test]
async fn api_errors_carry_the_parameter() {
    let client = spawn_server().await;
    match client.search("group_1_ap=notadrug").await {
        Err(ClientError::Api { status, param, .. }) => {
            assert_eq!(status, 400);
            assert_eq!(param.as_deref(), Some("group_1_ap"));
        }
        other => panic!("expected an API error, got {other:?}"),
    }
}
