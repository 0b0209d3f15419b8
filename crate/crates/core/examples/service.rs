//! Run the HTTP service against the bundled corpus, ingest it, and query it.

use std::path::PathBuf;

use profile::service::{serve, ServiceConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let store = tempfile::tempdir()?;
    let config = ServiceConfig::parse(&format!(
        "address = \"127.0.0.1:0\"\nstore = {:?}\n\
         [[sources]]\nname = \"reuters\"\nkind = \"local-directory\"\nlocation = {:?}\nformat = \"tagged\"\n\
         [[sources]]\nname = \"live\"\nkind = \"local-directory\"\nlocation = {:?}\n",
        store.path(),
        fixtures.join("corpus"),
        fixtures.join("live"),
    ))?;
    let handle = serve(config).await?;
    let base = format!("http://{}", handle.local_addr());
    let client = reqwest::Client::new();

    let report = client
        .post(format!("{base}/ingest"))
        .header("content-type", "application/json")
        .body(r#"{"source":"reuters"}"#)
        .send()
        .await?
        .text()
        .await?;
    println!("ingest: {report}");

    for path in [
        "/search?entity=john%20major&max=2",
        "/search?entity=john%20major&max=2",
        "/search?entity=Jean%20Chretien&sources=live",
    ] {
        let r = client.get(format!("{base}{path}")).send().await?;
        let cache = r.headers().get("x-cache").and_then(|v| v.to_str().ok()).unwrap_or("-").to_string();
        println!("{path} [{} {cache}]\n  {}", r.status(), r.text().await?);
    }
    handle.shutdown().await?;
    Ok(())
}
