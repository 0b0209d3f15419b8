//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use chrono::NaiveDate;

use common::{fixture, read_fixture};
use profile::data;
use profile::extract::{extract_candidates, extract_descriptions, run_pipeline, weed_candidates, DescriptionKind};
use profile::fd::{aggregate, compile_fd, enhance_former, parse_fd, realize};
use profile::lexdb::LexDb;
use profile::service::{serve, ServiceConfig};
use profile::store::{export_profile, import_text, Observation, ProfileStore};
use profile::text::{parse_corpus, parse_tagged, TaggedDoc};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn corpus() -> Vec<TaggedDoc> {
    parse_corpus(&read_fixture("corpus/reuters95.tag")).expect("corpus parses")
}

fn fd_golden() -> Outcome {
    let tokens = parse_tagged(read_fixture("berlusconi.tag").trim()).map_err(|e| e.to_string())?;
    let (desc, entity) = tokens.split_at(tokens.len() - 2);
    let got = compile_fd(desc, DescriptionKind::Premodifier, entity).map_err(|e| e.to_string())?;
    let want = parse_fd(&read_fixture("berlusconi.fd")).map_err(|e| e.to_string())?;
    check(got == want, || format!("got\n{}\nwant\n{}", got.pretty(), want.pretty()))?;
    let text = realize(&got).map_err(|e| e.to_string())?;
    Ok(format!("FD equal; realizes {text:?}"))
}

fn categorization() -> Outcome {
    let docs = parse_corpus(&read_fixture("categorized.tag")).map_err(|e| e.to_string())?;
    let lex = LexDb::shipped();
    let expected = read_fixture("categorized.expected");
    let rows: Vec<Vec<&str>> = expected
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split('\t').collect())
        .collect();
    let mut exact = 0;
    for row in &rows {
        let [entity, description, trigger, category] = row[..] else {
            return Err(format!("bad row {row:?}"));
        };
        let words: Vec<&str> = entity.split(' ').collect();
        let found = extract_descriptions(&words, &docs, data::noun_phrase_grammar()).map_err(|e| e.to_string())?;
        let [d] = &found[..] else {
            return Err(format!("{entity}: expected one description, got {}", found.len()));
        };
        let cats: Vec<(String, String)> =
            lex.categorize(&d.tokens).into_iter().map(|c| (c.trigger, c.category)).collect();
        let want = vec![(trigger.to_string(), category.to_string())];
        check(d.text() == description && cats == want, || {
            format!("{entity}: got {:?} {cats:?}, want {description:?} {want:?}", d.text())
        })?;
        exact += 1;
    }
    check(exact == 6, || format!("{exact} rows"))?;
    Ok(format!("{exact}/6 exact"))
}

fn store_round_trip() -> Outcome {
    let lex = LexDb::shipped();
    let mut store = ProfileStore::in_memory(lex.categories());
    let date = NaiveDate::from_ymd_opt(1995, 3, 6).unwrap();
    let counts = [
        ("british@JJ prime@JJ minister@NN", 75),
        ("prime@JJ minister@NN", 58),
        ("a@DT defiant@JJ british@JJ prime@JJ minister@NN", 2),
        ("his@DT british@JJ counterpart@NN", 1),
    ];
    // Interleaved, so order of arrival cannot matter.
    let mut left: Vec<(Vec<_>, u32)> =
        counts.iter().map(|(t, n)| (parse_tagged(t).unwrap(), *n)).collect();
    let mut upserts = 0;
    while left.iter().any(|(_, n)| *n > 0) {
        for (tokens, n) in left.iter_mut().filter(|(_, n)| *n > 0) {
            store
                .upsert(Observation::new("John Major", tokens.clone(), "reuters95_03-06_.nws", date))
                .map_err(|e| e.to_string())?;
            *n -= 1;
            upserts += 1;
        }
    }
    let exported = export_profile(store.get("john major").ok_or("no profile")?);
    let want = read_fixture("john_major.txt");
    check(exported == want, || format!("export differs:\n{exported}"))?;
    let again = export_profile(&import_text(&exported).map_err(|e| e.to_string())?);
    check(again == exported, || format!("import/export not lossless:\n{again}"))?;
    Ok(format!("{upserts} upserts; byte-identical; import/export lossless"))
}

fn weeding() -> Outcome {
    let docs = corpus();
    let lex = LexDb::shipped();
    let before = extract_candidates(&docs);
    let after = weed_candidates(&before, &lex);
    let has = |c: &[profile::extract::EntityCandidate], k: &str| c.iter().any(|e| e.key() == k);
    check(has(&before, "prime minister"), || "prime minister never proposed".into())?;
    check(!has(&after, "prime minister"), || "prime minister survived weeding".into())?;
    for name in ["bill clinton", "john major", "gilberto rodriguez orejuela"] {
        check(has(&after, name), || format!("{name} weeded"))?;
    }
    let mut removed = 0;
    for c in &before {
        let any_common = c.words.iter().any(|w| lex.is_common(w));
        check(any_common != has(&after, &c.key()), || format!("{}: common={any_common}", c.key()))?;
        removed += usize::from(any_common);
    }
    let out = run_pipeline(&docs, &lex, data::noun_phrase_grammar()).map_err(|e| e.to_string())?;
    let table = out.report.to_string();
    let lines: Vec<&str> = table.lines().collect();
    check(lines.len() == 3 && lines.iter().all(|l| l.split('\t').count() == 5), || format!("report shape:\n{table}"))?;
    let r = out.report;
    check(
        r.after.two_word.unique <= r.before.two_word.unique && r.after.three_word.unique <= r.before.three_word.unique,
        || "weeding added candidates".into(),
    )?;
    Ok(format!(
        "{removed} with dictionary words removed; 2-word {}/{} -> {}/{}, 3-word {}/{} -> {}/{}",
        r.before.two_word.entities,
        r.before.two_word.unique,
        r.after.two_word.entities,
        r.after.two_word.unique,
        r.before.three_word.entities,
        r.before.three_word.unique,
        r.after.three_word.entities,
        r.after.three_word.unique
    ))
}

fn precision() -> Outcome {
    let docs = corpus();
    let out = run_pipeline(&docs, &LexDb::shipped(), data::noun_phrase_grammar()).map_err(|e| e.to_string())?;
    let labels = read_fixture("corpus.labels");
    let mut gold: BTreeMap<(String, String, String, String), usize> = BTreeMap::new();
    for l in labels.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let f: Vec<&str> = l.split('\t').collect();
        *gold.entry((f[0].into(), f[1].into(), f[2].into(), f[3].into())).or_default() += 1;
    }
    let total_gold: usize = gold.values().sum();
    let extracted = out.descriptions.len();
    let mut correct = 0;
    let mut wrong = Vec::new();
    for cd in &out.descriptions {
        let d = &cd.description;
        let key = (d.doc_id.clone(), d.entity_key.clone(), d.kind.as_str().to_string(), d.text());
        match gold.get_mut(&key) {
            Some(n) if *n > 0 => {
                *n -= 1;
                correct += 1;
            }
            _ => wrong.push(format!("{key:?}")),
        }
    }
    check(wrong.is_empty(), || format!("not in labels: {}", wrong.join("; ")))?;
    check(correct == total_gold, || format!("recall {correct}/{total_gold}"))?;
    let lens: Vec<usize> = out.descriptions.iter().map(|cd| cd.description.tokens.len()).collect();
    let (min, max) = (*lens.iter().min().unwrap(), *lens.iter().max().unwrap());
    check(min == 1 && max == 9, || format!("length bounds {min}..{max}"))?;
    let gucci = out
        .descriptions
        .iter()
        .find(|cd| cd.description.entity_key == "maurizio gucci")
        .ok_or("no Gucci description")?;
    check(gucci.description.tokens.len() == 9, || format!("gucci: {}", gucci.description.text()))?;
    Ok(format!(
        "precision {correct}/{extracted} = {:.1}%; lengths {min}..{max}",
        100.0 * correct as f64 / extracted as f64
    ))
}

fn oracle() -> Outcome {
    let a = common::oracle::agreement(1000);
    check(a.agree == 1000, || format!("{} agree; first:\n{}", a.agree, a.first_failure.clone().unwrap_or_default()))?;
    Ok(format!("1000/1000 agree ({} with matches)", a.nonempty))
}

fn transformations() -> Outcome {
    let yeltsin = parse_fd(&read_fixture("yeltsin.fd")).map_err(|e| e.to_string())?;
    let clinton = parse_fd(&read_fixture("clinton.fd")).map_err(|e| e.to_string())?;
    let both = realize(&aggregate(&yeltsin, &clinton).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    check(both == "presidents Yeltsin and Clinton", || format!("aggregate: {both:?}"))?;
    let pm = parse_fd("((cat common) (determiner none) (classifier ((lex \"prime\"))) (head ((lex \"minister\"))))")
        .map_err(|e| e.to_string())?;
    let former = realize(&enhance_former(&pm).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    check(former == "former prime minister", || format!("former: {former:?}"))?;
    Ok(format!("{both:?}; {former:?}"))
}

struct Http {
    client: reqwest::Client,
    base: String,
}

impl Http {
    async fn get(&self, path: &str) -> Result<(u16, Option<String>, String), String> {
        let r = self.client.get(format!("{}{path}", self.base)).send().await.map_err(|e| e.to_string())?;
        let status = r.status().as_u16();
        let cache = r.headers().get("x-cache").and_then(|v| v.to_str().ok()).map(str::to_string);
        Ok((status, cache, r.text().await.map_err(|e| e.to_string())?))
    }
}

fn service_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let toml = format!(
        "address = \"127.0.0.1:0\"\nstore = {:?}\n\n\
         [[sources]]\nname = \"reuters\"\nkind = \"local-directory\"\nlocation = {:?}\nformat = \"tagged\"\n\n\
         [[sources]]\nname = \"live\"\nkind = \"local-directory\"\nlocation = {:?}\nformat = \"plain\"\n",
        dir.path().join("store"),
        fixture("corpus"),
        fixture("live"),
    );
    let config = ServiceConfig::parse(&toml).map_err(|e| e.to_string())?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let handle = serve(config).await.map_err(|e| e.to_string())?;
        let http = Http { client: reqwest::Client::new(), base: format!("http://{}", handle.local_addr()) };

        let r = http
            .client
            .post(format!("{}/ingest", http.base))
            .header("content-type", "application/json")
            .body(r#"{"source":"reuters"}"#)
            .send()
            .await
            .map_err(|e| e.to_string())?;
        check(r.status().as_u16() == 200, || format!("ingest status {}", r.status()))?;

        let (s1, c1, b1) = http.get("/search?entity=john%20major").await?;
        let (s2, c2, b2) = http.get("/search?entity=John%20Major").await?;
        check(s1 == 200 && s2 == 200, || format!("search status {s1}/{s2}"))?;
        check(c1.as_deref() == Some("miss") && c2.as_deref() == Some("hit"), || format!("cache {c1:?} then {c2:?}"))?;
        check(b1 == b2, || "cached body differs".into())?;
        let v: serde_json::Value = serde_json::from_str(&b1).map_err(|e| e.to_string())?;
        let top = v["results"][0]["description"].as_str().unwrap_or_default().to_string();
        check(top == "british prime minister", || format!("top result {top:?}"))?;

        let (s3, _, b3) = http.get("/search?entity=Jean%20Chretien&sources=live").await?;
        let v: serde_json::Value = serde_json::from_str(&b3).map_err(|e| e.to_string())?;
        check(s3 == 200 && v["origin"] == "fetched", || format!("fallback {s3}: {b3}"))?;
        let fetched = v["results"][0]["description"].as_str().unwrap_or_default().to_string();
        check(fetched == "canadian prime minister", || format!("fallback result {fetched:?}"))?;
        let (s4, _, _) = http.get("/profiles/jean%20chretien").await?;
        check(s4 == 200, || format!("fetched profile not stored: {s4}"))?;

        handle.shutdown().await.map_err(|e| e.to_string())?;
        Ok(format!("miss then hit, identical body; fallback found {fetched:?}"))
    })
}

fn store_linearity() -> Outcome {
    let docs = corpus();
    let lex = LexDb::shipped();
    let out = run_pipeline(&docs, &lex, data::noun_phrase_grammar()).map_err(|e| e.to_string())?;
    let observations: Vec<Observation> = out.descriptions.iter().map(Observation::from).collect();

    let mut once = ProfileStore::in_memory(lex.categories());
    once.upsert_batch(observations.clone()).map_err(|e| e.to_string())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut twice = ProfileStore::open(dir.path(), lex.categories()).map_err(|e| e.to_string())?;
    twice.upsert_batch(observations.clone()).map_err(|e| e.to_string())?;
    twice.upsert_batch(observations).map_err(|e| e.to_string())?;

    let mut entries = 0;
    for p in once.profiles() {
        let q = twice.get(&p.key).ok_or_else(|| format!("{} missing", p.key))?;
        check(p.entries.len() == q.entries.len(), || format!("{}: entry count", p.key))?;
        for e in &p.entries {
            let f = q.entry(&e.surface).map(|x| x.frequency);
            check(f == Some(2 * e.frequency), || format!("{} / {}: {f:?} vs {}", p.key, e.surface, e.frequency))?;
            entries += 1;
        }
    }

    let snapshot = |s: &ProfileStore| -> Result<Vec<_>, String> {
        let mut keys: Vec<String> = s.keys().map(str::to_string).collect();
        keys.sort();
        keys.into_iter()
            .map(|k| s.query(&k, None, None).map(|r| (k, r)).map_err(|e| e.to_string()))
            .collect()
    };
    let before = snapshot(&twice)?;
    twice.commit().map_err(|e| e.to_string())?;
    drop(twice);
    let reopened = ProfileStore::open(dir.path(), lex.categories()).map_err(|e| e.to_string())?;
    check(snapshot(&reopened)? == before, || "queries differ after reopen".into())?;
    Ok(format!("{entries} entries doubled; {} profiles identical after reopen", before.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("fd-golden", fd_golden, Duration::from_secs(1)),
        ("categorization", categorization, Duration::from_secs(5)),
        ("profile-round-trip", store_round_trip, Duration::from_secs(1)),
        ("weeding", weeding, Duration::from_secs(5)),
        ("precision", precision, Duration::from_secs(5)),
        ("pattern-oracle", oracle, Duration::from_secs(30)),
        ("generation", transformations, Duration::from_secs(1)),
        ("service", service_end_to_end, Duration::from_secs(10)),
        ("store-linearity", store_linearity, Duration::from_secs(5)),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let result = match result {
            Ok(detail) if took > budget => Err(format!("{detail} (took {took:?}, budget {budget:?})")),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS {name:<20} {detail} [{} ms]", took.as_millis()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name:<20} {why} [{} ms]", took.as_millis());
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
