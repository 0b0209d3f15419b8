//! The on-disk profile store: upsert, query, commit, reopen, export.

use chrono::NaiveDate;

use profile::lexdb::LexDb;
use profile::store::{export_profile, Observation, ProfileStore};
use profile::text::parse_tagged;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let categories = LexDb::shipped().categories();
    let date = NaiveDate::from_ymd_opt(1995, 3, 6).unwrap();

    let mut store = ProfileStore::open(dir.path(), categories.clone())?;
    for (desc, times) in [("british@JJ prime@JJ minister@NN", 3), ("prime@JJ minister@NN", 2)] {
        for _ in 0..times {
            store.upsert(Observation::new("John Major", parse_tagged(desc)?, "reuters95_03-06_.nws", date))?;
        }
    }
    store.commit()?;
    drop(store);

    let store = ProfileStore::open(dir.path(), categories)?;
    for entry in store.query("JOHN MAJOR", None, Some(1))? {
        println!("top: {} ({})", entry.surface, entry.frequency);
    }
    print!("{}", export_profile(store.get("john major").expect("stored")));
    Ok(())
}
