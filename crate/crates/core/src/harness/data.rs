use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, CollisionPolicy};
use crate::error::{Error, Result};
use crate::jsonl;

/// Interactions above this share of unresolved item ids abort ingestion.
pub const MAX_DROP_RATIO: f64 = 0.10;

/// One line of an interactions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRow {
    pub user: String,
    pub item: String,
    pub ts: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRecord {
    pub user: String,
    /// `(item index, timestamp)`, timestamps non-decreasing.
    pub interactions: Vec<(usize, i64)>,
}

impl UserRecord {
    pub fn items(&self) -> Vec<usize> {
        self.interactions.iter().map(|&(i, _)| i).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct IngestReport {
    pub users: usize,
    pub interactions: usize,
    pub dropped: usize,
}

/// Groups rows by user (ascending id), sorting each user by timestamp.
/// Rows naming unknown items are dropped and counted.
pub fn group_interactions(
    catalog: &Catalog,
    rows: impl IntoIterator<Item = InteractionRow>,
) -> (Vec<UserRecord>, IngestReport) {
    let mut by_user: BTreeMap<String, Vec<(usize, i64)>> = BTreeMap::new();
    let mut report = IngestReport::default();
    for row in rows {
        report.interactions += 1;
        match catalog.item_index(&row.item) {
            Some(i) => by_user.entry(row.user).or_default().push((i, row.ts)),
            None => report.dropped += 1,
        }
    }
    let users: Vec<UserRecord> = by_user
        .into_iter()
        .map(|(user, mut interactions)| {
            interactions.sort_by_key(|&(_, ts)| ts);
            UserRecord { user, interactions }
        })
        .collect();
    report.users = users.len();
    (users, report)
}

/// Loads a catalog and its interactions, validating ids against the catalog.
pub fn ingest(
    catalog_path: impl AsRef<Path>,
    interactions_path: impl AsRef<Path>,
) -> Result<(Catalog, Vec<UserRecord>, IngestReport)> {
    let catalog = Catalog::from_jsonl(catalog_path, CollisionPolicy::Reject)?;
    let rows: Vec<InteractionRow> = jsonl::read(interactions_path.as_ref())?
        .into_iter()
        .map(|(_, r)| r)
        .collect();
    let (users, report) = group_interactions(&catalog, rows);
    if report.interactions > 0
        && report.dropped as f64 > MAX_DROP_RATIO * report.interactions as f64
    {
        return Err(Error::Dataset(format!(
            "{} of {} interactions reference unknown items",
            report.dropped, report.interactions
        )));
    }
    Ok((catalog, users, report))
}

pub fn write_interactions(
    path: impl AsRef<Path>,
    catalog: &Catalog,
    users: &[UserRecord],
) -> Result<()> {
    let rows: Vec<InteractionRow> = users
        .iter()
        .flat_map(|u| {
            u.interactions.iter().map(|&(i, ts)| InteractionRow {
                user: u.user.clone(),
                item: catalog.item(i).id.clone(),
                ts,
            })
        })
        .collect();
    jsonl::write(path.as_ref(), &rows)
}
