//! Binary dataset container and its JSON sidecar.
//!
//! Layout, all integers little-endian u64:
//!
//! ```text
//! magic "S2SR-DS1" | num_users | num_items
//! train offsets (num_users+1) | train items
//! val   offsets (num_users+1) | val   items
//! test  offsets (num_users+1) | test  items
//! popularity (num_items)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{InteractionDataset, UserItemLists};

const MAGIC: &[u8; 8] = b"S2SR-DS1";

/// Human-readable companion to the binary dataset file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetSidecar {
    pub num_users: usize,
    pub num_items: usize,
    pub interactions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_ratios: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl DatasetSidecar {
    /// Sidecar path for a dataset file: the same name with `.json` appended.
    pub fn path_for(dataset_path: &Path) -> std::path::PathBuf {
        let mut name = dataset_path.as_os_str().to_owned();
        name.push(".json");
        name.into()
    }

    pub fn save(&self, dataset_path: &Path) -> Result<()> {
        let file = File::create(Self::path_for(dataset_path))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(dataset_path: &Path) -> Result<Self> {
        let file = File::open(Self::path_for(dataset_path))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_lists(w: &mut impl Write, lists: &UserItemLists) -> Result<()> {
    for &off in lists.offsets() {
        write_u64(w, off as u64)?;
    }
    for &item in lists.items() {
        write_u64(w, item as u64)?;
    }
    Ok(())
}

pub fn save_dataset(ds: &InteractionDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(MAGIC)?;
    write_u64(&mut w, ds.num_users() as u64)?;
    write_u64(&mut w, ds.num_items() as u64)?;
    write_lists(&mut w, ds.train_lists())?;
    write_lists(&mut w, ds.val_lists())?;
    write_lists(&mut w, ds.test_lists())?;
    for &count in ds.popularity() {
        write_u64(&mut w, count)?;
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u64(&mut self) -> Result<u64> {
        let mut buf = [0u8; 8];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Dataset(format!("truncated dataset file: {e}")))?;
        Ok(u64::from_le_bytes(buf))
    }

    fn lists(&mut self, num_users: usize, num_items: usize) -> Result<UserItemLists> {
        let mut offsets = Vec::with_capacity(num_users + 1);
        for _ in 0..=num_users {
            offsets.push(self.u64()? as usize);
        }
        let total = *offsets.last().unwrap();
        if offsets[0] != 0 || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Dataset("offsets are not monotone".into()));
        }
        let mut items = Vec::with_capacity(total);
        for _ in 0..total {
            let v = self.u64()?;
            if v >= num_items as u64 {
                return Err(Error::Dataset(format!("item id {v} out of range")));
            }
            items.push(v as u32);
        }
        let lists = UserItemLists::from_raw(offsets, items);
        for u in 0..num_users as u32 {
            if lists.row(u).windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Dataset(format!("row {u} is not sorted unique")));
            }
        }
        Ok(lists)
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<InteractionDataset> {
    let mut r = Reader {
        inner: BufReader::new(File::open(path.as_ref())?),
    };
    let mut magic = [0u8; 8];
    r.inner
        .read_exact(&mut magic)
        .map_err(|e| Error::Dataset(format!("truncated dataset file: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::Dataset("bad magic header".into()));
    }
    let num_users = r.u64()? as usize;
    let num_items = r.u64()? as usize;
    if num_users == 0 || num_users > u32::MAX as usize || num_items > u32::MAX as usize {
        return Err(Error::Dataset("implausible user/item counts".into()));
    }
    let train = r.lists(num_users, num_items)?;
    let val = r.lists(num_users, num_items)?;
    let test = r.lists(num_users, num_items)?;
    let mut popularity = Vec::with_capacity(num_items);
    for _ in 0..num_items {
        popularity.push(r.u64()?);
    }
    if popularity.iter().sum::<u64>() != train.total() as u64 {
        return Err(Error::Dataset(
            "popularity does not sum to the train total".into(),
        ));
    }
    for u in 0..num_users as u32 {
        for &v in val.row(u).iter().chain(test.row(u)) {
            if train.contains(u, v) {
                return Err(Error::Dataset(format!(
                    "item {v} of user {u} appears in both train and a holdout split"
                )));
            }
        }
    }
    Ok(InteractionDataset {
        num_users,
        num_items,
        train,
        val,
        test,
        popularity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_dataset, split_dataset, Interaction};

    fn sample_dataset() -> InteractionDataset {
        let mut ints = Vec::new();
        for u in 0..6 {
            for v in 0..(4 + u % 3) {
                ints.push(Interaction {
                    user: u,
                    item: (u + v * 3) % 11,
                    timestamp: None,
                });
            }
        }
        let ds = build_dataset(&ints, 1).unwrap();
        split_dataset(&ds, (0.8, 0.1, 0.1), 3).unwrap()
    }

    #[test]
    fn roundtrip_is_identical() {
        let ds = sample_dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.s2sr");
        save_dataset(&ds, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(ds, loaded);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.s2sr");
        std::fs::write(&path, b"NOTADATA________").unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Dataset(_))));
    }

    #[test]
    fn truncation_is_rejected() {
        let ds = sample_dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.s2sr");
        save_dataset(&ds, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Dataset(_))));
    }

    #[test]
    fn sidecar_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.s2sr");
        let side = DatasetSidecar {
            num_users: 5,
            num_items: 9,
            interactions: 31,
            split_ratios: Some([0.8, 0.1, 0.1]),
            split_seed: Some(42),
            config_hash: Some("abc123".into()),
        };
        side.save(&path).unwrap();
        assert_eq!(DatasetSidecar::load(&path).unwrap(), side);
    }
}
