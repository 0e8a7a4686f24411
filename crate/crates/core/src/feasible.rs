//! Explicit collections of feasible assortments and the transaction logs
//! they are mined from.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;

use crate::choice::Assortment;
use crate::error::{Error, Result};

/// An ordered, duplicate-free list of non-empty assortments over `n` items.
///
/// Members are stored in one flat sorted array with per-assortment offsets,
/// so collections over large item universes stay compact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibleCollection {
    item_count: usize,
    offsets: Vec<usize>,
    members: Vec<u32>,
}

impl FeasibleCollection {
    /// Builds a collection; duplicate items inside a set are merged and
    /// duplicate sets are dropped (first occurrence wins).
    pub fn new<I, S>(item_count: usize, sets: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = usize>,
    {
        let mut builder = CollectionBuilder::new(item_count);
        for set in sets {
            let items: Vec<usize> = set.into_iter().collect();
            builder.push(&items)?;
        }
        builder.finish()
    }

    pub fn from_assortments(item_count: usize, sets: &[Assortment]) -> Result<Self> {
        Self::new(
            item_count,
            sets.iter().map(|s| s.iter().collect::<Vec<_>>()),
        )
    }

    pub fn item_count(&self) -> usize {
        self.item_count
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sorted members of assortment `index`.
    pub fn members(&self, index: usize) -> &[u32] {
        &self.members[self.offsets[index]..self.offsets[index + 1]]
    }

    pub fn get(&self, index: usize) -> Assortment {
        Assortment::from_items(
            self.item_count,
            self.members(index).iter().map(|&i| i as usize),
        )
        .expect("members are in range by construction")
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.len()).map(move |i| self.members(i))
    }

    pub fn max_assortment_size(&self) -> usize {
        self.iter().map(<[u32]>::len).max().unwrap_or(0)
    }

    /// Total number of stored memberships.
    pub fn total_members(&self) -> usize {
        self.members.len()
    }

    /// Keeps the assortments at the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut builder = CollectionBuilder::new(self.item_count);
        for &i in indices {
            let items: Vec<usize> = self.members(i).iter().map(|&m| m as usize).collect();
            builder.push(&items)?;
        }
        builder.finish()
    }

    /// Reads the line-oriented collection format: one assortment per line as
    /// comma-separated item ids, `#` comments, and an optional `# items=<n>`
    /// line fixing the universe size (otherwise `max id + 1`).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut declared = None;
        let mut sets = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some(n) = meta.trim().strip_prefix("items=") {
                    let n = n
                        .trim()
                        .parse::<usize>()
                        .map_err(|e| Error::parse(path, lineno, format!("bad item count: {e}")))?;
                    declared = Some(n);
                }
                continue;
            }
            let mut items = Vec::new();
            for tok in line.split(',') {
                let tok = tok.trim();
                let id = tok
                    .parse::<usize>()
                    .map_err(|_| Error::parse(path, lineno, format!("bad item id `{tok}`")))?;
                items.push(id);
            }
            let before = items.len();
            items.sort_unstable();
            items.dedup();
            if items.len() != before {
                warn!("{}:{lineno}: repeated item ids merged", path.display());
            }
            sets.push((lineno, items));
        }
        let n = declared.unwrap_or_else(|| {
            sets.iter()
                .flat_map(|(_, s)| s.last().copied())
                .max()
                .map_or(0, |m| m + 1)
        });
        let mut builder = CollectionBuilder::new(n);
        for (lineno, items) in sets {
            if let Some(&bad) = items.iter().find(|&&i| i >= n) {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("item id {bad} is out of range for {n} items"),
                ));
            }
            builder.push(&items)?;
        }
        builder.finish()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<fs::File>| -> std::io::Result<()> {
            writeln!(out, "# assort-collection v1")?;
            writeln!(out, "# items={}", self.item_count)?;
            for set in self.iter() {
                let mut first = true;
                for i in set {
                    if !first {
                        out.write_all(b",")?;
                    }
                    write!(out, "{i}")?;
                    first = false;
                }
                out.write_all(b"\n")?;
            }
            out.flush()
        };
        write(&mut out).map_err(|e| Error::io(path, e))
    }
}

struct CollectionBuilder {
    item_count: usize,
    offsets: Vec<usize>,
    members: Vec<u32>,
    seen: HashSet<Vec<u32>>,
    duplicates: usize,
}

impl CollectionBuilder {
    fn new(item_count: usize) -> Self {
        CollectionBuilder {
            item_count,
            offsets: vec![0],
            members: Vec::new(),
            seen: HashSet::new(),
            duplicates: 0,
        }
    }

    fn push(&mut self, items: &[usize]) -> Result<()> {
        let mut set: Vec<u32> = Vec::with_capacity(items.len());
        for &i in items {
            if i >= self.item_count {
                return Err(Error::ItemOutOfRange {
                    item: i,
                    n: self.item_count,
                });
            }
            set.push(i as u32);
        }
        set.sort_unstable();
        set.dedup();
        if set.is_empty() {
            return Err(Error::InvalidParameter(
                "feasible assortments must be non-empty".into(),
            ));
        }
        if self.seen.contains(&set) {
            self.duplicates += 1;
            return Ok(());
        }
        self.members.extend_from_slice(&set);
        self.offsets.push(self.members.len());
        self.seen.insert(set);
        Ok(())
    }

    fn finish(self) -> Result<FeasibleCollection> {
        if self.offsets.len() == 1 {
            return Err(Error::EmptyCollection);
        }
        if self.duplicates > 0 {
            log::debug!("dropped {} duplicate assortments", self.duplicates);
        }
        Ok(FeasibleCollection {
            item_count: self.item_count,
            offsets: self.offsets,
            members: self.members,
        })
    }
}

/// Dense index space for raw item ids found in a transaction log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemMap {
    raw: Vec<u64>,
}

impl ItemMap {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw_id(&self, dense: usize) -> u64 {
        self.raw[dense]
    }

    pub fn dense_id(&self, raw: u64) -> Option<usize> {
        self.raw.binary_search(&raw).ok()
    }

    /// One raw id per line; line `k` holds the raw id of dense item `k`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::with_capacity(self.raw.len() * 8);
        for id in &self.raw {
            text.push_str(&id.to_string());
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut raw = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            raw.push(
                line.parse::<u64>()
                    .map_err(|e| Error::parse(path, lineno + 1, format!("bad raw id: {e}")))?,
            );
        }
        if raw.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::parse(path, 0, "raw ids must be strictly increasing"));
        }
        Ok(ItemMap { raw })
    }
}

/// Transaction records `I_1, .., I_D` over dense item indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionLog {
    transactions: Vec<Vec<u32>>,
    items: ItemMap,
}

impl TransactionLog {
    /// Maps raw ids to `0..n` in increasing raw-id order; empty transactions
    /// are dropped.
    pub fn from_raw<I, T>(transactions: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: IntoIterator<Item = u64>,
    {
        let raw_tx: Vec<Vec<u64>> = transactions
            .into_iter()
            .map(|t| {
                let mut t: Vec<u64> = t.into_iter().collect();
                t.sort_unstable();
                t.dedup();
                t
            })
            .filter(|t| !t.is_empty())
            .collect();
        if raw_tx.is_empty() {
            return Err(Error::InvalidParameter(
                "transaction log has no non-empty records".into(),
            ));
        }
        let mut raw: Vec<u64> = raw_tx.iter().flatten().copied().collect();
        raw.sort_unstable();
        raw.dedup();
        let items = ItemMap { raw };
        let transactions = raw_tx
            .into_iter()
            .map(|t| {
                t.into_iter()
                    .map(|id| items.dense_id(id).expect("id was collected") as u32)
                    .collect()
            })
            .collect();
        Ok(TransactionLog {
            transactions,
            items,
        })
    }

    /// One transaction per line, comma-separated raw item ids.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tx = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut t = Vec::new();
            for tok in line.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                t.push(
                    tok.parse::<u64>().map_err(|_| {
                        Error::parse(path, lineno + 1, format!("bad item id `{tok}`"))
                    })?,
                );
            }
            tx.push(t);
        }
        Self::from_raw(tx)
    }

    pub fn record_count(&self) -> usize {
        self.transactions.len()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn items(&self) -> &ItemMap {
        &self.items
    }

    pub fn transactions(&self) -> &[Vec<u32>] {
        &self.transactions
    }
}

fn contains_all(transaction: &[u32], itemset: &[u32]) -> bool {
    itemset.iter().all(|i| transaction.binary_search(i).is_ok())
}

/// Fraction of transactions that contain every item of `itemset`.
pub fn support(log: &TransactionLog, itemset: &Assortment) -> f64 {
    let members = itemset.members();
    let hits = log
        .transactions
        .iter()
        .filter(|t| contains_all(t, &members))
        .count();
    hits as f64 / log.record_count() as f64
}

/// Smallest transaction count `c` with `c / D >= t`.
fn min_count(t: f64, records: usize) -> usize {
    let d = records as f64;
    let mut c = ((t * d).ceil() as usize).saturating_sub(1);
    while (c as f64) / d < t {
        c += 1;
    }
    c.max(1)
}

/// All itemsets with `support >= min_support` and at least `min_cardinality`
/// items, mined with FP-growth.
///
/// The result is ordered by size, then lexicographically.
pub fn mine_frequent_itemsets(
    log: &TransactionLog,
    min_support: f64,
    min_cardinality: usize,
) -> Result<FeasibleCollection> {
    if !(min_support > 0.0 && min_support <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "minimum support must lie in (0, 1], got {min_support}"
        )));
    }
    let threshold = min_count(min_support, log.record_count());
    let paths: Vec<(Vec<u32>, usize)> = log.transactions.iter().map(|t| (t.clone(), 1)).collect();
    let mut found = Vec::new();
    let mut suffix = Vec::new();
    fp_growth(&paths, threshold, &mut suffix, &mut found);

    let mut sets: Vec<Vec<u32>> = found
        .into_iter()
        .filter(|s| s.len() >= min_cardinality.max(1))
        .map(|mut s| {
            s.sort_unstable();
            s
        })
        .collect();
    sets.sort_unstable_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    FeasibleCollection::new(
        log.item_count(),
        sets.into_iter().map(|s| s.into_iter().map(|i| i as usize)),
    )
}

/// Prefix tree over weighted item paths.
struct FpTree {
    // node 0 is the root
    item: Vec<u32>,
    count: Vec<usize>,
    parent: Vec<usize>,
    children: Vec<HashMap<u32, usize>>,
    // item -> nodes carrying it, in insertion order
    header: BTreeMap<u32, Vec<usize>>,
    // frequent items, least frequent first
    order: Vec<(u32, usize)>,
}

impl FpTree {
    fn build(paths: &[(Vec<u32>, usize)], threshold: usize) -> Self {
        let mut freq: HashMap<u32, usize> = HashMap::new();
        for (path, c) in paths {
            for &i in path {
                *freq.entry(i).or_default() += c;
            }
        }
        let mut rank: Vec<(u32, usize)> =
            freq.into_iter().filter(|&(_, c)| c >= threshold).collect();
        // most frequent first; ties by item id
        rank.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let position: HashMap<u32, usize> =
            rank.iter().enumerate().map(|(k, &(i, _))| (i, k)).collect();

        let mut tree = FpTree {
            item: vec![u32::MAX],
            count: vec![0],
            parent: vec![0],
            children: vec![HashMap::new()],
            header: BTreeMap::new(),
            order: rank.iter().rev().copied().collect(),
        };
        let mut ordered = Vec::new();
        for (path, c) in paths {
            ordered.clear();
            ordered.extend(path.iter().copied().filter(|i| position.contains_key(i)));
            ordered.sort_unstable_by_key(|i| position[i]);
            let mut node = 0;
            for &i in &ordered {
                node = match tree.children[node].get(&i) {
                    Some(&child) => child,
                    None => {
                        let id = tree.item.len();
                        tree.item.push(i);
                        tree.count.push(0);
                        tree.parent.push(node);
                        tree.children.push(HashMap::new());
                        tree.children[node].insert(i, id);
                        tree.header.entry(i).or_default().push(id);
                        id
                    }
                };
                tree.count[node] += c;
            }
        }
        tree
    }

    fn prefix_path(&self, mut node: usize) -> Vec<u32> {
        let mut path = Vec::new();
        node = self.parent[node];
        while node != 0 {
            path.push(self.item[node]);
            node = self.parent[node];
        }
        path
    }
}

fn fp_growth(
    paths: &[(Vec<u32>, usize)],
    threshold: usize,
    suffix: &mut Vec<u32>,
    found: &mut Vec<Vec<u32>>,
) {
    let tree = FpTree::build(paths, threshold);
    for &(item, total) in &tree.order {
        debug_assert!(total >= threshold);
        suffix.push(item);
        found.push(suffix.clone());
        let base: Vec<(Vec<u32>, usize)> = tree.header[&item]
            .iter()
            .map(|&node| (tree.prefix_path(node), tree.count[node]))
            .filter(|(p, _)| !p.is_empty())
            .collect();
        if !base.is_empty() {
            fp_growth(&base, threshold, suffix, found);
        }
        suffix.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn log(tx: &[&[u64]]) -> TransactionLog {
        TransactionLog::from_raw(tx.iter().map(|t| t.to_vec())).unwrap()
    }

    fn raw_sets(log: &TransactionLog, c: &FeasibleCollection) -> Vec<Vec<u64>> {
        c.iter()
            .map(|s| s.iter().map(|&i| log.items().raw_id(i as usize)).collect())
            .collect()
    }

    #[test]
    fn support_examples() {
        let l = log(&[&[1, 2], &[1], &[1, 2, 3]]);
        let n = l.item_count();
        let j = Assortment::from_items(
            n,
            [
                l.items().dense_id(1).unwrap(),
                l.items().dense_id(2).unwrap(),
            ],
        )
        .unwrap();
        assert!((support(&l, &j) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(support(&l, &Assortment::empty(n)), 1.0);

        let l = log(&[&[1, 2], &[1], &[4]]);
        // item 4 co-occurs with nothing else
        let j = Assortment::from_items(l.item_count(), [0, 2]).unwrap();
        assert_eq!(support(&l, &j), 0.0);
    }

    #[test]
    fn mining_examples() {
        let l = log(&[&[1, 2], &[1, 2], &[2, 3]]);
        let c = mine_frequent_itemsets(&l, 0.6, 1).unwrap();
        assert_eq!(raw_sets(&l, &c), vec![vec![1], vec![2], vec![1, 2]]);

        let l = log(&[&[1, 2], &[1, 2], &[1, 2]]);
        let c = mine_frequent_itemsets(&l, 1.0, 1).unwrap();
        assert_eq!(raw_sets(&l, &c), vec![vec![1], vec![2], vec![1, 2]]);

        assert!(matches!(
            mine_frequent_itemsets(&l, 1.0, 3),
            Err(Error::EmptyCollection)
        ));
        assert!(mine_frequent_itemsets(&l, 0.0, 1).is_err());
        assert!(mine_frequent_itemsets(&l, 1.5, 1).is_err());
    }

    #[test]
    fn min_count_matches_ratio_definition() {
        for d in 1..60 {
            for k in 1..=100 {
                let t = k as f64 / 100.0;
                let c = min_count(t, d);
                assert!(c as f64 / d as f64 >= t);
                assert!(c == 1 || ((c - 1) as f64 / d as f64) < t);
            }
        }
    }

    #[test]
    fn empty_transactions_are_dropped() {
        let l = TransactionLog::from_raw(vec![vec![], vec![5u64, 5, 7], vec![]]).unwrap();
        assert_eq!(l.record_count(), 1);
        assert_eq!(l.item_count(), 2);
        assert!(TransactionLog::from_raw(vec![Vec::<u64>::new()]).is_err());
    }

    #[test]
    fn collection_dedup_and_validation() {
        let c = FeasibleCollection::new(4, vec![vec![3, 1, 3], vec![1, 3], vec![0]]).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.members(0), &[1, 3]);
        assert!(FeasibleCollection::new(4, vec![vec![4]]).is_err());
        assert!(FeasibleCollection::new(4, vec![Vec::<usize>::new()]).is_err());
        assert!(matches!(
            FeasibleCollection::new(4, Vec::<Vec<usize>>::new()),
            Err(Error::EmptyCollection)
        ));
    }

    #[test]
    fn collection_file_handling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        fs::write(&path, "").unwrap();
        assert!(matches!(
            FeasibleCollection::load(&path),
            Err(Error::EmptyCollection)
        ));

        fs::write(&path, "3,1,3\n1, 3\n0\n").unwrap();
        let c = FeasibleCollection::load(&path).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.members(0), &[1, 3]);
        assert_eq!(c.item_count(), 4);

        fs::write(&path, "# items=3\n0,x\n").unwrap();
        assert!(matches!(
            FeasibleCollection::load(&path),
            Err(Error::Parse { line: 2, .. })
        ));
        fs::write(&path, "# items=3\n0,3\n").unwrap();
        assert!(matches!(
            FeasibleCollection::load(&path),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn item_map_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("items.txt");
        let l = log(&[&[40, 2], &[7]]);
        l.items().save(&path).unwrap();
        let m = ItemMap::load(&path).unwrap();
        assert_eq!(&m, l.items());
        assert_eq!(m.raw_id(0), 2);
        assert_eq!(m.dense_id(40), Some(2));
    }

    fn brute_force(log: &TransactionLog, t: f64, min_card: usize) -> Vec<Vec<u32>> {
        let n = log.item_count();
        let mut out = Vec::new();
        for mask in 1u32..(1 << n) {
            let set: Vec<u32> = (0..n as u32).filter(|i| mask >> i & 1 == 1).collect();
            if set.len() < min_card {
                continue;
            }
            let hits = log
                .transactions()
                .iter()
                .filter(|tx| contains_all(tx, &set))
                .count();
            if hits as f64 / log.record_count() as f64 >= t {
                out.push(set);
            }
        }
        out.sort();
        out
    }

    fn arb_log() -> impl Strategy<Value = TransactionLog> {
        (2u64..=12, 1usize..=48).prop_flat_map(|(items, records)| {
            prop::collection::vec(prop::collection::vec(0..items, 0..=6), records)
                .prop_filter_map("all transactions empty", |tx| {
                    TransactionLog::from_raw(tx).ok()
                })
        })
    }

    proptest! {
        #[test]
        fn miner_matches_enumeration(l in arb_log(), t in 0.02f64..=1.0, min_card in 0usize..3) {
            let expected = brute_force(&l, t, min_card.max(1));
            match mine_frequent_itemsets(&l, t, min_card) {
                Ok(c) => {
                    let mut got: Vec<Vec<u32>> = c.iter().map(<[u32]>::to_vec).collect();
                    got.sort();
                    prop_assert_eq!(got, expected);
                }
                Err(Error::EmptyCollection) => prop_assert!(expected.is_empty()),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }

        #[test]
        fn mined_sets_are_downward_closed(l in arb_log(), t in 0.05f64..=1.0) {
            if let Ok(c) = mine_frequent_itemsets(&l, t, 0) {
                let all: HashSet<Vec<u32>> = c.iter().map(<[u32]>::to_vec).collect();
                for s in c.iter() {
                    for drop in 0..s.len() {
                        let mut sub = s.to_vec();
                        sub.remove(drop);
                        prop_assert!(sub.is_empty() || all.contains(&sub));
                    }
                }
            }
        }

        #[test]
        fn support_is_antitone(l in arb_log(), a in 0u32..4096, b in 0u32..4096) {
            let n = l.item_count();
            let small: Vec<usize> = (0..n).filter(|i| a >> i & 1 == 1).collect();
            let large: Vec<usize> = (0..n).filter(|i| (a | b) >> i & 1 == 1).collect();
            let small = Assortment::from_items(n, small).unwrap();
            let large = Assortment::from_items(n, large).unwrap();
            prop_assert!(support(&l, &small) >= support(&l, &large));
        }

        #[test]
        fn save_load_round_trip(n in 1usize..40, sets in prop::collection::vec(prop::collection::vec(0usize..40, 1..8), 1..30)) {
            let sets: Vec<Vec<usize>> = sets.into_iter().map(|s| s.into_iter().map(|i| i % n).collect()).collect();
            let c = FeasibleCollection::new(n, sets).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.txt");
            c.save(&path).unwrap();
            prop_assert_eq!(FeasibleCollection::load(&path).unwrap(), c);
        }
    }
}
