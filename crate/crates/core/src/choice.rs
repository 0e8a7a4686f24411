//! The multinomial logit model: problem instances, assortments and revenue.
//!
//! Under MNL an item `l` shown in assortment `S` is bought with probability
//! `v_l / (v_0 + sum_{l' in S} v_l')`, so the expected revenue of `S` is
//! `sum_{l in S} p_l v_l / (v_0 + sum_{l in S} v_l)`.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};

/// Economic data of one assortment problem.
///
/// Items are 0-indexed and need not be sorted by price; the maximum price is
/// tracked explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct MnlInstance {
    prices: Vec<f64>,
    utilities: Vec<f64>,
    no_purchase: f64,
    max_price: f64,
    price_scale: f64,
}

impl MnlInstance {
    pub fn new(prices: Vec<f64>, utilities: Vec<f64>, no_purchase: f64) -> Result<Self> {
        if prices.is_empty() {
            return Err(Error::InvalidInstance("instance has no items".into()));
        }
        if prices.len() != utilities.len() {
            return Err(Error::InvalidInstance(format!(
                "{} prices but {} utilities",
                prices.len(),
                utilities.len()
            )));
        }
        if let Some((i, p)) = prices
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidInstance(format!(
                "price of item {i} must be finite and non-negative, got {p}"
            )));
        }
        if let Some((i, v)) = utilities
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidInstance(format!(
                "utility of item {i} must lie in [0, 1], got {v}"
            )));
        }
        if !no_purchase.is_finite() || no_purchase < 0.0 {
            return Err(Error::InvalidInstance(format!(
                "no-purchase utility must be finite and non-negative, got {no_purchase}"
            )));
        }
        if no_purchase == 0.0 && utilities.iter().all(|&v| v == 0.0) {
            return Err(Error::Degenerate(
                "no-purchase utility and every item utility are zero".into(),
            ));
        }
        let max_price = prices.iter().copied().fold(0.0, f64::max);
        Ok(MnlInstance {
            prices,
            utilities,
            no_purchase,
            max_price,
            price_scale: 1.0,
        })
    }

    /// Sets `v_0` so that the no-purchase option has probability `q` when
    /// every item is displayed: `v_0 = q / (1 - q) * sum_i v_i`.
    pub fn with_no_purchase_probability(mut self, q: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::InvalidParameter(format!(
                "no-purchase probability must lie in [0, 1), got {q}"
            )));
        }
        let total: f64 = self.utilities.iter().sum();
        let v0 = q / (1.0 - q) * total;
        if v0 == 0.0 && total == 0.0 {
            return Err(Error::Degenerate(
                "no-purchase utility and every item utility are zero".into(),
            ));
        }
        self.no_purchase = v0;
        Ok(self)
    }

    pub fn item_count(&self) -> usize {
        self.prices.len()
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    pub fn no_purchase_utility(&self) -> f64 {
        self.no_purchase
    }

    pub fn max_price(&self) -> f64 {
        self.max_price
    }

    /// Factor that converts revenues of this instance back to the units of
    /// the instance it was normalized from (1 for an instance that was never
    /// normalized).
    pub fn price_scale(&self) -> f64 {
        self.price_scale
    }

    /// Index of the most expensive item, lowest index on ties.
    pub fn highest_priced_item(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.prices.iter().enumerate() {
            if p > self.prices[best] {
                best = i;
            }
        }
        best
    }

    /// Divides every price by the maximum price.
    ///
    /// Returns the normalized instance together with the scale (the original
    /// maximum price). `scale * R_normalized(S) == R_original(S)` for every `S`.
    pub fn normalize(&self) -> Result<(MnlInstance, f64)> {
        if self.max_price <= 0.0 {
            return Err(Error::Degenerate("every price is zero".into()));
        }
        let scale = self.max_price;
        let prices = if scale == 1.0 {
            self.prices.clone()
        } else {
            self.prices.iter().map(|p| p / scale).collect()
        };
        let max_price = prices.iter().copied().fold(0.0, f64::max);
        Ok((
            MnlInstance {
                prices,
                utilities: self.utilities.clone(),
                no_purchase: self.no_purchase,
                max_price,
                price_scale: self.price_scale * scale,
            },
            scale,
        ))
    }

    /// Expected revenue of the assortment given by a list of member indices.
    ///
    /// Members are assumed distinct and in range; see [`expected_revenue`] for
    /// the checked entry point.
    pub fn revenue_of(&self, members: &[u32]) -> f64 {
        let mut numerator = 0.0;
        let mut weight = self.no_purchase;
        for &i in members {
            let i = i as usize;
            numerator += self.prices[i] * self.utilities[i];
            weight += self.utilities[i];
        }
        if numerator == 0.0 {
            0.0
        } else {
            numerator / weight
        }
    }

    /// Comparison objective `sum_{i in S} v_i (p_i - K)`.
    pub fn threshold_value(&self, members: &[u32], threshold: f64) -> f64 {
        members
            .iter()
            .map(|&i| {
                let i = i as usize;
                self.utilities[i] * (self.prices[i] - threshold)
            })
            .sum()
    }

    /// Loads an instance file (see the crate README for the schema).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_instance(path, &text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{INSTANCE_MAGIC}")?;
        writeln!(out, "# no_purchase_utility={}", self.no_purchase)?;
        writeln!(out, "item_id,price,utility")?;
        for (i, (p, v)) in self.prices.iter().zip(&self.utilities).enumerate() {
            writeln!(out, "{i},{p},{v}")?;
        }
        Ok(())
    }
}

const INSTANCE_MAGIC: &str = "# assort-instance v1";

fn parse_instance(path: &Path, text: &str) -> Result<MnlInstance> {
    let mut no_purchase = None;
    let mut header_seen = false;
    let mut rows: Vec<Option<(f64, f64)>> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let meta = meta.trim();
            if let Some(value) = meta.strip_prefix("no_purchase_utility=") {
                let v0 = value.trim().parse::<f64>().map_err(|e| {
                    Error::parse(path, lineno, format!("bad no_purchase_utility: {e}"))
                })?;
                no_purchase = Some(v0);
            }
            continue;
        }
        if !header_seen {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["item_id", "price", "utility"] {
                return Err(Error::parse(
                    path,
                    lineno,
                    "expected header `item_id,price,utility`",
                ));
            }
            header_seen = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(Error::parse(path, lineno, "expected three columns"));
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|e| Error::parse(path, lineno, format!("bad item_id: {e}")))?;
        let price: f64 = cols[1]
            .parse()
            .map_err(|e| Error::parse(path, lineno, format!("bad price: {e}")))?;
        let utility: f64 = cols[2]
            .parse()
            .map_err(|e| Error::parse(path, lineno, format!("bad utility: {e}")))?;
        if id >= rows.len() {
            rows.resize(id + 1, None);
        }
        if rows[id].replace((price, utility)).is_some() {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate item_id {id}"),
            ));
        }
    }
    let no_purchase = no_purchase
        .ok_or_else(|| Error::parse(path, 0, "missing `# no_purchase_utility=` metadata line"))?;
    if !header_seen {
        return Err(Error::parse(path, 0, "missing header line"));
    }
    let mut prices = Vec::with_capacity(rows.len());
    let mut utilities = Vec::with_capacity(rows.len());
    for (id, row) in rows.into_iter().enumerate() {
        let (p, v) =
            row.ok_or_else(|| Error::parse(path, 0, format!("item_id {id} is missing")))?;
        prices.push(p);
        utilities.push(v);
    }
    MnlInstance::new(prices, utilities, no_purchase)
}

/// A subset of the item universe `{0, .., n-1}`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assortment {
    bits: FixedBitSet,
}

impl Assortment {
    pub fn empty(item_count: usize) -> Self {
        Assortment {
            bits: FixedBitSet::with_capacity(item_count),
        }
    }

    /// Builds an assortment from item indices; repeated indices are merged.
    pub fn from_items<I>(item_count: usize, items: I) -> Result<Self>
    where
        I: IntoIterator<Item = usize>,
    {
        let mut bits = FixedBitSet::with_capacity(item_count);
        for item in items {
            if item >= item_count {
                return Err(Error::ItemOutOfRange {
                    item,
                    n: item_count,
                });
            }
            bits.insert(item);
        }
        Ok(Assortment { bits })
    }

    pub fn item_count(&self) -> usize {
        self.bits.len()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.bits.contains(item)
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.ones()
    }

    /// Sorted member indices.
    pub fn members(&self) -> Vec<u32> {
        self.bits.ones().map(|i| i as u32).collect()
    }

    /// Indicator vector `u^S`.
    pub fn indicator(&self) -> Vec<f64> {
        (0..self.item_count())
            .map(|i| if self.contains(i) { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn is_subset(&self, other: &Assortment) -> bool {
        self.bits.is_subset(&other.bits)
    }
}

impl fmt::Debug for Assortment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for Assortment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for i in self.iter() {
            if !first {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
            first = false;
        }
        Ok(())
    }
}

fn check_universe(instance: &MnlInstance, s: &Assortment) -> Result<()> {
    if s.item_count() > instance.item_count() {
        if let Some(item) = s.iter().find(|&i| i >= instance.item_count()) {
            return Err(Error::ItemOutOfRange {
                item,
                n: instance.item_count(),
            });
        }
    }
    Ok(())
}

/// `R(S)`; zero for the empty assortment.
pub fn expected_revenue(instance: &MnlInstance, s: &Assortment) -> Result<f64> {
    check_universe(instance, s)?;
    Ok(instance.revenue_of(&s.members()))
}

/// `P(item | S)`.
pub fn choice_probability(instance: &MnlInstance, s: &Assortment, item: usize) -> Result<f64> {
    check_universe(instance, s)?;
    if !s.contains(item) {
        return Err(Error::NotInAssortment { item });
    }
    let weight: f64 =
        instance.no_purchase_utility() + s.iter().map(|i| instance.utilities()[i]).sum::<f64>();
    if weight == 0.0 {
        // every member has zero utility and v_0 = 0; split evenly
        return Ok(1.0 / s.len() as f64);
    }
    Ok(instance.utilities()[item] / weight)
}

/// Probability that a customer shown `S` buys nothing.
pub fn no_purchase_probability(instance: &MnlInstance, s: &Assortment) -> Result<f64> {
    check_universe(instance, s)?;
    let weight: f64 =
        instance.no_purchase_utility() + s.iter().map(|i| instance.utilities()[i]).sum::<f64>();
    if weight == 0.0 {
        return Ok(if s.is_empty() { 1.0 } else { 0.0 });
    }
    Ok(instance.no_purchase_utility() / weight)
}
