//! Beaver multiplication triples and the trusted dealer that produces them.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::field::{Fp, MODULUS};
use crate::sharing::Party;

use super::MpcError;

/// One party's share of a multiplication triple `(a, b, c = a*b)`.
///
/// Deliberately not `Clone`: a triple share is consumed by exactly one
/// multiplication.
#[derive(Debug, PartialEq, Eq)]
pub struct BeaverTriple<const P: u64 = MODULUS> {
    pub id: u64,
    pub a: Fp<P>,
    pub b: Fp<P>,
    pub c: Fp<P>,
}

impl<const P: u64> BeaverTriple<P> {
    pub fn from_parts(id: u64, a: Fp<P>, b: Fp<P>, c: Fp<P>) -> Self {
        BeaverTriple { id, a, b, c }
    }
}

/// A party's queue of unused triples, in dealing order.
#[derive(Debug)]
pub struct TripleStore<const P: u64 = MODULUS> {
    store_id: u64,
    party: Party,
    triples: VecDeque<BeaverTriple<P>>,
}

impl<const P: u64> TripleStore<P> {
    pub fn new(store_id: u64, party: Party, triples: Vec<BeaverTriple<P>>) -> Self {
        TripleStore { store_id, party, triples: triples.into() }
    }

    pub fn empty(party: Party) -> Self {
        TripleStore::new(0, party, Vec::new())
    }

    /// Identifies one dealing; both parties' stores carry the same id.
    pub fn store_id(&self) -> u64 {
        self.store_id
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn remaining(&self) -> usize {
        self.triples.len()
    }

    /// Id of the next triple to be handed out, or `None` when exhausted.
    pub fn cursor(&self) -> Option<u64> {
        self.triples.front().map(|t| t.id)
    }

    pub fn next_triple(&mut self) -> Result<BeaverTriple<P>, MpcError> {
        self.triples
            .pop_front()
            .ok_or(MpcError::InsufficientTriples { needed: 1, available: 0 })
    }

    pub fn take(&mut self, n: usize) -> Result<Vec<BeaverTriple<P>>, MpcError> {
        if n > self.triples.len() {
            return Err(MpcError::InsufficientTriples { needed: n, available: self.triples.len() });
        }
        Ok(self.triples.drain(..n).collect())
    }

    /// Appends freshly dealt triples from the same dealing.
    pub fn extend(&mut self, more: TripleStore<P>) {
        self.triples.extend(more.triples);
    }
}

/// Trusted-dealer preprocessing: `count` triples shared between the parties,
/// ids `first_id..first_id + count`.
pub fn deal_triples<const P: u64, R: Rng + ?Sized>(
    store_id: u64,
    first_id: u64,
    count: usize,
    rng: &mut R,
) -> (TripleStore<P>, TripleStore<P>) {
    let mut deployer = Vec::with_capacity(count);
    let mut ttp = Vec::with_capacity(count);
    for i in 0..count as u64 {
        let a = Fp::<P>::random(rng);
        let b = Fp::<P>::random(rng);
        let c = a * b;
        let (a0, b0, c0) = (Fp::random(rng), Fp::random(rng), Fp::random(rng));
        deployer.push(BeaverTriple { id: first_id + i, a: a0, b: b0, c: c0 });
        ttp.push(BeaverTriple { id: first_id + i, a: a - a0, b: b - b0, c: c - c0 });
    }
    (
        TripleStore::new(store_id, Party::Deployer, deployer),
        TripleStore::new(store_id, Party::Ttp, ttp),
    )
}

#[derive(Serialize, Deserialize)]
struct StoreHeader {
    store_id: String,
    party: Party,
    count: String,
}

#[derive(Serialize, Deserialize)]
struct TripleLine {
    id: String,
    a: Fp<MODULUS>,
    b: Fp<MODULUS>,
    c: Fp<MODULUS>,
}

impl TripleStore<MODULUS> {
    /// Header line `{"store_id","party","count"}`, then one
    /// `{"id","a","b","c"}` object per line, all numbers as decimal strings.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), MpcError> {
        let mut out = BufWriter::new(File::create(path)?);
        let header = StoreHeader {
            store_id: self.store_id.to_string(),
            party: self.party,
            count: self.triples.len().to_string(),
        };
        serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        for t in &self.triples {
            let line = TripleLine { id: t.id.to_string(), a: t.a, b: t.b, c: t.c };
            serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, MpcError> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let bad = |what: String| MpcError::TripleFile(what);
        let header_line = lines.next().ok_or_else(|| bad("missing header".into()))??;
        let header: StoreHeader =
            serde_json::from_str(&header_line).map_err(|e| bad(format!("header: {e}")))?;
        let store_id = header.store_id.parse().map_err(|_| bad("store_id".into()))?;
        let count: usize = header.count.parse().map_err(|_| bad("count".into()))?;
        let mut triples = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: TripleLine =
                serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", i + 2)))?;
            let id = t.id.parse().map_err(|_| bad(format!("line {}: id", i + 2)))?;
            triples.push(BeaverTriple { id, a: t.a, b: t.b, c: t.c });
        }
        if triples.len() != count {
            return Err(bad(format!("header says {count} triples, file has {}", triples.len())));
        }
        Ok(TripleStore::new(store_id, header.party, triples))
    }
}
