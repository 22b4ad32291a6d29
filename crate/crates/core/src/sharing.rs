//! Two-party additive sharing of attribute code vectors.
//!
//! For a code `g` and a uniform mask `r`, the deployer receives `g + r` and
//! the trusted third party receives `-r`. Neither share alone carries any
//! information about `g`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::AttributeCodes;
use crate::field::{Fp, MODULUS};

#[derive(Debug, thiserror::Error)]
pub enum ShareError {
    #[error("linkage mismatch: {0:?} vs {1:?}")]
    LinkageMismatch(String, String),
    #[error("both shares belong to the same party")]
    SameParty,
    #[error("share vectors differ in length ({0} vs {1})")]
    Arity(usize, usize),
    #[error("reconstructed value {0} is not an attribute code")]
    NotACode(u64),
    #[error("linkage id {0:?} appears more than once in the store")]
    DuplicateLinkage(String),
    #[error("share store line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("share store io: {0}")]
    Io(#[from] std::io::Error),
}

/// The two protocol parties. The deployer is party 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Deployer,
    Ttp,
}

impl Party {
    pub fn index(self) -> usize {
        match self {
            Party::Deployer => 0,
            Party::Ttp => 1,
        }
    }

    pub fn other(self) -> Party {
        match self {
            Party::Deployer => Party::Ttp,
            Party::Ttp => Party::Deployer,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Party::Deployer => "deployer",
            Party::Ttp => "ttp",
        }
    }
}

/// One party's share of a candidate's attribute code vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeShare<const P: u64 = MODULUS> {
    pub linkage_id: String,
    pub party: Party,
    pub shares: Vec<Fp<P>>,
}

/// Splits `codes` into a deployer share and a TTP share.
///
/// The mask is drawn fresh per dimension and dropped on return; the caller
/// keeps only the two shares.
pub fn split<const P: u64, R: Rng + ?Sized>(
    linkage_id: &str,
    codes: &AttributeCodes,
    rng: &mut R,
) -> (AttributeShare<P>, AttributeShare<P>) {
    let masks: Vec<Fp<P>> = codes.as_slice().iter().map(|_| Fp::random(rng)).collect();
    split_with_masks(linkage_id, codes, &masks)
}

/// [`split`] with caller-chosen masks. Deterministic; for tests and traces.
pub fn split_with_masks<const P: u64>(
    linkage_id: &str,
    codes: &AttributeCodes,
    masks: &[Fp<P>],
) -> (AttributeShare<P>, AttributeShare<P>) {
    assert_eq!(codes.len(), masks.len(), "one mask per dimension");
    let (deployer, ttp) = codes
        .as_slice()
        .iter()
        .zip(masks)
        .map(|(&code, &mask)| {
            debug_assert!((code as u64) < P);
            (Fp::new(code as u64) + mask, -mask)
        })
        .unzip();
    (
        AttributeShare { linkage_id: linkage_id.to_string(), party: Party::Deployer, shares: deployer },
        AttributeShare { linkage_id: linkage_id.to_string(), party: Party::Ttp, shares: ttp },
    )
}

/// Dimension-wise sum of the two shares.
///
/// Only the clear oracle and tests call this; no protocol party ever holds
/// both shares.
pub fn reconstruct<const P: u64>(
    a: &AttributeShare<P>,
    b: &AttributeShare<P>,
) -> Result<AttributeCodes, ShareError> {
    if a.linkage_id != b.linkage_id {
        return Err(ShareError::LinkageMismatch(a.linkage_id.clone(), b.linkage_id.clone()));
    }
    if a.party == b.party {
        return Err(ShareError::SameParty);
    }
    if a.shares.len() != b.shares.len() {
        return Err(ShareError::Arity(a.shares.len(), b.shares.len()));
    }
    let codes = a
        .shares
        .iter()
        .zip(&b.shares)
        .map(|(&x, &y)| {
            let v = (x + y).value();
            u32::try_from(v).map_err(|_| ShareError::NotACode(v))
        })
        .collect::<Result<_, _>>()?;
    Ok(AttributeCodes(codes))
}

#[derive(Serialize, Deserialize)]
struct ShareLine {
    linkage_id: String,
    shares: Vec<Fp<MODULUS>>,
}

/// All shares one party holds, indexed by linkage id.
#[derive(Debug, Clone)]
pub struct ShareStore {
    party: Party,
    shares: Vec<AttributeShare>,
    index: HashMap<String, usize>,
}

impl ShareStore {
    pub fn new(party: Party, shares: Vec<AttributeShare>) -> Result<Self, ShareError> {
        let mut index = HashMap::with_capacity(shares.len());
        for (i, s) in shares.iter().enumerate() {
            if index.insert(s.linkage_id.clone(), i).is_some() {
                return Err(ShareError::DuplicateLinkage(s.linkage_id.clone()));
            }
        }
        Ok(ShareStore { party, shares, index })
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn get(&self, linkage_id: &str) -> Option<&AttributeShare> {
        self.index.get(linkage_id).map(|&i| &self.shares[i])
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AttributeShare> {
        self.shares.iter()
    }

    /// One JSON object per line: `{"linkage_id": ..., "shares": ["<decimal>", ...]}`.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), ShareError> {
        let mut out = BufWriter::new(File::create(path)?);
        for s in &self.shares {
            let line = ShareLine { linkage_id: s.linkage_id.clone(), shares: s.shares.clone() };
            serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path, party: Party) -> Result<Self, ShareError> {
        let reader = BufReader::new(File::open(path)?);
        let mut shares = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ShareLine =
                serde_json::from_str(&line).map_err(|source| ShareError::Parse { line: i + 1, source })?;
            shares.push(AttributeShare { linkage_id: parsed.linkage_id, party, shares: parsed.shares });
        }
        ShareStore::new(party, shares)
    }
}
