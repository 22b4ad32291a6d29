//! Semi-honest two-party computation over additive shares.
//!
//! A [`Session`] holds one party's view: its transport to the peer, its
//! triple store and communication counters. Linear operations are local;
//! multiplication uses one Beaver triple and one exchange of masked
//! differences. Equality against a public constant evaluates the Lagrange
//! indicator polynomial over the (small) code domain.

pub mod transport;
pub mod triples;

use std::collections::HashSet;

use crate::domain::{GroupSchema, GroupSelector};
use crate::field::{Fp, MODULUS};
use crate::sharing::Party;

pub use transport::{ChannelTransport, TcpTransport, Transport, TransportError};
pub use triples::{deal_triples, BeaverTriple, TripleStore};

use transport::{decode_message, encode_message, Tag};

#[derive(Debug, thiserror::Error)]
pub enum MpcError {
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
    #[error("triple {0} was already consumed")]
    TripleReuse(u64),
    #[error("not enough triples: need {needed}, have {available}")]
    InsufficientTriples { needed: usize, available: usize },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("peer aborted the session (code {0})")]
    PeerAborted(u64),
    #[error("triple store file: {0}")]
    TripleFile(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One party's additive share of an intermediate wire value.
///
/// There is no conversion to a plain value other than [`Session::reveal_many`]
/// and friends; [`SharedValue::share`] exposes this party's own share only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SharedValue<const P: u64 = MODULUS>(Fp<P>);

impl<const P: u64> SharedValue<P> {
    pub fn from_share(share: Fp<P>) -> Self {
        SharedValue(share)
    }

    pub fn share(self) -> Fp<P> {
        self.0
    }

    pub fn zero() -> Self {
        SharedValue(Fp::ZERO)
    }
}

/// Local secure addition.
pub fn add_shared<const P: u64>(x: SharedValue<P>, y: SharedValue<P>) -> SharedValue<P> {
    SharedValue(x.0 + y.0)
}

pub fn sub_shared<const P: u64>(x: SharedValue<P>, y: SharedValue<P>) -> SharedValue<P> {
    SharedValue(x.0 - y.0)
}

/// Local multiplication by a public scalar.
pub fn mul_public<const P: u64>(x: SharedValue<P>, k: Fp<P>) -> SharedValue<P> {
    SharedValue(x.0 * k)
}

pub fn sum_shared<const P: u64>(values: impl IntoIterator<Item = SharedValue<P>>) -> SharedValue<P> {
    SharedValue(values.into_iter().map(|v| v.0).sum())
}

/// Message and round counters for one session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CommStats {
    /// Completed send/receive exchanges.
    pub rounds: u64,
    pub messages_sent: u64,
    pub messages_received: u64,
    pub elements_sent: u64,
    pub elements_received: u64,
    /// Secure multiplications performed (one triple each).
    pub multiplications: u64,
}

/// An equality test `[x] == c` over the code domain `0..=max_code`.
#[derive(Debug, Clone, Copy)]
pub struct EqualityQuery<const P: u64 = MODULUS> {
    pub value: SharedValue<P>,
    pub constant: u32,
    pub max_code: u32,
}

/// Number of secure multiplications one equality test over `0..=max_code`
/// consumes: the indicator polynomial has `max_code` linear factors.
pub fn equality_cost(max_code: u32) -> usize {
    max_code.saturating_sub(1) as usize
}

pub struct Session<T: Transport, const P: u64 = MODULUS> {
    party: Party,
    transport: T,
    triples: TripleStore<P>,
    consumed: HashSet<u64>,
    stats: CommStats,
    transcript: Option<Vec<Fp<P>>>,
}

impl<T: Transport, const P: u64> Session<T, P> {
    pub fn new(party: Party, transport: T, triples: TripleStore<P>) -> Self {
        Session {
            party,
            transport,
            triples,
            consumed: HashSet::new(),
            stats: CommStats::default(),
            transcript: None,
        }
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn stats(&self) -> CommStats {
        self.stats
    }

    pub fn triples(&self) -> &TripleStore<P> {
        &self.triples
    }

    pub fn triples_mut(&mut self) -> &mut TripleStore<P> {
        &mut self.triples
    }

    /// Start recording every opened value this party learns during
    /// multiplications.
    pub fn record_transcript(&mut self) {
        self.transcript = Some(Vec::new());
    }

    pub fn take_transcript(&mut self) -> Vec<Fp<P>> {
        self.transcript.take().unwrap_or_default()
    }

    pub fn into_parts(self) -> (T, TripleStore<P>) {
        (self.transport, self.triples)
    }

    /// Adds a public constant; only the deployer's share moves.
    pub fn add_public(&self, x: SharedValue<P>, k: Fp<P>) -> SharedValue<P> {
        match self.party {
            Party::Deployer => SharedValue(x.0 + k),
            Party::Ttp => x,
        }
    }

    /// Shares of a public constant.
    pub fn constant(&self, k: Fp<P>) -> SharedValue<P> {
        self.add_public(SharedValue::zero(), k)
    }

    fn send_message(&mut self, tag: Tag, elements: &[Fp<P>]) -> Result<(), MpcError> {
        self.transport.send(&encode_message(tag, elements))?;
        self.stats.messages_sent += 1;
        self.stats.elements_sent += elements.len() as u64;
        Ok(())
    }

    fn recv_message(&mut self, expected: Tag) -> Result<Vec<Fp<P>>, MpcError> {
        let payload = self.transport.recv()?;
        let (tag, elements) = decode_message::<P>(&payload)?;
        self.stats.messages_received += 1;
        self.stats.elements_received += elements.len() as u64;
        if tag == Tag::Abort {
            return Err(MpcError::PeerAborted(elements.first().map_or(0, |e| e.value())));
        }
        if tag != expected {
            return Err(MpcError::Protocol(format!("expected {expected:?}, got {tag:?}")));
        }
        Ok(elements)
    }

    /// One round: both parties send `elements` and receive the peer's.
    ///
    /// The deployer writes first and the TTP reads first, so large messages
    /// cannot deadlock two blocked writers on a stream transport.
    pub fn exchange(&mut self, tag: Tag, elements: &[Fp<P>]) -> Result<Vec<Fp<P>>, MpcError> {
        let received = match self.party {
            Party::Deployer => {
                self.send_message(tag, elements)?;
                self.recv_message(tag)?
            }
            Party::Ttp => {
                let r = self.recv_message(tag)?;
                self.send_message(tag, elements)?;
                r
            }
        };
        self.stats.rounds += 1;
        Ok(received)
    }

    /// Best-effort notification that this party is giving up.
    pub fn abort(&mut self, code: u64) {
        let _ = self.transport.send(&encode_message(Tag::Abort, &[Fp::<P>::new(code)]));
    }

    fn check_fresh(&mut self, triple: &BeaverTriple<P>) -> Result<(), MpcError> {
        if !self.consumed.insert(triple.id) {
            return Err(MpcError::TripleReuse(triple.id));
        }
        Ok(())
    }

    /// Beaver multiplication with an explicit triple.
    pub fn mul_shared(
        &mut self,
        x: SharedValue<P>,
        y: SharedValue<P>,
        triple: BeaverTriple<P>,
    ) -> Result<SharedValue<P>, MpcError> {
        Ok(self.mul_with_triples(&[x], &[y], vec![triple])?[0])
    }

    /// Element-wise products using the next triples from the store. All
    /// products share a single round.
    pub fn mul_shared_batch(
        &mut self,
        xs: &[SharedValue<P>],
        ys: &[SharedValue<P>],
    ) -> Result<Vec<SharedValue<P>>, MpcError> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let triples = self.triples.take(xs.len())?;
        self.mul_with_triples(xs, ys, triples)
    }

    fn mul_with_triples(
        &mut self,
        xs: &[SharedValue<P>],
        ys: &[SharedValue<P>],
        triples: Vec<BeaverTriple<P>>,
    ) -> Result<Vec<SharedValue<P>>, MpcError> {
        assert_eq!(xs.len(), ys.len());
        assert_eq!(xs.len(), triples.len());
        for t in &triples {
            self.check_fresh(t)?;
        }
        let n = xs.len();
        // message layout: all d-shares, then all e-shares
        let mut masked = Vec::with_capacity(2 * n);
        masked.extend(xs.iter().zip(&triples).map(|(x, t)| x.0 - t.a));
        masked.extend(ys.iter().zip(&triples).map(|(y, t)| y.0 - t.b));
        let theirs = self.exchange(Tag::Open, &masked)?;
        if theirs.len() != 2 * n {
            return Err(MpcError::Protocol(format!(
                "expected {} opened values, got {}",
                2 * n,
                theirs.len()
            )));
        }
        self.stats.multiplications += n as u64;
        let lead = self.party == Party::Deployer;
        let mut out = Vec::with_capacity(n);
        for (i, t) in triples.iter().enumerate() {
            let d = masked[i] + theirs[i];
            let e = masked[n + i] + theirs[n + i];
            if let Some(tr) = self.transcript.as_mut() {
                tr.push(d);
                tr.push(e);
            }
            let mut z = t.c + d * t.b + e * t.a;
            if lead {
                z += d * e;
            }
            out.push(SharedValue(z));
        }
        Ok(out)
    }

    /// Conjunction of two {0,1}-valued shares.
    pub fn and_shared(
        &mut self,
        a: SharedValue<P>,
        b: SharedValue<P>,
        triple: BeaverTriple<P>,
    ) -> Result<SharedValue<P>, MpcError> {
        self.mul_shared(a, b, triple)
    }

    /// Shares of `1` iff `[x] == c`, for `x` known to lie in `0..=max_code`.
    pub fn equal_public(
        &mut self,
        x: SharedValue<P>,
        c: u32,
        max_code: u32,
    ) -> Result<SharedValue<P>, MpcError> {
        Ok(self.equal_public_batch(&[EqualityQuery { value: x, constant: c, max_code }])?[0])
    }

    /// Evaluates many equality tests in lock-step: round `r` multiplies the
    /// `r`-th factor of every chain that still has one, so the batch needs
    /// only as many rounds as its longest chain.
    pub fn equal_public_batch(
        &mut self,
        queries: &[EqualityQuery<P>],
    ) -> Result<Vec<SharedValue<P>>, MpcError> {
        // factor lists (x - j) for j != c, and the folded constant prod (c - j)^-1
        let mut roots: Vec<Vec<u32>> = Vec::with_capacity(queries.len());
        let mut scale: Vec<Fp<P>> = Vec::with_capacity(queries.len());
        for q in queries {
            assert!(q.constant <= q.max_code, "constant outside the code domain");
            let js: Vec<u32> = (0..=q.max_code).filter(|&j| j != q.constant).collect();
            let denom = js
                .iter()
                .map(|&j| Fp::<P>::from_i64(q.constant as i64 - j as i64))
                .fold(Fp::ONE, |acc, v| acc * v);
            scale.push(denom.inverse().expect("distinct codes are invertible mod p"));
            roots.push(js);
        }
        let factor = |s: &Self, q: &EqualityQuery<P>, j: u32| s.add_public(q.value, -Fp::new(j as u64));
        let mut acc: Vec<SharedValue<P>> = queries
            .iter()
            .zip(&roots)
            .map(|(q, js)| factor(self, q, js[0]))
            .collect();
        let longest = roots.iter().map(Vec::len).max().unwrap_or(0);
        for step in 1..longest {
            let active: Vec<usize> = (0..queries.len()).filter(|&i| roots[i].len() > step).collect();
            let lhs: Vec<_> = active.iter().map(|&i| acc[i]).collect();
            let rhs: Vec<_> = active
                .iter()
                .map(|&i| factor(self, &queries[i], roots[i][step]))
                .collect();
            let products = self.mul_shared_batch(&lhs, &rhs)?;
            for (&i, p) in active.iter().zip(products) {
                acc[i] = p;
            }
        }
        Ok(acc.into_iter().zip(scale).map(|(v, k)| mul_public(v, k)).collect())
    }

    /// Shares of `1 - [x == dummy]`: the candidate donated this dimension.
    pub fn not_dummy(&mut self, x: SharedValue<P>, dummy_code: u32) -> Result<SharedValue<P>, MpcError> {
        let is_dummy = self.equal_public(x, dummy_code, dummy_code)?;
        Ok(sub_shared(self.constant(Fp::ONE), is_dummy))
    }

    /// Multiplies each row of factors together, all rows in lock-step.
    /// Rows of length 0 yield shares of 1.
    pub fn product_batch(&mut self, rows: &[Vec<SharedValue<P>>]) -> Result<Vec<SharedValue<P>>, MpcError> {
        let mut acc: Vec<SharedValue<P>> = rows
            .iter()
            .map(|r| r.first().copied().unwrap_or_else(|| self.constant(Fp::ONE)))
            .collect();
        let longest = rows.iter().map(Vec::len).max().unwrap_or(0);
        for step in 1..longest {
            let active: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].len() > step).collect();
            let lhs: Vec<_> = active.iter().map(|&i| acc[i]).collect();
            let rhs: Vec<_> = active.iter().map(|&i| rows[i][step]).collect();
            for (&i, p) in active.iter().zip(self.mul_shared_batch(&lhs, &rhs)?) {
                acc[i] = p;
            }
        }
        Ok(acc)
    }

    /// Intersectional membership `prod_j [x_j == g_j]` over the specified
    /// dimensions of `selector`.
    pub fn group_indicator(
        &mut self,
        attributes: &[SharedValue<P>],
        selector: &GroupSelector,
        schema: &GroupSchema,
    ) -> Result<SharedValue<P>, MpcError> {
        assert_eq!(attributes.len(), schema.len());
        let queries: Vec<EqualityQuery<P>> = selector
            .specified()
            .into_iter()
            .map(|j| EqualityQuery {
                value: attributes[j],
                constant: selector.0[j].expect("specified"),
                max_code: schema.dimension(j).dummy_code(),
            })
            .collect();
        let equalities = self.equal_public_batch(&queries)?;
        Ok(self.product_batch(&[equalities])?[0])
    }

    /// Reveals `sum(values)`: local summation, then one exchange of the two
    /// aggregate shares.
    pub fn reveal_sum(&mut self, values: &[SharedValue<P>]) -> Result<Fp<P>, MpcError> {
        Ok(self.reveal_many(&[sum_shared(values.iter().copied())])?[0])
    }

    /// Opens several already-aggregated values in one round.
    pub fn reveal_many(&mut self, values: &[SharedValue<P>]) -> Result<Vec<Fp<P>>, MpcError> {
        let mine: Vec<Fp<P>> = values.iter().map(|v| v.0).collect();
        let theirs = self.exchange(Tag::Reveal, &mine)?;
        if theirs.len() != mine.len() {
            return Err(MpcError::Protocol(format!(
                "expected {} revealed shares, got {}",
                mine.len(),
                theirs.len()
            )));
        }
        Ok(mine.into_iter().zip(theirs).map(|(a, b)| a + b).collect())
    }
}

/// Runs `f` for both parties on an in-process channel, each on its own
/// thread, and returns `(deployer_result, ttp_result)`.
pub fn run_local_pair<const P: u64, R, F>(
    deployer_triples: TripleStore<P>,
    ttp_triples: TripleStore<P>,
    f: F,
) -> (R, R)
where
    R: Send,
    F: Fn(&mut Session<ChannelTransport, P>) -> R + Sync,
{
    let (ta, tb) = ChannelTransport::pair();
    std::thread::scope(|scope| {
        let f = &f;
        let ttp = scope.spawn(move || {
            let mut s = Session::new(Party::Ttp, tb, ttp_triples);
            f(&mut s)
        });
        let mut s = Session::new(Party::Deployer, ta, deployer_triples);
        let d = f(&mut s);
        drop(s);
        (d, ttp.join().expect("ttp thread panicked"))
    })
}
