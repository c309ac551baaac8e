//! In-process master/worker message passing with exact bit accounting.
//!
//! Nothing is serialized on the hot path; every message carries its payload
//! value together with the number of bits it would occupy on the wire. The
//! master never charges messages to itself.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::quantizer::EncodedBlob;

/// Header cost of a lattice message: `y` and `ε` as two 64-bit scalars.
pub const LATTICE_OVERHEAD_BITS: u64 = 128;
/// Price of one full-precision coordinate.
pub const FULL_PRECISION_BITS: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topology {
    nodes: usize,
    master: usize,
}

impl Topology {
    pub fn new(nodes: usize, master: usize) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::Config("topology needs at least one node".into()));
        }
        if master >= nodes {
            return Err(Error::Config(format!(
                "master index {master} out of range for {nodes} nodes"
            )));
        }
        Ok(Topology { nodes, master })
    }

    /// Node 0 as master.
    pub fn star(nodes: usize) -> Result<Self> {
        Self::new(nodes, 0)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn master(&self) -> usize {
        self.master
    }

    pub fn workers(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes).filter(move |&i| i != self.master)
    }

    pub fn worker_count(&self) -> usize {
        self.nodes - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    WorkerToMaster,
    MasterToWorker,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::WorkerToMaster => "w2m",
            Direction::MasterToWorker => "m2w",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEntry {
    pub round: usize,
    pub tag: String,
    pub direction: Direction,
    pub node: usize,
    pub bits: u64,
    pub overhead_bits: u64,
}

/// One aggregated row of [`BitLedger::report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportRow {
    pub round: usize,
    pub tag: String,
    pub bits_this_round: u64,
    pub bits_cumulative: u64,
}

/// Append-only record of every charged message.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitLedger {
    entries: Vec<LedgerEntry>,
    total_bits: u64,
    total_overhead: u64,
}

impl BitLedger {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, entry: LedgerEntry) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if entry.round < last.round {
                return Err(Error::Network(format!(
                    "ledger entry for round {} after round {}",
                    entry.round, last.round
                )));
            }
        }
        self.total_bits += entry.bits;
        self.total_overhead += entry.overhead_bits;
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn total_bits(&self) -> u64 {
        self.total_bits
    }

    pub fn total_overhead(&self) -> u64 {
        self.total_overhead
    }

    /// Payload bits charged in `round`.
    pub fn bits_in_round(&self, round: usize) -> u64 {
        self.entries.iter().filter(|e| e.round == round).map(|e| e.bits).sum()
    }

    pub fn overhead_in_round(&self, round: usize) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.round == round)
            .map(|e| e.overhead_bits)
            .sum()
    }

    /// Payload bits charged in `round` under tags starting with `prefix`.
    pub fn bits_with_prefix(&self, round: usize, prefix: &str) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.round == round && e.tag.starts_with(prefix))
            .map(|e| e.bits)
            .sum()
    }

    pub fn last_round(&self) -> Option<usize> {
        self.entries.last().map(|e| e.round)
    }

    /// Recomputes the running totals from the entries.
    pub fn verify(&self) -> Result<()> {
        let bits: u64 = self.entries.iter().map(|e| e.bits).sum();
        let overhead: u64 = self.entries.iter().map(|e| e.overhead_bits).sum();
        if bits != self.total_bits || overhead != self.total_overhead {
            return Err(Error::Network(format!(
                "ledger totals ({}, {}) disagree with entries ({bits}, {overhead})",
                self.total_bits, self.total_overhead
            )));
        }
        Ok(())
    }

    /// Per `(round, tag)` totals in order of first appearance, with a
    /// running cumulative column.
    pub fn report(&self) -> Vec<ReportRow> {
        let mut rows: Vec<ReportRow> = Vec::new();
        for e in &self.entries {
            match rows.last_mut() {
                Some(r) if r.round == e.round && r.tag == e.tag => r.bits_this_round += e.bits,
                _ => rows.push(ReportRow {
                    round: e.round,
                    tag: e.tag.clone(),
                    bits_this_round: e.bits,
                    bits_cumulative: 0,
                }),
            }
        }
        let mut acc = 0;
        for r in &mut rows {
            acc += r.bits_this_round;
            r.bits_cumulative = acc;
        }
        rows
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "round,tag,direction,node,bits,overhead_bits")?;
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                e.round, e.tag, e.direction, e.node, e.bits, e.overhead_bits
            )?;
        }
        Ok(())
    }
}

/// A value in flight with its wire cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Message<T> {
    pub payload: T,
    pub bits: u64,
    pub overhead_bits: u64,
}

impl Message<EncodedBlob> {
    pub fn lattice(blob: EncodedBlob) -> Self {
        let bits = blob.payload_bits();
        Message {
            payload: blob,
            bits,
            overhead_bits: LATTICE_OVERHEAD_BITS,
        }
    }
}

impl<T> Message<T> {
    /// `coords` values priced at 32 bits each, no header.
    pub fn full_precision(payload: T, coords: usize) -> Self {
        Message {
            payload,
            bits: FULL_PRECISION_BITS * coords as u64,
            overhead_bits: 0,
        }
    }

    pub fn with_cost(payload: T, bits: u64, overhead_bits: u64) -> Self {
        Message {
            payload,
            bits,
            overhead_bits,
        }
    }
}

/// Star network bound to a ledger and a current round.
#[derive(Debug, Clone)]
pub struct Network {
    topology: Topology,
    ledger: BitLedger,
    round: usize,
}

impl Network {
    pub fn new(topology: Topology) -> Self {
        Network {
            topology,
            ledger: BitLedger::new(),
            round: 0,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn ledger(&self) -> &BitLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> BitLedger {
        self.ledger
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn set_round(&mut self, round: usize) -> Result<()> {
        if round < self.round {
            return Err(Error::Network(format!(
                "cannot rewind from round {} to {round}",
                self.round
            )));
        }
        self.round = round;
        Ok(())
    }

    fn charge(&mut self, tag: &str, direction: Direction, node: usize, bits: u64, overhead: u64) -> Result<()> {
        if bits == 0 {
            return Ok(());
        }
        self.ledger.push(LedgerEntry {
            round: self.round,
            tag: tag.to_string(),
            direction,
            node,
            bits,
            overhead_bits: overhead,
        })
    }

    /// Delivers one message per node (indexed by node, master included) to
    /// the master. Each worker's message is charged once; the master's own
    /// is free.
    pub fn gather<T>(&mut self, tag: &str, messages: Vec<Message<T>>) -> Result<Vec<T>> {
        if messages.len() != self.topology.nodes {
            return Err(Error::Network(format!(
                "gather '{tag}' expected {} messages, got {}",
                self.topology.nodes,
                messages.len()
            )));
        }
        let master = self.topology.master;
        let mut delivered = Vec::with_capacity(messages.len());
        for (node, msg) in messages.into_iter().enumerate() {
            if node != master {
                self.charge(tag, Direction::WorkerToMaster, node, msg.bits, msg.overhead_bits)?;
            }
            delivered.push(msg.payload);
        }
        Ok(delivered)
    }

    /// Sends one message from the master to every worker; charged `n − 1`
    /// times.
    pub fn broadcast<T>(&mut self, tag: &str, message: Message<T>) -> Result<T> {
        let workers: Vec<usize> = self.topology.workers().collect();
        for node in workers {
            self.charge(
                tag,
                Direction::MasterToWorker,
                node,
                message.bits,
                message.overhead_bits,
            )?;
        }
        Ok(message.payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(bits: u64) -> Message<()> {
        Message::with_cost((), bits, 0)
    }

    #[test]
    fn gather_single_worker() {
        let mut net = Network::new(Topology::star(2).unwrap());
        net.gather("g", vec![msg(5), msg(12)]).unwrap();
        assert_eq!(net.ledger().total_bits(), 12);
    }

    #[test]
    fn gather_skips_master() {
        let mut net = Network::new(Topology::star(4).unwrap());
        net.gather("g", vec![msg(8); 4]).unwrap();
        assert_eq!(net.ledger().total_bits(), 24);
        assert!(net.ledger().entries().iter().all(|e| e.node != 0));
    }

    #[test]
    fn zero_bit_messages_leave_ledger_unchanged() {
        let mut net = Network::new(Topology::star(3).unwrap());
        net.gather("g", vec![msg(0); 3]).unwrap();
        net.broadcast("b", msg(0)).unwrap();
        assert!(net.ledger().entries().is_empty());
    }

    #[test]
    fn gather_requires_every_node() {
        let mut net = Network::new(Topology::star(3).unwrap());
        assert!(net.gather("g", vec![msg(1); 2]).is_err());
    }

    #[test]
    fn broadcast_examples() {
        let mut net = Network::new(Topology::star(3).unwrap());
        net.broadcast("b", msg(10)).unwrap();
        assert_eq!(net.ledger().total_bits(), 20);

        let mut solo = Network::new(Topology::star(1).unwrap());
        solo.broadcast("b", msg(10)).unwrap();
        assert_eq!(solo.ledger().total_bits(), 0);

        let mut net = Network::new(Topology::star(5).unwrap());
        net.broadcast("b", msg(7)).unwrap();
        net.broadcast("b", msg(9)).unwrap();
        assert_eq!(net.ledger().total_bits(), 4 * (7 + 9));
    }

    #[test]
    fn report_examples() {
        assert!(BitLedger::new().report().is_empty());

        let mut net = Network::new(Topology::star(2).unwrap());
        net.broadcast("b", msg(3)).unwrap();
        assert_eq!(
            net.ledger().report(),
            vec![ReportRow {
                round: 0,
                tag: "b".into(),
                bits_this_round: 3,
                bits_cumulative: 3
            }]
        );

        let mut net = Network::new(Topology::star(3).unwrap());
        net.gather("g", vec![msg(1), msg(2), msg(3)]).unwrap();
        net.set_round(1).unwrap();
        net.broadcast("b", msg(4)).unwrap();
        let rows = net.ledger().report();
        let sum: u64 = rows.iter().map(|r| r.bits_this_round).sum();
        assert_eq!(sum, net.ledger().total_bits());
        assert_eq!(rows.last().unwrap().bits_cumulative, sum);
        net.ledger().verify().unwrap();
    }

    #[test]
    fn rounds_cannot_rewind() {
        let mut net = Network::new(Topology::star(2).unwrap());
        net.set_round(3).unwrap();
        assert!(net.set_round(2).is_err());
    }

    #[test]
    fn topology_validation() {
        assert!(Topology::new(0, 0).is_err());
        assert!(Topology::new(3, 3).is_err());
        assert_eq!(
            Topology::new(4, 2).unwrap().workers().collect::<Vec<_>>(),
            vec![0, 1, 3]
        );
    }

    #[test]
    fn csv_layout() {
        let mut net = Network::new(Topology::star(2).unwrap());
        net.gather("dir_gather", vec![msg(0), Message::with_cost((), 9, 128)])
            .unwrap();
        let mut buf = Vec::new();
        net.ledger().write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "round,tag,direction,node,bits,overhead_bits\n0,dir_gather,w2m,1,9,128\n"
        );
    }
}
