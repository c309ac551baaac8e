//! Quantized gather/broadcast exchanges on top of [`Network`].
//!
//! Every node encodes its own value (the master included, free of charge),
//! and the receiver decodes against the reference it holds. Distance
//! preconditions are checked against the true values before encoding so a
//! failure names the inequality instead of silently decoding to the wrong
//! lattice point.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::net_sim::{Message, Network};
use crate::quantizer::{self, l2_distance, QuantSpec};
use crate::sym_codec::{phi, phi_inv, PackedSym, SymMatrix};

/// `bound − observed`, or an invariant violation naming `check`.
pub(crate) fn slack(check: &str, bound: f64, observed: f64) -> Result<f64> {
    if !(observed <= bound) {
        return Err(Error::violation(check, bound, observed));
    }
    Ok(bound - observed)
}

/// Quantizes `values[i]` at node `i`; the master decodes it against
/// `refs[i]`. Returns the decoded values and the smallest distance slack.
pub(crate) fn gather_vectors(
    net: &mut Network,
    tag: &str,
    values: &[Vec<f64>],
    refs: &[Vec<f64>],
    y: f64,
    eps: f64,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let spec = QuantSpec::new(values[0].len(), y, eps)?;
    let mut min_slack = f64::INFINITY;
    let mut messages = Vec::with_capacity(values.len());
    for (v, r) in values.iter().zip(refs) {
        min_slack = min_slack.min(slack(&format!("{tag}: ‖x − x_ref‖ ≤ y"), y, l2_distance(v, r)?)?);
        messages.push(Message::lattice(quantizer::encode(v, &spec)?));
    }
    let blobs = net.gather(tag, messages)?;
    let decoded = blobs
        .iter()
        .zip(refs)
        .map(|(b, r)| quantizer::decode(b, r))
        .collect::<Result<Vec<_>>>()?;
    Ok((decoded, min_slack))
}

/// Quantizes `value` at the master; node `i` decodes against `refs[i]`.
/// All nodes must land on the same point.
pub(crate) fn broadcast_vector(
    net: &mut Network,
    tag: &str,
    value: &[f64],
    refs: &[Vec<f64>],
    y: f64,
    eps: f64,
) -> Result<(Vec<f64>, f64)> {
    let spec = QuantSpec::new(value.len(), y, eps)?;
    let mut min_slack = f64::INFINITY;
    for r in refs {
        min_slack = min_slack.min(slack(&format!("{tag}: ‖x − x_ref‖ ≤ y"), y, l2_distance(value, r)?)?);
    }
    let blob = net.broadcast(tag, Message::lattice(quantizer::encode(value, &spec)?))?;
    let mut decoded: Option<Vec<f64>> = None;
    for (node, r) in refs.iter().enumerate() {
        let d = quantizer::decode(&blob, r)?;
        match &decoded {
            None => decoded = Some(d),
            Some(first) if *first != d => {
                return Err(Error::Network(format!(
                    "{tag}: node {node} decoded a different point than node 0"
                )))
            }
            Some(_) => {}
        }
    }
    Ok((decoded.expect("at least one node"), min_slack))
}

pub(crate) fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.as_slice().to_vec()
}

pub(crate) fn from_vec(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

pub(crate) fn packed(p: &SymMatrix) -> Vec<f64> {
    phi(p).into_vec()
}

pub(crate) fn unpacked(dim: usize, v: Vec<f64>) -> Result<SymMatrix> {
    Ok(phi_inv(&PackedSym::new(dim, v)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net_sim::Topology;

    #[test]
    fn slack_sign() {
        assert_eq!(slack("c", 2.0, 1.5).unwrap(), 0.5);
        assert!(slack("c", 1.0, 1.5).unwrap_err().is_invariant_violation());
        assert!(slack("c", 1.0, f64::NAN).is_err());
    }

    #[test]
    fn broadcast_agrees_across_references() {
        let mut net = Network::new(Topology::star(3).unwrap());
        let value = vec![0.3, -0.2];
        let refs = vec![vec![0.0, 0.0], vec![0.5, 0.1], vec![-0.2, -0.4]];
        let (out, s) = broadcast_vector(&mut net, "b", &value, &refs, 1.0, 0.01).unwrap();
        assert!(s >= 0.0);
        assert!(l2_distance(&out, &value).unwrap() <= 0.01);
        let bits = net.ledger().total_bits();
        assert_eq!(bits % 2, 0);
        assert_eq!(net.ledger().entries().len(), 2);
    }

    #[test]
    fn gather_names_the_violated_distance() {
        let mut net = Network::new(Topology::star(2).unwrap());
        let err = gather_vectors(
            &mut net,
            "dir_gather",
            &[vec![0.0], vec![5.0]],
            &[vec![0.0], vec![0.0]],
            1.0,
            0.1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("dir_gather"));
    }
}
