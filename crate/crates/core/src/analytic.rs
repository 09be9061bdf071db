//! Closed-form long-run expected age on tree networks.
//!
//! Along the unique path from the source to a user each link adds its own
//! `E[Y^2] / (2 E[Y])`, independently of the other links and of their order.

use serde::Serialize;
use thiserror::Error;

use crate::distributions::InterUpdateDistribution;
use crate::topology::{LinkId, Network, NodeId, TopologyError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("arithmetic law {law} (link {link:?}) has no limiting expected age")]
    ArithmeticLimitUndefined { link: Option<LinkId>, law: String },
    #[error("variance {0} outside [0, 1/3]")]
    VarianceOutOfRange(f64),
    #[error("hop count must be at least 1")]
    NoHops,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkContribution {
    pub link: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgePrediction {
    pub node: NodeId,
    pub expected_age: f64,
    pub contributions: Vec<LinkContribution>,
}

/// `lim E[X_node(t)]` for a node of a tree network.
pub fn node_expected_age(net: &Network, node: NodeId) -> Result<AgePrediction, AnalyticError> {
    let path = net.path_to_source(node)?;
    let mut contributions = Vec::with_capacity(path.len());
    for id in path {
        let l = net.link(id);
        if l.dist.is_arithmetic() {
            return Err(AnalyticError::ArithmeticLimitUndefined { link: Some(id), law: l.dist.name() });
        }
        contributions.push(LinkContribution { link: id, from: l.from, to: l.to, contribution: l.dist.age_contribution() });
    }
    let expected_age = contributions.iter().fold(0.0, |acc, c| acc + c.contribution);
    Ok(AgePrediction { node, expected_age, contributions })
}

/// Predicted age at the end of `n`-hop chains of identical links, `n = 1..=n_max`.
pub fn hop_sweep_prediction(dist: &InterUpdateDistribution, n_max: usize) -> Result<Vec<(usize, f64)>, AnalyticError> {
    if n_max == 0 {
        return Err(AnalyticError::NoHops);
    }
    if dist.is_arithmetic() {
        return Err(AnalyticError::ArithmeticLimitUndefined { link: None, law: dist.name() });
    }
    let per_link = dist.age_contribution();
    Ok((1..=n_max).map(|n| (n, n as f64 * per_link)).collect())
}

/// Predicted age after `hops` unit-mean uniform links of variance `v`:
/// `hops * (1 + v) / 2`.
///
/// `v = 0` is accepted as the continuous end point of the line even though
/// the zero-variance law itself is arithmetic.
pub fn variance_sweep_prediction(v: f64, hops: usize) -> Result<f64, AnalyticError> {
    if !(v.is_finite() && (0.0..=1.0 / 3.0).contains(&v)) {
        return Err(AnalyticError::VarianceOutOfRange(v));
    }
    if hops == 0 {
        return Err(AnalyticError::NoHops);
    }
    Ok(hops as f64 * (1.0 + v) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::InterUpdateDistribution as D;
    use crate::topology::Link;

    fn mixed_laws() -> [D; 3] {
        [D::rayleigh(1.0).unwrap(), D::chi_square(1).unwrap(), D::beta(2.0, 3.0).unwrap()]
    }

    #[test]
    fn three_hop_mixed_chain() {
        let [r, c, b] = mixed_laws();
        for order in [[r, c, b], [r, b, c], [c, r, b], [c, b, r], [b, c, r], [b, r, c]] {
            let p = node_expected_age(&Network::chain(&order), 3).unwrap();
            assert_eq!(format!("{:.4}", p.expected_age), "2.5479");
            assert_eq!(p.contributions.len(), 3);
        }
    }

    #[test]
    fn uniform_chain_is_linear() {
        let u = D::uniform(0.0, 2.0).unwrap();
        for n in 1..=10 {
            let p = node_expected_age(&Network::chain(&vec![u; n]), n).unwrap();
            assert!((p.expected_age - 2.0 * n as f64 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_chain_sums_inverse_rates() {
        let rates = [0.5, 1.0, 2.0];
        let dists: Vec<D> = rates.iter().map(|&r| D::exponential(r).unwrap()).collect();
        let p = node_expected_age(&Network::chain(&dists), 3).unwrap();
        assert!((p.expected_age - 3.5).abs() < 1e-12);
    }

    #[test]
    fn source_has_zero_prediction() {
        let p = node_expected_age(&Network::chain(&mixed_laws()), 0).unwrap();
        assert_eq!(p.expected_age, 0.0);
        assert!(p.contributions.is_empty());
    }

    #[test]
    fn errors() {
        let u = D::uniform(0.0, 2.0).unwrap();
        let diamond = Network::new(
            4,
            vec![Link::new(0, 1, u, 0), Link::new(0, 2, u, 0), Link::new(1, 3, u, 0), Link::new(2, 3, u, 1)],
        )
        .unwrap();
        assert_eq!(node_expected_age(&diamond, 3), Err(AnalyticError::Topology(TopologyError::NotATree)));
        let net = Network::chain(&[u, D::constant(1.0).unwrap()]);
        assert!(matches!(
            node_expected_age(&net, 2),
            Err(AnalyticError::ArithmeticLimitUndefined { link: Some(1), .. })
        ));
        assert!(node_expected_age(&net, 1).is_ok());
    }

    #[test]
    fn hop_sweep() {
        let pts = hop_sweep_prediction(&D::uniform(0.0, 2.0).unwrap(), 3).unwrap();
        let expected = [2.0 / 3.0, 4.0 / 3.0, 2.0];
        for ((n, y), e) in pts.iter().zip(expected) {
            assert!((y - e).abs() < 1e-12, "n = {n}");
        }
        let exp = hop_sweep_prediction(&D::exponential(1.0).unwrap(), 5).unwrap();
        assert_eq!(exp, (1..=5).map(|k| (k, k as f64)).collect::<Vec<_>>());
        assert!(hop_sweep_prediction(&D::constant(1.0).unwrap(), 3).is_err());
        assert_eq!(hop_sweep_prediction(&D::uniform(0.0, 2.0).unwrap(), 0), Err(AnalyticError::NoHops));
    }

    #[test]
    fn variance_sweep() {
        assert!((variance_sweep_prediction(1.0 / 3.0, 4).unwrap() - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(variance_sweep_prediction(0.0, 4).unwrap(), 2.0);
        assert!((variance_sweep_prediction(0.1, 4).unwrap() - 2.2).abs() < 1e-12);
        assert_eq!(variance_sweep_prediction(0.5, 4), Err(AnalyticError::VarianceOutOfRange(0.5)));
    }
}
