//! Ages evaluated backwards from recorded renewal epochs.
//!
//! Nothing here runs the forward simulation: the age of a node at `t` is
//! rebuilt from backward recurrence times of the links feeding it, which makes
//! these functions an independent check on [`crate::engine`].

use crate::engine::{check_trajectories, EngineError, LinkTrajectory};
use crate::topology::{LinkId, Network, NodeId, SOURCE};

/// Backward recurrence time `A(s)` of a renewal process with the given
/// ascending epochs: time since the last renewal at or before `s`, or `s`
/// itself when there was none (the process starts fresh at 0).
pub fn backward_recurrence_epochs(epochs: &[f64], s: f64) -> f64 {
    match last_epoch_at_or_before(epochs, s) {
        Some(e) => s - e,
        None => s,
    }
}

pub fn backward_recurrence(traj: &LinkTrajectory, s: f64) -> f64 {
    backward_recurrence_epochs(&traj.epochs, s)
}

fn last_epoch_at_or_before(epochs: &[f64], s: f64) -> Option<f64> {
    let n = epochs.partition_point(|&e| e <= s);
    n.checked_sub(1).map(|k| epochs[k])
}

/// Split of a path end-user's age at `time` into segments, user side first:
/// segment `i` is the backward recurrence time of the `i`-th link counted from
/// the user, evaluated at `time` minus the earlier segments.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaDecomposition {
    pub time: f64,
    pub segments: Vec<f64>,
}

impl DeltaDecomposition {
    pub fn total(&self) -> f64 {
        self.segments.iter().sum()
    }
}

/// `path` lists the trajectories from the source-side link to the user-side
/// link.
pub fn delta_decomposition(path: &[&LinkTrajectory], t: f64) -> DeltaDecomposition {
    let mut segments = Vec::with_capacity(path.len());
    // Rewind to the epoch itself rather than `s - A(s)`: the subtraction can
    // round below the epoch and miss it on the next link.
    let mut s = t;
    for tr in path.iter().rev() {
        match last_epoch_at_or_before(&tr.epochs, s) {
            Some(e) => {
                segments.push(s - e);
                s = e;
            }
            None => {
                segments.push(s);
                s = 0.0;
            }
        }
    }
    DeltaDecomposition { time: t, segments }
}

/// Age of the last node on a source-rooted path as the sum of its segments.
pub fn recursive_age(path: &[&LinkTrajectory], t: f64) -> f64 {
    delta_decomposition(path, t).total()
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    link: LinkId,
}

/// Evaluates the general-network age recursion on one set of trajectories.
///
/// At time `t` node `j` holds whatever the most recent arrival into it left
/// there: the fresher of the sender's packet at that instant and `j`'s own
/// packet just before it. Both are again "most recent arrival" questions at
/// an earlier instant, so the recursion walks back through arrival events
/// until it reaches the source or the empty initial cache.
///
/// Events at the same instant are ordered by (sender hop depth, link
/// priority, link index). Results are memoised per event, so repeated
/// queries on one trajectory set are cheap.
pub struct GeneralOracle<'n> {
    net: &'n Network,
    events: Vec<Event>,
    /// Global event indices arriving at each node, ascending.
    arrivals_into: Vec<Vec<usize>>,
    /// Generation time cached at the receiver right after each event.
    memo: Vec<Option<f64>>,
}

impl<'n> GeneralOracle<'n> {
    pub fn new(net: &'n Network, trajectories: &[LinkTrajectory]) -> Result<Self, EngineError> {
        check_trajectories(net, trajectories)?;
        let mut keyed: Vec<((f64, u32, u32, LinkId, usize), Event)> = trajectories
            .iter()
            .flat_map(|tr| {
                let l = net.link(tr.link);
                let depth = net.depth(l.from);
                tr.epochs
                    .iter()
                    .enumerate()
                    .map(move |(k, &time)| ((time, depth, l.priority, tr.link, k), Event { time, link: tr.link }))
            })
            .collect();
        keyed.sort_by(|(a, _), (b, _)| {
            a.0.total_cmp(&b.0).then_with(|| (a.1, a.2, a.3, a.4).cmp(&(b.1, b.2, b.3, b.4)))
        });
        let events: Vec<Event> = keyed.into_iter().map(|(_, e)| e).collect();
        let mut arrivals_into = vec![Vec::new(); net.node_count()];
        for (g, ev) in events.iter().enumerate() {
            arrivals_into[net.link(ev.link).to].push(g);
        }
        let memo = vec![None; events.len()];
        Ok(Self { net, events, arrivals_into, memo })
    }

    /// Last event into `node` strictly before global position `bound`.
    fn last_arrival_before(&self, node: NodeId, bound: usize) -> Option<usize> {
        let list = &self.arrivals_into[node];
        let k = list.partition_point(|&g| g < bound);
        k.checked_sub(1).map(|k| list[k])
    }

    /// Events whose values `event` depends on: the sender's and the
    /// receiver's latest earlier arrivals.
    fn dependencies(&self, event: usize) -> [Option<usize>; 2] {
        let l = self.net.link(self.events[event].link);
        let sender = if l.from == SOURCE { None } else { self.last_arrival_before(l.from, event) };
        [sender, self.last_arrival_before(l.to, event)]
    }

    fn cached(&self, dep: Option<usize>) -> Option<f64> {
        match dep {
            None => Some(0.0),
            Some(e) => self.memo[e],
        }
    }

    fn resolve(&mut self, root: usize) -> f64 {
        let mut stack = vec![root];
        while let Some(&e) = stack.last() {
            if self.memo[e].is_some() {
                stack.pop();
                continue;
            }
            let deps = self.dependencies(e);
            let mut ready = true;
            for d in deps.into_iter().flatten() {
                if self.memo[d].is_none() {
                    stack.push(d);
                    ready = false;
                }
            }
            if !ready {
                continue;
            }
            let ev = self.events[e];
            let l = self.net.link(ev.link);
            let offered = if l.from == SOURCE { ev.time } else { self.cached(deps[0]).unwrap() };
            let held = self.cached(deps[1]).unwrap();
            self.memo[e] = Some(offered.max(held));
            stack.pop();
        }
        self.memo[root].unwrap()
    }

    pub fn age(&mut self, node: NodeId, t: f64) -> f64 {
        if node == SOURCE {
            return 0.0;
        }
        let bound = self.events.partition_point(|ev| ev.time <= t);
        match self.last_arrival_before(node, bound) {
            None => t,
            Some(e) => t - self.resolve(e),
        }
    }
}

/// Age of `node` at `t` in any validated network, from recorded epochs.
pub fn general_recursive_age(
    net: &Network,
    trajectories: &[LinkTrajectory],
    node: NodeId,
    t: f64,
) -> Result<f64, EngineError> {
    Ok(GeneralOracle::new(net, trajectories)?.age(node, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::InterUpdateDistribution as D;
    use crate::engine::{replay, simulate_recorded};
    use crate::topology::Link;

    fn chain2() -> Network {
        Network::chain(&[D::uniform(0.0, 2.0).unwrap(), D::uniform(0.0, 2.0).unwrap()])
    }

    fn traj(net: &Network, link: LinkId, epochs: &[f64]) -> LinkTrajectory {
        LinkTrajectory::new(net, link, epochs.to_vec())
    }

    #[test]
    fn backward_recurrence_examples() {
        let net = chain2();
        let tr = traj(&net, 1, &[0.9, 2.0]);
        assert!((backward_recurrence(&tr, 2.5) - 0.5).abs() < 1e-15);
        assert_eq!(backward_recurrence(&tr, 0.0), 0.0);
        assert_eq!(backward_recurrence(&tr, 2.0), 0.0);
        assert_eq!(backward_recurrence(&traj(&net, 1, &[]), 7.0), 7.0);
    }

    #[test]
    fn two_hop_segments() {
        let net = chain2();
        let a = traj(&net, 0, &[0.4, 1.1, 2.3]);
        let b = traj(&net, 1, &[0.9, 2.0]);
        let dd = delta_decomposition(&[&a, &b], 2.5);
        assert_eq!(dd.segments.len(), 2);
        assert!((dd.segments[0] - 0.5).abs() < 1e-12);
        assert!((dd.segments[1] - 0.9).abs() < 1e-12);
        assert!((recursive_age(&[&a, &b], 2.5) - 1.4).abs() < 1e-12);
        assert_eq!(recursive_age(&[&a, &b], 0.0), 0.0);
    }

    #[test]
    fn single_link_segment_is_backward_recurrence() {
        let net = chain2();
        let a = traj(&net, 0, &[0.3, 1.7, 1.9]);
        for t in [0.0, 0.2, 1.0, 1.8, 5.0] {
            assert_eq!(delta_decomposition(&[&a], t).segments, vec![backward_recurrence(&a, t)]);
        }
    }

    #[test]
    fn empty_trajectories_put_all_age_in_first_segment() {
        let net = Network::chain(&[D::exponential(1.0).unwrap(); 3]);
        let empty: Vec<LinkTrajectory> = (0..3).map(|k| traj(&net, k, &[])).collect();
        let refs: Vec<&LinkTrajectory> = empty.iter().collect();
        assert_eq!(delta_decomposition(&refs, 4.0).segments, vec![4.0, 0.0, 0.0]);
    }

    #[test]
    fn general_matches_chain_on_hand_trace() {
        let net = chain2();
        let trajs = vec![traj(&net, 0, &[0.4, 1.1, 2.3]), traj(&net, 1, &[0.9, 2.0])];
        let x = general_recursive_age(&net, &trajs, 2, 2.5).unwrap();
        assert!((x - 1.4).abs() < 1e-12);
        assert_eq!(general_recursive_age(&net, &trajs, 0, 2.5).unwrap(), 0.0);
    }

    #[test]
    fn general_with_no_incoming_arrivals() {
        let net = chain2();
        let trajs = vec![traj(&net, 0, &[0.4]), traj(&net, 1, &[])];
        assert_eq!(general_recursive_age(&net, &trajs, 2, 3.0).unwrap(), 3.0);
    }

    #[test]
    fn diamond_hand_trace() {
        let d = D::uniform(0.0, 2.0).unwrap();
        let net = Network::new(
            4,
            vec![Link::new(0, 1, d, 0), Link::new(0, 2, d, 0), Link::new(1, 3, d, 0), Link::new(2, 3, d, 1)],
        )
        .unwrap();
        // u1 = 0.5, u2 = 1.0, then node 3 hears from 2 at 1.2 and from 1 at 1.5
        let trajs = vec![
            traj(&net, 0, &[0.5]),
            traj(&net, 1, &[1.0]),
            traj(&net, 2, &[1.5]),
            traj(&net, 3, &[1.2]),
        ];
        let mut oracle = GeneralOracle::new(&net, &trajs).unwrap();
        // the later arrival from node 1 carries a staler packet and is dropped
        assert!((oracle.age(3, 2.0) - 1.0).abs() < 1e-12);
        assert!((oracle.age(3, 1.3) - 0.3).abs() < 1e-12);
        assert_eq!(oracle.age(3, 1.1), 1.1);
        let engine = replay(&net, &trajs, 2.0).unwrap();
        assert_eq!(engine.ages[3], oracle.age(3, 2.0));
    }

    #[test]
    fn cycle_terminates_and_matches_engine() {
        let net = Network::new(
            3,
            vec![
                Link::new(0, 1, D::exponential(1.0).unwrap(), 0),
                Link::new(1, 2, D::exponential(2.0).unwrap(), 0),
                Link::new(2, 1, D::exponential(3.0).unwrap(), 1),
            ],
        )
        .unwrap();
        let snap = simulate_recorded(&net, 200.0, 4);
        let trajs = snap.trajectories.unwrap();
        let mut oracle = GeneralOracle::new(&net, &trajs).unwrap();
        for node in 0..3 {
            assert!((oracle.age(node, 200.0) - snap.ages[node]).abs() <= 1e-9);
        }
    }

    #[test]
    fn long_horizon_does_not_blow_the_stack() {
        let net = Network::chain(&[D::exponential(5.0).unwrap(); 4]);
        let snap = simulate_recorded(&net, 20_000.0, 1);
        let trajs = snap.trajectories.unwrap();
        let x = general_recursive_age(&net, &trajs, 4, 20_000.0).unwrap();
        assert!((x - snap.ages[4]).abs() <= 1e-9);
    }
}
